//! Extended-range positive scalar arithmetic.
//!
//! Forward/backward lattice values over megabyte strings fall far below the
//! smallest positive `f64`, so probabilities are carried as a double-precision
//! mantissa in `[1, 2)` paired with a wide integer exponent. Multiplication
//! adds exponents exactly; addition aligns exponents and drops addends that
//! fall below mantissa precision, the same guard a log-domain `log(x + y)`
//! needs to avoid underflow in `exp()`.

use core::cmp::Ordering;
use core::fmt;

/// Exponent gap beyond which the smaller addend cannot move the sum.
///
/// A mantissa in `[1, 2)` scaled by `2^-55` is below half an ulp of any
/// mantissa in `[1, 2)`, so a correctly rounded sum equals the larger operand.
const ADD_GUARD_BITS: i64 = 55;

/// Exponent magnitude treated as out of design range.
const EXP_LIMIT: i64 = i64::MAX / 4;

/// A non-negative scalar `mantissa * 2^exponent` with `mantissa` in `[1, 2)`,
/// or exactly zero (`mantissa == 0`, `exponent == 0`).
#[derive(Clone, Copy, Debug)]
pub struct ExtScalar {
    mant: f64,
    exp: i64,
}

impl ExtScalar {
    pub const ZERO: ExtScalar = ExtScalar { mant: 0.0, exp: 0 };
    pub const ONE: ExtScalar = ExtScalar { mant: 1.0, exp: 0 };

    /// Builds from an ordinary non-negative finite double.
    ///
    /// Panics on negative, NaN, or infinite input; those are programming
    /// errors, not data conditions.
    pub fn from_f64(value: f64) -> ExtScalar {
        assert!(
            value >= 0.0 && value.is_finite(),
            "ExtScalar requires a finite non-negative value, got {value}"
        );
        normalize(value, 0)
    }

    /// Builds `mantissa * 2^exponent` directly, renormalizing as needed.
    pub fn with_exponent(mantissa: f64, exponent: i64) -> ExtScalar {
        assert!(
            mantissa >= 0.0 && mantissa.is_finite(),
            "ExtScalar requires a finite non-negative mantissa, got {mantissa}"
        );
        normalize(mantissa, exponent)
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.mant == 0.0
    }

    #[inline]
    pub fn mantissa(&self) -> f64 {
        self.mant
    }

    #[inline]
    pub fn exponent(&self) -> i64 {
        self.exp
    }

    /// `self * p` for an ordinary probability-sized factor.
    #[inline]
    pub fn mul_f64(self, p: f64) -> ExtScalar {
        debug_assert!(p >= 0.0 && p.is_finite());
        if self.is_zero() || p == 0.0 {
            return ExtScalar::ZERO;
        }
        normalize(self.mant * p, self.exp)
    }

    /// `log2` of the value; zero maps to `f64::NEG_INFINITY`.
    #[inline]
    pub fn log2(self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        libm::log2(self.mant) + self.exp as f64
    }

    /// Collapses to an ordinary double, flushing to zero below `f64` range
    /// and to infinity above it. Intended for ratios and posteriors whose
    /// true magnitude is representable.
    pub fn to_f64(self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if self.exp < -1100 {
            return 0.0;
        }
        if self.exp > 1023 {
            return f64::INFINITY;
        }
        self.mant * libm::exp2(self.exp as f64)
    }

    /// `self / other` as an ordinary double; the workhorse for posterior
    /// masses where the ratio is known to be of ordinary size.
    #[inline]
    pub fn ratio(self, other: ExtScalar) -> f64 {
        (self / other).to_f64()
    }
}

impl core::ops::Mul for ExtScalar {
    type Output = ExtScalar;

    /// Product; exponent arithmetic exact.
    #[inline]
    fn mul(self, other: ExtScalar) -> ExtScalar {
        if self.is_zero() || other.is_zero() {
            return ExtScalar::ZERO;
        }
        // mantissa product lies in [1, 4): renormalization shifts at most one bit
        normalize(self.mant * other.mant, checked_exp(self.exp + other.exp))
    }
}

impl core::ops::Add for ExtScalar {
    type Output = ExtScalar;

    /// Sum. When the exponent gap exceeds mantissa precision the result is
    /// the larger operand.
    #[inline]
    fn add(self, other: ExtScalar) -> ExtScalar {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= other.exp {
            (self, other)
        } else {
            (other, self)
        };
        let gap = hi.exp - lo.exp;
        if gap >= ADD_GUARD_BITS {
            return hi;
        }
        // 2^-gap with gap in [0, 55): exact as an f64 scale factor
        let scale = f64::from_bits(((1023 - gap) as u64) << 52);
        normalize(hi.mant + lo.mant * scale, hi.exp)
    }
}

impl core::ops::AddAssign for ExtScalar {
    #[inline]
    fn add_assign(&mut self, other: ExtScalar) {
        *self = *self + other;
    }
}

impl core::ops::Div for ExtScalar {
    type Output = ExtScalar;

    /// Quotient; the divisor must be nonzero.
    #[inline]
    fn div(self, other: ExtScalar) -> ExtScalar {
        assert!(!other.is_zero(), "ExtScalar division by zero");
        if self.is_zero() {
            return ExtScalar::ZERO;
        }
        // quotient of mantissas lies in (1/2, 2)
        normalize(self.mant / other.mant, checked_exp(self.exp - other.exp))
    }
}

#[inline]
fn checked_exp(e: i64) -> i64 {
    assert!(
        e.abs() < EXP_LIMIT,
        "ExtScalar exponent out of design range: {e}"
    );
    e
}

/// Renormalizes `m * 2^e` so the mantissa lies in `[1, 2)` or is exactly zero.
#[inline]
fn normalize(m: f64, e: i64) -> ExtScalar {
    if m == 0.0 {
        return ExtScalar::ZERO;
    }
    let mut m = m;
    let mut e = e;
    let mut bits = m.to_bits();
    if (bits >> 52) & 0x7ff == 0 {
        // subnormal input: scale into the normal range first
        m *= f64::from_bits((1023u64 + 64) << 52);
        e -= 64;
        bits = m.to_bits();
    }
    let raw = ((bits >> 52) & 0x7ff) as i64;
    let mant = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | (1023u64 << 52));
    ExtScalar {
        mant,
        exp: checked_exp(e + raw - 1023),
    }
}

impl PartialEq for ExtScalar {
    fn eq(&self, other: &Self) -> bool {
        self.mant == other.mant && self.exp == other.exp
    }
}

impl PartialOrd for ExtScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.is_zero() && other.is_zero() {
            return Some(Ordering::Equal);
        }
        if self.is_zero() {
            return Some(Ordering::Less);
        }
        if other.is_zero() {
            return Some(Ordering::Greater);
        }
        match self.exp.cmp(&other.exp) {
            Ordering::Equal => self.mant.partial_cmp(&other.mant),
            ord => Some(ord),
        }
    }
}

impl fmt::Display for ExtScalar {
    /// Decimal `log2=<value>` form used in logs and model files.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            write!(f, "log2=-inf")
        } else {
            write!(f, "log2={:.16e}", self.log2())
        }
    }
}
