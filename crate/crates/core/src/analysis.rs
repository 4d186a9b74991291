//! Scoring and diagnostics: message entropy and perplexity, per-position
//! hidden-order occupancy posteriors, and exhaustive enumeration oracles.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::{Corpus, Unit};
use crate::estimation::{self, DirectPos, Lattice, PosParams};
use crate::models::{HierParams, MixtureModel, Mode};
use crate::numeric::ExtScalar;

/// Default cap on `k^T` for the enumeration oracles.
pub const DEFAULT_ENUM_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    EnumerationTooLarge { strings: u64, limit: u64 },
    WindowOutOfRange { from: usize, to: usize, len: usize },
    EmptyTest,
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::EnumerationTooLarge { strings, limit } => {
                write!(f, "{strings} strings exceed the enumeration limit {limit}")
            }
            AnalysisError::WindowOutOfRange { from, to, len } => {
                write!(f, "window {from}..{to} out of range for a test of {len} symbols")
            }
            AnalysisError::EmptyTest => write!(f, "test corpus is empty"),
        }
    }
}

/// Evaluation summary: bits per symbol and the equivalent perplexity.
#[derive(Clone, Debug)]
pub struct Report {
    pub model: String,
    pub unit: Unit,
    pub symbol_count: usize,
    pub bits_per_symbol: f64,
    pub perplexity: f64,
}

impl Report {
    pub fn from_bits(model: String, unit: Unit, symbol_count: usize, total_log2: f64) -> Report {
        let bits = -total_log2 / symbol_count as f64;
        Report {
            model,
            unit,
            symbol_count,
            bits_per_symbol: bits,
            perplexity: libm::exp2(bits),
        }
    }
}

/// Test message entropy of a mixture model: `-log2 p(test) / v`, evaluated
/// block by block from the empty context.
pub fn message_entropy(model: &MixtureModel, test: &Corpus, descriptor: &str) -> Report {
    let mut total_log2 = 0.0;
    for b in 0..test.num_blocks() {
        total_log2 += model.block_log2(test.block(b).expect("block id in range"));
    }
    Report::from_bits(
        String::from(descriptor),
        model.alphabet.unit(),
        test.len(),
        total_log2,
    )
}

/// Per-position posterior over the hidden state order, reported for the
/// state that actually emits each symbol, together with the per-symbol
/// conditional probability.
#[derive(Clone, Debug)]
pub struct OccupancyTable {
    /// First position of the reported window (0-based).
    pub from: usize,
    /// One column per window position; each column holds orders `0..=n` and
    /// sums to one.
    pub columns: Vec<Vec<f64>>,
    /// Conditional probability of each window symbol given its full prefix.
    pub cond_prob: Vec<f64>,
    /// The window symbols themselves.
    pub symbols: Vec<u32>,
    /// Mean emitting order over the whole test string.
    pub mean_order: f64,
}

/// Occupancy of a non-emitting model over one test block.
fn occupancy_nonemit<P: HierParams>(
    params: &P,
    block: &[u32],
    from: usize,
    to: usize,
) -> OccupancyTable {
    let pp = DirectPos::new(params, &[], block);
    let lattice = Lattice::build(&pp);
    let n = pp.order();
    let totals = estimation::prefix_totals(&pp, &lattice.alpha);
    let mut post = alloc::vec![ExtScalar::ZERO; n + 1];
    let mut columns = Vec::with_capacity(to - from);
    let mut cond_prob = Vec::with_capacity(to - from);
    let mut mean_order = 0.0;
    for t in 0..block.len() {
        let top = pp.top(t);
        // post-drop occupancy, then commit each order's emission mass
        post[top] = lattice.alpha.at(t, top);
        for i in (0..top).rev() {
            post[i] =
                lattice.alpha.at(t, i) + post[i + 1].mul_f64(1.0 - pp.lam(t, i + 1));
        }
        let mut col = alloc::vec![0.0; n + 1];
        for (i, &mass) in post.iter().enumerate().take(top + 1) {
            let lam = pp.lam(t, i);
            if lam == 0.0 || mass.is_zero() {
                continue;
            }
            let grown = (i + 1).min(n);
            col[i] = (mass.mul_f64(lam * pp.del(t, i)) * lattice.beta.at(t + 1, grown))
                .ratio(lattice.total);
        }
        mean_order += col.iter().enumerate().map(|(i, &p)| i as f64 * p).sum::<f64>();
        if t >= from && t < to {
            cond_prob.push(totals[t + 1].ratio(totals[t]));
            columns.push(col);
        }
    }
    OccupancyTable {
        from,
        columns,
        cond_prob,
        symbols: block[from..to].to_vec(),
        mean_order: mean_order / block.len() as f64,
    }
}

/// Occupancy of an interpolated model: each position is its own mixture over
/// orders, so the posterior is the per-position emitting-order posterior.
fn occupancy_interp<P: HierParams>(
    params: &P,
    block: &[u32],
    from: usize,
    to: usize,
) -> OccupancyTable {
    let n = params.order();
    let mut columns = Vec::with_capacity(to - from);
    let mut cond_prob = Vec::with_capacity(to - from);
    let mut mean_order = 0.0;
    for t in 0..block.len() {
        let top = n.min(t);
        let mut col = alloc::vec![0.0; n + 1];
        let mut keep = 1.0;
        let mut p = 0.0;
        for i in (0..=top).rev() {
            let state = &block[t - i..t];
            let lam = params.lambda(state);
            col[i] = keep * lam * params.delta(state, block[t]);
            p += col[i];
            keep *= 1.0 - lam;
        }
        for c in col.iter_mut() {
            *c /= p;
        }
        mean_order += col.iter().enumerate().map(|(i, &q)| i as f64 * q).sum::<f64>();
        if t >= from && t < to {
            cond_prob.push(p);
            columns.push(col);
        }
    }
    OccupancyTable {
        from,
        columns,
        cond_prob,
        symbols: block[from..to].to_vec(),
        mean_order: mean_order / block.len() as f64,
    }
}

/// State-occupancy analysis over `[from, to)` of the test corpus (treated as
/// one string), conditioned on the full test string.
pub fn occupancy(
    model: &MixtureModel,
    test: &Corpus,
    from: usize,
    to: usize,
) -> Result<OccupancyTable, AnalysisError> {
    if from >= to || to > test.len() {
        return Err(AnalysisError::WindowOutOfRange {
            from,
            to,
            len: test.len(),
        });
    }
    let block = test.data();
    let params = model.params();
    Ok(match model.mode {
        Mode::NonEmitting => occupancy_nonemit(&params, block, from, to),
        // basic models pin the top order but the interpolated posterior is
        // still well defined (a point mass)
        Mode::Interpolated | Mode::Basic => occupancy_interp(&params, block, from, to),
    })
}

/// Calls `f` for every string in `A^len`, in lexicographic order.
pub fn enumerate_strings(
    k: u32,
    len: usize,
    limit: u64,
    mut f: impl FnMut(&[u32]),
) -> Result<(), AnalysisError> {
    let strings = (k as u64).checked_pow(len as u32).unwrap_or(u64::MAX);
    if strings > limit {
        return Err(AnalysisError::EnumerationTooLarge { strings, limit });
    }
    crate::models::for_each_state(k, len, &mut f);
    Ok(())
}

/// Sums `p(x^T | T)` over the whole of `A^T`: the normalization oracle.
/// `prob` may be any string-probability function.
pub fn brute_force_total(
    k: u32,
    len: usize,
    limit: u64,
    mut prob: impl FnMut(&[u32]) -> f64,
) -> Result<f64, AnalysisError> {
    let mut total = 0.0;
    enumerate_strings(k, len, limit, |x| total += prob(x))?;
    Ok(total)
}

/// Direct recursive evaluation of the non-emitting string probability,
/// memoized on (position, order). Structured as the defining recursion, it
/// is the independent cross-check for the iterative lattice.
pub fn reference_nonemit_prob<P: HierParams>(params: &P, ctx: &[u32], x: &[u32]) -> f64 {
    struct Memo<'m, P> {
        params: &'m P,
        full: &'m [u32],
        ctx_len: usize,
        n: usize,
        cache: hashbrown::HashMap<(usize, usize), f64>,
    }

    impl<'m, P: HierParams> Memo<'m, P> {
        // probability of generating x[t..] when resting at order i
        fn rest(&mut self, t: usize, i: usize) -> f64 {
            if t == self.full.len() - self.ctx_len {
                return 1.0;
            }
            if let Some(&v) = self.cache.get(&(t, i)) {
                return v;
            }
            let pos = self.ctx_len + t;
            let state = &self.full[pos - i..pos];
            let lam = self.params.lambda(state);
            let mut p = 0.0;
            if lam > 0.0 {
                let d = self.params.delta(state, self.full[pos]);
                if d > 0.0 {
                    let grown = (i + 1).min(self.n);
                    p += lam * d * self.rest(t + 1, grown);
                }
            }
            if i > 0 && lam < 1.0 {
                p += (1.0 - lam) * self.rest(t, i - 1);
            }
            self.cache.insert((t, i), p);
            p
        }
    }

    let mut full = Vec::with_capacity(ctx.len() + x.len());
    full.extend_from_slice(ctx);
    full.extend_from_slice(x);
    let n = params.order();
    let mut memo = Memo {
        params,
        full: &full,
        ctx_len: ctx.len(),
        n,
        cache: hashbrown::HashMap::new(),
    };
    memo.rest(0, n.min(ctx.len()))
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use crate::corpus::build_char_corpus;
    use crate::counts::CountStore;
    use crate::models::{
        first_symbol_memory_model, nonemit_string_prob, TableDelta, TableParams,
    };
    use crate::tying::{untied_scheme, TyingScheme};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn toy_model(mode: Mode) -> (MixtureModel, Corpus) {
        let (alphabet, corpus) = build_char_corpus("abab abab abab").unwrap();
        let counts = CountStore::build(&corpus, 2, alphabet.len(), false);
        let tying = untied_scheme(&counts);
        let lambda = alloc::vec![0.5; tying.class_count() as usize];
        (
            MixtureModel {
                mode,
                alphabet,
                counts,
                tying,
                lambda,
            },
            corpus,
        )
    }

    #[test]
    fn uniform_order0_model_is_one_bit() {
        let (alphabet, corpus) = build_char_corpus("abbaab").unwrap();
        // order-0 basic over {a, b, OOV}: not uniform; build an explicit
        // 2-symbol corpus where add-one smoothing lands at exactly 1/2 is
        // awkward, so check the analytic anchor with a table model instead
        let _ = (&alphabet, &corpus);
        let params = TableParams::new(0, TableDelta::uniform(2, 0), 1.0);
        let x = [0u32, 1, 1, 0];
        let bits = -crate::models::nonemit_string_log2(&params, &[], &x) / x.len() as f64;
        assert!(close(bits, 1.0, 1e-12));
    }

    #[test]
    fn deterministic_model_is_zero_bits() {
        let mut delta = TableDelta::uniform(2, 0);
        delta.set_row(&[], &[1.0, 0.0]);
        let params = TableParams::new(0, delta, 1.0);
        let x = [0u32, 0, 0];
        let bits = -crate::models::nonemit_string_log2(&params, &[], &x) / 3.0;
        assert!(close(bits, 0.0, 1e-12));
    }

    #[test]
    fn report_links_perplexity_to_bits() {
        let (model, corpus) = toy_model(Mode::NonEmitting);
        let report = message_entropy(&model, &corpus, "toy");
        assert!(close(
            report.perplexity,
            libm::exp2(report.bits_per_symbol),
            1e-12
        ));
        assert_eq!(report.symbol_count, corpus.len());
        assert!(report.bits_per_symbol.is_finite());
    }

    #[test]
    fn occupancy_columns_sum_to_one() {
        for mode in [Mode::Interpolated, Mode::NonEmitting] {
            let (model, corpus) = toy_model(mode);
            let table = occupancy(&model, &corpus, 0, corpus.len()).unwrap();
            for (t, col) in table.columns.iter().enumerate() {
                let sum: f64 = col.iter().sum();
                assert!(close(sum, 1.0, 1e-9), "mode {mode:?} t={t}: {sum}");
            }
            assert!(table.mean_order >= 0.0 && table.mean_order <= 2.0);
        }
    }

    #[test]
    fn all_emit_model_occupies_top_order() {
        let (alphabet, corpus) = build_char_corpus("abababab").unwrap();
        let counts = CountStore::build(&corpus, 2, alphabet.len(), false);
        let tying = untied_scheme(&counts);
        let lambda = alloc::vec![1.0; tying.class_count() as usize];
        let model = MixtureModel {
            mode: Mode::NonEmitting,
            alphabet,
            counts,
            tying,
            lambda,
        };
        let table = occupancy(&model, &corpus, 0, corpus.len()).unwrap();
        for (t, col) in table.columns.iter().enumerate() {
            let expect = t.min(2);
            assert!(close(col[expect], 1.0, 1e-9), "t={t}: {col:?}");
        }
    }

    #[test]
    fn occupancy_window_bounds_checked() {
        let (model, corpus) = toy_model(Mode::NonEmitting);
        assert!(occupancy(&model, &corpus, 5, 3).is_err());
        assert!(occupancy(&model, &corpus, 0, corpus.len() + 1).is_err());
    }

    #[test]
    fn brute_force_uniform_binary() {
        let total = brute_force_total(2, 3, 1_000_000, |x| {
            debug_assert_eq!(x.len(), 3);
            0.125
        })
        .unwrap();
        assert!(close(total, 1.0, 1e-12));
    }

    #[test]
    fn brute_force_respects_limit() {
        assert!(matches!(
            brute_force_total(10, 10, 1_000, |_| 0.0),
            Err(AnalysisError::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn memory_model_normalizes() {
        let m = first_symbol_memory_model(0.9, 0.1);
        for t in 1..=6 {
            let total =
                brute_force_total(2, t, 1_000_000, |x| nonemit_string_prob(&m, &[], x)).unwrap();
            assert!(close(total, 1.0, 1e-9), "T={t}: {total}");
        }
    }

    #[test]
    fn reference_recursion_matches_lattice() {
        let m = first_symbol_memory_model(0.8, 0.3);
        crate::models::for_each_state(2, 7, |x| {
            let lat = nonemit_string_prob(&m, &[], x);
            let rec = reference_nonemit_prob(&m, &[], x);
            assert!(close(lat, rec, 1e-12), "string {x:?}");
        });
        // and with a nonempty starting context
        let ctx = [1u32, 0];
        crate::models::for_each_state(2, 4, |x| {
            let lat = nonemit_string_prob(&m, &ctx, x);
            let rec = reference_nonemit_prob(&m, &ctx, x);
            assert!(close(lat, rec, 1e-12), "string {x:?}");
        });
    }

    #[test]
    fn trained_model_normalizes_by_enumeration() {
        for mode in [Mode::Basic, Mode::Interpolated, Mode::NonEmitting] {
            let (model, _) = toy_model(mode);
            let k = model.alphabet.len();
            for t in 1..=4 {
                let total = brute_force_total(k, t, 1_000_000, |x| match model.mode {
                    Mode::Basic => {
                        let v = model.counts.view_all();
                        let mut p = 1.0;
                        for j in 0..x.len() {
                            p *= crate::models::basic_conditional(&v, model.order(), &x[..j], x[j]);
                        }
                        p
                    }
                    Mode::Interpolated => {
                        libm::exp2(crate::models::interp_string_log2(&model.params(), x))
                    }
                    Mode::NonEmitting => nonemit_string_prob(&model.params(), &[], x),
                })
                .unwrap();
                if mode == Mode::Basic {
                    // raw maximum likelihood loses mass through unseen
                    // contexts; it never gains any
                    assert!(total <= 1.0 + 1e-9, "mode {mode:?} T={t}: {total}");
                } else {
                    assert!(close(total, 1.0, 1e-9), "mode {mode:?} T={t}: {total}");
                }
            }
        }
    }

    #[test]
    fn mean_order_definition() {
        // hand-check the mean on a tiny window
        let (model, corpus) = toy_model(Mode::NonEmitting);
        let table = occupancy(&model, &corpus, 0, corpus.len()).unwrap();
        let mut want = 0.0;
        for col in &table.columns {
            want += col.iter().enumerate().map(|(i, &p)| i as f64 * p).sum::<f64>();
        }
        want /= corpus.len() as f64;
        assert!(close(table.mean_order, want, 1e-12));
    }

    #[test]
    fn untrained_scheme_type_is_exported() {
        // TyingScheme::from_entries round-trips through sorted_entries
        let scheme = TyingScheme::from_entries(
            crate::tying::TyingKind::Untied,
            [(alloc::boxed::Box::from(&[1u32][..]), 0u32)],
        );
        assert_eq!(scheme.class_count(), 1);
    }
}
