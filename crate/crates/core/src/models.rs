//! Model parameterizations and exact evaluation for basic, interpolated, and
//! non-emitting Markov models, plus the conversions between them.
//!
//! The hierarchical parameterization drives everything trained in this crate:
//! each state `x^i` carries one parameter giving the probability of emitting
//! from that state rather than dropping to the order `i-1` suffix state. In
//! the interpolated reading the drop is re-decided independently at every
//! position; in the non-emitting reading the drop consumes no symbol and is
//! permanent until the next emission, which makes the state order a hidden
//! variable carrying unbounded memory.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::corpus::Alphabet;
use crate::counts::{CountStore, CountView};
use crate::estimation;
use crate::tying::TyingScheme;

/// Evaluation semantics of a trained mixture model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Pure maximum-likelihood lookup at the top available order.
    Basic,
    /// State-conditional linear interpolation across orders.
    Interpolated,
    /// Non-emitting order drops; the state order is a hidden variable.
    NonEmitting,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Basic => "basic",
            Mode::Interpolated => "interpolated",
            Mode::NonEmitting => "nonemit",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    StateSpaceTooLarge { states: u64, limit: u64 },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::StateSpaceTooLarge { states, limit } => write!(
                f,
                "state space of {states} contexts exceeds the enumeration limit {limit}"
            ),
        }
    }
}

/// Hierarchical model parameters: per-state emit-vs-drop probabilities and
/// per-state emission distributions.
///
/// Implementations must return `lambda == 1` for the empty state and `0` for
/// states they cannot emit from, which keeps every evaluation a proper
/// probability distribution.
pub trait HierParams {
    fn order(&self) -> usize;
    fn alphabet_size(&self) -> u32;
    /// Probability of emitting from `state` rather than dropping one order.
    fn lambda(&self, state: &[u32]) -> f64;
    /// Emission probability of `y` from `state`.
    fn delta(&self, state: &[u32], y: u32) -> f64;
}

/// Parameters backed by a count view, a tying scheme, and a per-class
/// parameter table; the working form of every trained model.
#[derive(Clone, Copy)]
pub struct TrainedParams<'a> {
    pub order: usize,
    pub view: CountView<'a>,
    pub tying: &'a TyingScheme,
    pub lambda: &'a [f64],
}

impl<'a> HierParams for TrainedParams<'a> {
    #[inline]
    fn order(&self) -> usize {
        self.order
    }

    #[inline]
    fn alphabet_size(&self) -> u32 {
        self.view.alphabet_size()
    }

    #[inline]
    fn lambda(&self, state: &[u32]) -> f64 {
        if state.is_empty() {
            return 1.0;
        }
        // a state with no observed emission forces the drop: its emission row
        // is not a distribution, so emitting from it would leak probability
        if !self.view.observed(state) {
            return 0.0;
        }
        self.tying
            .class_of(state)
            .map_or(0.0, |c| self.lambda[c as usize])
    }

    #[inline]
    fn delta(&self, state: &[u32], y: u32) -> f64 {
        self.view.ml_delta(state, y)
    }
}

/// Dense per-order emission tables over the full state space; the explicit
/// form used by conversions and small constructed models.
#[derive(Clone, Debug, PartialEq)]
pub struct TableDelta {
    k: u32,
    /// `tables[i]` holds `k^i` rows of `k` probabilities.
    tables: Vec<Vec<f64>>,
}

impl TableDelta {
    /// Uniform emission at every order `0..=n`.
    pub fn uniform(k: u32, order: usize) -> TableDelta {
        let mut tables = Vec::with_capacity(order + 1);
        let mut rows = 1usize;
        for _ in 0..=order {
            tables.push(vec![1.0 / k as f64; rows * k as usize]);
            rows *= k as usize;
        }
        TableDelta { k, tables }
    }

    #[inline]
    pub fn alphabet_size(&self) -> u32 {
        self.k
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.tables.len() - 1
    }

    fn row_start(&self, state: &[u32]) -> usize {
        let idx = state
            .iter()
            .fold(0usize, |acc, &s| acc * self.k as usize + s as usize);
        idx * self.k as usize
    }

    #[inline]
    pub fn prob(&self, state: &[u32], y: u32) -> f64 {
        self.tables[state.len()][self.row_start(state) + y as usize]
    }

    pub fn set(&mut self, state: &[u32], y: u32, p: f64) {
        let start = self.row_start(state);
        self.tables[state.len()][start + y as usize] = p;
    }

    pub fn set_row(&mut self, state: &[u32], row: &[f64]) {
        assert_eq!(row.len(), self.k as usize);
        let start = self.row_start(state);
        self.tables[state.len()][start..start + self.k as usize].copy_from_slice(row);
    }
}

/// Hierarchical parameters in explicit table form.
#[derive(Clone, Debug)]
pub struct TableParams {
    pub order: usize,
    pub delta: TableDelta,
    /// Per-state emit probabilities; missing states fall back to
    /// `default_lambda`. The empty state is always 1.
    pub lambda: HashMap<Box<[u32]>, f64>,
    pub default_lambda: f64,
}

impl TableParams {
    pub fn new(order: usize, delta: TableDelta, default_lambda: f64) -> TableParams {
        TableParams {
            order,
            delta,
            lambda: HashMap::new(),
            default_lambda,
        }
    }

    pub fn set_lambda(&mut self, state: &[u32], value: f64) {
        self.lambda.insert(Box::from(state), value);
    }
}

impl HierParams for TableParams {
    fn order(&self) -> usize {
        self.order
    }

    fn alphabet_size(&self) -> u32 {
        self.delta.alphabet_size()
    }

    fn lambda(&self, state: &[u32]) -> f64 {
        if state.is_empty() {
            return 1.0;
        }
        self.lambda
            .get(state)
            .copied()
            .unwrap_or(self.default_lambda)
    }

    fn delta(&self, state: &[u32], y: u32) -> f64 {
        self.delta.prob(state, y)
    }
}

/// Mixture weights over orders `0..=top` implied by the hierarchical
/// parameters at this history: `w(i) = lambda_i * prod_{j>i} (1 - lambda_j)`.
/// The weights sum to 1 because the empty state always emits.
pub fn lambda_weights<P: HierParams>(params: &P, history: &[u32]) -> Vec<f64> {
    let top = params.order().min(history.len());
    let mut weights = vec![0.0; top + 1];
    let mut keep = 1.0; // probability that no higher order emitted
    for i in (0..=top).rev() {
        let state = &history[history.len() - i..];
        let lam = params.lambda(state);
        weights[i] = keep * lam;
        keep *= 1.0 - lam;
    }
    weights
}

/// Interpolated conditional: the weight-mixed emission across orders.
pub fn interp_conditional<P: HierParams>(params: &P, history: &[u32], y: u32) -> f64 {
    let top = params.order().min(history.len());
    let mut keep = 1.0;
    let mut p = 0.0;
    for i in (0..=top).rev() {
        let state = &history[history.len() - i..];
        let lam = params.lambda(state);
        if lam > 0.0 {
            p += keep * lam * params.delta(state, y);
        }
        keep *= 1.0 - lam;
    }
    p
}

/// log2 probability of `x` under the interpolated reading, starting from the
/// empty context.
pub fn interp_string_log2<P: HierParams>(params: &P, x: &[u32]) -> f64 {
    let mut bits = 0.0;
    for t in 0..x.len() {
        bits += libm::log2(interp_conditional(params, &x[..t], x[t]));
    }
    bits
}

/// Probability of the string `x` after the context `ctx` under the
/// non-emitting reading; exact, in extended-exponent arithmetic.
pub fn nonemit_string_prob<P: HierParams>(params: &P, ctx: &[u32], x: &[u32]) -> f64 {
    estimation::nonemit_total(params, ctx, x).to_f64()
}

/// log2 variant of [`nonemit_string_prob`] for long strings.
pub fn nonemit_string_log2<P: HierParams>(params: &P, ctx: &[u32], x: &[u32]) -> f64 {
    estimation::nonemit_total(params, ctx, x).log2()
}

/// A basic Markov model as explicit tables, including the short-history
/// tables used at the start of a string.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseBasic {
    pub order: usize,
    pub delta: TableDelta,
}

impl DenseBasic {
    pub fn conditional(&self, history: &[u32], y: u32) -> f64 {
        let top = self.order.min(history.len());
        self.delta.prob(&history[history.len() - top..], y)
    }

    pub fn string_prob(&self, x: &[u32]) -> f64 {
        let mut p = 1.0;
        for t in 0..x.len() {
            p *= self.conditional(&x[..t], x[t]);
        }
        p
    }
}

/// Basic-model conditional served straight from counts: the maximum
/// likelihood estimate at the top available order, zero for unseen contexts
/// (the add-one floor applies only at order zero).
pub fn basic_conditional(view: &CountView<'_>, order: usize, history: &[u32], y: u32) -> f64 {
    let top = order.min(history.len());
    view.ml_delta(&history[history.len() - top..], y)
}

/// Fills every state of every order with the corresponding symbol ids and
/// calls `f` once per state, in lexicographic order.
pub fn for_each_state(k: u32, len: usize, mut f: impl FnMut(&[u32])) {
    let mut state = vec![0u32; len];
    loop {
        f(&state);
        // odometer increment
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            state[pos] += 1;
            if state[pos] < k {
                break;
            }
            state[pos] = 0;
        }
    }
}

/// Converts an interpolated model into the equivalent basic model of the same
/// order by tabulating its conditionals over the full state space.
pub fn to_basic<P: HierParams>(params: &P, limit: u64) -> Result<DenseBasic, ModelError> {
    let k = params.alphabet_size();
    let n = params.order();
    let states = (k as u64).checked_pow(n as u32).unwrap_or(u64::MAX);
    if states > limit {
        return Err(ModelError::StateSpaceTooLarge { states, limit });
    }
    let mut delta = TableDelta::uniform(k, n);
    for i in 0..=n {
        for_each_state(k, i, |state| {
            for y in 0..k {
                delta.set(state, y, interp_conditional(params, state, y));
            }
        });
    }
    Ok(DenseBasic { order: n, delta })
}

/// Wraps a basic model as a non-emitting model assigning identical
/// probability to every string: every state emits with certainty, so the
/// hidden order always sits at the top.
pub fn nonemit_from_basic(basic: &DenseBasic) -> TableParams {
    TableParams::new(basic.order, basic.delta.clone(), 1.0)
}

/// The order-2 binary non-emitting model whose hidden state order remembers
/// the first symbol of the string forever: after an initial `0` the model
/// climbs to (and stays at) order 2, while after an initial `1` it is forced
/// down to order 0 and can never climb back. On strings `A 1* A` no
/// fixed-order model reproduces its predictions.
///
/// `d0_one` is the order-0 probability of symbol `1`; `d2_one` is the
/// order-2 probability of `1` after the state `11`.
pub fn first_symbol_memory_model(d0_one: f64, d2_one: f64) -> TableParams {
    let mut delta = TableDelta::uniform(2, 2);
    delta.set_row(&[], &[1.0 - d0_one, d0_one]);
    delta.set_row(&[1, 1], &[1.0 - d2_one, d2_one]);
    let mut params = TableParams::new(2, delta, 1.0);
    params.set_lambda(&[0], 1.0);
    params.set_lambda(&[1], 0.0);
    params
}

/// The general (non-hierarchical) interpolated model: each state of order
/// `i` carries its own distribution over the orders `0..=i` it may emit from.
/// Evaluation-only; estimation targets the hierarchical form.
#[derive(Clone, Debug)]
pub struct GeneralInterp {
    pub order: usize,
    pub delta: TableDelta,
    /// `rows[state][l]` = probability of emitting from the order-`l` suffix.
    pub rows: HashMap<Box<[u32]>, Vec<f64>>,
}

impl GeneralInterp {
    pub fn conditional(&self, history: &[u32], y: u32) -> f64 {
        let top = self.order.min(history.len());
        let state = &history[history.len() - top..];
        let row = &self.rows[state];
        let mut p = 0.0;
        for (l, &w) in row.iter().enumerate() {
            p += w * self.delta.prob(&state[state.len() - l..], y);
        }
        p
    }

    pub fn string_prob(&self, x: &[u32]) -> f64 {
        let mut p = 1.0;
        for t in 0..x.len() {
            p *= self.conditional(&x[..t], x[t]);
        }
        p
    }
}

/// The state-independent interpolated model: one shared distribution over
/// orders, renormalized over the orders available in a short history.
#[derive(Clone, Debug)]
pub struct StateIndependentInterp {
    pub order: usize,
    pub delta: TableDelta,
    /// Shared mixture over orders `0..=order`; must sum to 1.
    pub weights: Vec<f64>,
}

impl StateIndependentInterp {
    pub fn conditional(&self, history: &[u32], y: u32) -> f64 {
        let top = self.order.min(history.len());
        let avail: f64 = self.weights[..=top].iter().sum();
        let mut p = 0.0;
        for l in 0..=top {
            let state = &history[history.len() - l..];
            p += self.weights[l] / avail * self.delta.prob(state, y);
        }
        p
    }

    pub fn string_prob(&self, x: &[u32]) -> f64 {
        let mut p = 1.0;
        for t in 0..x.len() {
            p *= self.conditional(&x[..t], x[t]);
        }
        p
    }
}

/// The general (non-hierarchical) non-emitting model: from an order-`i` state
/// the model jumps to any order `l <= i`, emits there, and continues from the
/// grown state. Evaluation-only.
#[derive(Clone, Debug)]
pub struct GeneralNonEmit {
    pub order: usize,
    pub delta: TableDelta,
    /// `rows[state][l]` = probability of jumping to order `l` and emitting.
    pub rows: HashMap<Box<[u32]>, Vec<f64>>,
}

impl GeneralNonEmit {
    /// Probability of `x` after `ctx`, by a lattice over (position, hidden
    /// order).
    pub fn string_prob(&self, ctx: &[u32], x: &[u32]) -> f64 {
        use crate::numeric::ExtScalar;
        let n = self.order;
        let mut full = Vec::with_capacity(ctx.len() + x.len());
        full.extend_from_slice(ctx);
        full.extend_from_slice(x);
        let start = ctx.len().min(n);
        let mut cur = vec![ExtScalar::ZERO; n + 1];
        cur[start] = ExtScalar::ONE;
        for t in 0..x.len() {
            let pos = ctx.len() + t;
            let top = n.min(pos);
            let mut next = vec![ExtScalar::ZERO; n + 1];
            for i in 0..=top {
                if cur[i].is_zero() {
                    continue;
                }
                let state = &full[pos - i..pos];
                let row = &self.rows[state];
                for (l, &w) in row.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let d = self.delta.prob(&state[state.len() - l..], full[pos]);
                    let grown = (l + 1).min(n);
                    next[grown] += cur[i].mul_f64(w * d);
                }
            }
            cur = next;
        }
        cur.iter()
            .fold(ExtScalar::ZERO, |acc, &v| acc + v)
            .to_f64()
    }
}

/// A trained mixture model: the user-facing bundle of alphabet, counts,
/// tying, and per-class parameters, evaluated under `mode`.
#[derive(Clone, Debug)]
pub struct MixtureModel {
    pub mode: Mode,
    pub alphabet: Alphabet,
    pub counts: CountStore,
    pub tying: TyingScheme,
    pub lambda: Vec<f64>,
}

impl MixtureModel {
    pub fn order(&self) -> usize {
        self.counts.order()
    }

    pub fn params(&self) -> TrainedParams<'_> {
        TrainedParams {
            order: self.counts.order(),
            view: self.counts.view_all(),
            tying: &self.tying,
            lambda: &self.lambda,
        }
    }

    /// Next-symbol conditional given the full history seen so far.
    ///
    /// For the non-emitting mode this runs a forward pass over the whole
    /// history; evaluation over long texts should use the incremental paths
    /// in `analysis` instead.
    pub fn conditional(&self, history: &[u32], y: u32) -> f64 {
        match self.mode {
            Mode::Basic => basic_conditional(&self.counts.view_all(), self.order(), history, y),
            Mode::Interpolated => interp_conditional(&self.params(), history, y),
            Mode::NonEmitting => {
                let p = self.params();
                let with = estimation::nonemit_total(&p, &[], &{
                    let mut v = history.to_vec();
                    v.push(y);
                    v
                });
                let without = estimation::nonemit_total(&p, &[], history);
                with.ratio(without)
            }
        }
    }

    /// log2 probability of one block of symbols, starting from the empty
    /// context.
    pub fn block_log2(&self, block: &[u32]) -> f64 {
        match self.mode {
            Mode::Basic => {
                let view = self.counts.view_all();
                let mut bits = 0.0;
                for t in 0..block.len() {
                    bits += libm::log2(basic_conditional(&view, self.order(), &block[..t], block[t]));
                }
                bits
            }
            Mode::Interpolated => interp_string_log2(&self.params(), block),
            Mode::NonEmitting => nonemit_string_log2(&self.params(), &[], block),
        }
    }
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use crate::corpus::build_char_corpus;
    use crate::counts::CountStore;
    use crate::tying::untied_scheme;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn weights_all_top_when_lambda_one() {
        let params = TableParams::new(2, TableDelta::uniform(2, 2), 1.0);
        let w = lambda_weights(&params, &[0, 1]);
        assert_eq!(w, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn weights_split_evenly_at_half() {
        let mut params = TableParams::new(1, TableDelta::uniform(2, 1), 0.0);
        params.set_lambda(&[0], 0.5);
        params.set_lambda(&[1], 0.5);
        let w = lambda_weights(&params, &[0]);
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn weights_product_form() {
        let mut params = TableParams::new(2, TableDelta::uniform(2, 2), 0.0);
        params.set_lambda(&[1], 0.6);
        params.set_lambda(&[0, 1], 0.3);
        let w = lambda_weights(&params, &[0, 1]);
        assert!(close(w[2], 0.3, 1e-15));
        assert!(close(w[1], 0.42, 1e-15));
        assert!(close(w[0], 0.28, 1e-15));
        assert!(close(w.iter().sum::<f64>(), 1.0, 1e-15));
    }

    #[test]
    fn interp_conditional_mixes() {
        // order 1, lambda("a") = 0.5, delta1(b|a) = 1, delta0(b) = 0.5
        let mut delta = TableDelta::uniform(2, 1);
        delta.set_row(&[0], &[0.0, 1.0]);
        let mut params = TableParams::new(1, delta, 0.0);
        params.set_lambda(&[0], 0.5);
        assert!(close(interp_conditional(&params, &[0], 1), 0.75, 1e-15));
    }

    #[test]
    fn interp_degenerates_to_order0() {
        let mut delta = TableDelta::uniform(2, 2);
        delta.set_row(&[], &[0.3, 0.7]);
        let params = TableParams::new(2, delta, 0.0); // all drops above order 0
        assert!(close(interp_conditional(&params, &[0, 1], 1), 0.7, 1e-15));
    }

    #[test]
    fn basic_conditional_from_counts() {
        let (a, c) = build_char_corpus("abab").unwrap();
        let s = CountStore::build(&c, 1, a.len(), false);
        let v = s.view_all();
        assert_eq!(basic_conditional(&v, 1, &[1, 0], 1), 1.0); // p(b | ..a)
    }

    #[test]
    fn basic_order0_is_uniformish() {
        let delta = TableDelta::uniform(2, 0);
        let b = DenseBasic { order: 0, delta };
        assert_eq!(b.conditional(&[1, 0, 1], 0), 0.5);
        assert_eq!(b.conditional(&[], 0), 0.5);
    }

    #[test]
    fn to_basic_binary_bigram_table() {
        let mut delta = TableDelta::uniform(2, 1);
        delta.set_row(&[0], &[0.2, 0.8]);
        delta.set_row(&[1], &[0.9, 0.1]);
        delta.set_row(&[], &[0.5, 0.5]);
        let mut params = TableParams::new(1, delta, 0.0);
        params.set_lambda(&[0], 0.25);
        params.set_lambda(&[1], 1.0);
        let basic = to_basic(&params, 1_000_000).unwrap();
        // row for state "0": 0.25 * [0.2, 0.8] + 0.75 * [0.5, 0.5]
        assert!(close(basic.conditional(&[0], 0), 0.25 * 0.2 + 0.75 * 0.5, 1e-15));
        assert!(close(basic.conditional(&[1], 1), 0.1, 1e-15));
        // short-history table equals the order-0 mixture (= delta0 here)
        assert!(close(basic.conditional(&[], 0), 0.5, 1e-15));
    }

    #[test]
    fn to_basic_matches_on_all_strings() {
        let mut delta = TableDelta::uniform(2, 2);
        delta.set_row(&[], &[0.4, 0.6]);
        delta.set_row(&[0], &[0.7, 0.3]);
        delta.set_row(&[1, 0], &[0.1, 0.9]);
        let mut params = TableParams::new(2, delta, 0.5);
        params.set_lambda(&[0], 0.8);
        params.set_lambda(&[0, 1], 0.2);
        let basic = to_basic(&params, 1_000_000).unwrap();
        for t in 1..=8 {
            for_each_state(2, t, |x| {
                let pi = {
                    let mut p = 1.0;
                    for j in 0..x.len() {
                        p *= interp_conditional(&params, &x[..j], x[j]);
                    }
                    p
                };
                let pb = basic.string_prob(x);
                assert!(close(pi, pb, 1e-12), "string {x:?}: {pi} vs {pb}");
            });
        }
    }

    #[test]
    fn to_basic_of_order0_is_delta0() {
        let mut delta = TableDelta::uniform(3, 0);
        delta.set_row(&[], &[0.2, 0.3, 0.5]);
        let params = TableParams::new(0, delta.clone(), 1.0);
        let basic = to_basic(&params, 10).unwrap();
        for y in 0..3 {
            assert!(close(basic.conditional(&[], y), delta.prob(&[], y), 1e-15));
        }
    }

    #[test]
    fn to_basic_guards_state_space() {
        let params = TableParams::new(30, TableDelta::uniform(2, 0), 1.0);
        // 2^30 states with limit 1e6
        assert!(matches!(
            to_basic(&params, 1_000_000),
            Err(ModelError::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn nonemit_wrap_of_uniform_basic() {
        let basic = DenseBasic {
            order: 0,
            delta: TableDelta::uniform(2, 0),
        };
        let ne = nonemit_from_basic(&basic);
        for t in 1..=6 {
            for_each_state(2, t, |x| {
                let want = libm::exp2(-(t as f64));
                assert!(close(nonemit_string_prob(&ne, &[], x), want, 1e-12));
            });
        }
    }

    #[test]
    fn nonemit_wrap_matches_trained_bigram() {
        let (a, c) = build_char_corpus("abab").unwrap();
        let s = CountStore::build(&c, 1, a.len(), false);
        let v = s.view_all();
        let k = a.len();
        // tabulate the count-backed basic model
        let mut delta = TableDelta::uniform(k, 1);
        for i in 0..=1usize {
            for_each_state(k, i, |st| {
                for y in 0..k {
                    delta.set(st, y, basic_conditional(&v, 1, st, y));
                }
            });
        }
        let basic = DenseBasic { order: 1, delta };
        let ne = nonemit_from_basic(&basic);
        for t in 1..=8 {
            for_each_state(k, t, |x| {
                let pb = basic.string_prob(x);
                let pn = nonemit_string_prob(&ne, &[], x);
                assert!(close(pb, pn, 1e-12), "string {x:?}");
            });
        }
    }

    #[test]
    fn all_lambda_one_equals_basic_chain() {
        let mut delta = TableDelta::uniform(2, 2);
        delta.set_row(&[], &[0.25, 0.75]);
        delta.set_row(&[1], &[0.6, 0.4]);
        let params = TableParams::new(2, delta.clone(), 1.0);
        let basic = DenseBasic { order: 2, delta };
        for_each_state(2, 5, |x| {
            assert!(close(
                nonemit_string_prob(&params, &[], x),
                basic.string_prob(x),
                1e-12
            ));
        });
    }

    #[test]
    fn first_symbol_memory_routes_predictions() {
        let m = first_symbol_memory_model(0.9, 0.1);
        // strings 0 1 1 ... 1 y: final symbol predicted at order 2 from "11"
        // strings 1 1 1 ... 1 y: final symbol predicted at order 0
        for t in 4..=10usize {
            let mut zero_prefix = vec![1u32; t];
            zero_prefix[0] = 0;
            let mut with_one = zero_prefix.clone();
            with_one[t - 1] = 1;
            let base: Vec<u32> = zero_prefix[..t - 1].to_vec();
            let p_tail = nonemit_string_prob(&m, &[], &with_one)
                / nonemit_string_prob(&m, &[], &base);
            assert!(close(p_tail, 0.1, 1e-12), "T={t}: {p_tail}");

            let one_prefix = vec![1u32; t];
            let base: Vec<u32> = one_prefix[..t - 1].to_vec();
            let p_tail = nonemit_string_prob(&m, &[], &one_prefix)
                / nonemit_string_prob(&m, &[], &base);
            assert!(close(p_tail, 0.9, 1e-12), "T={t}: {p_tail}");
        }
    }

    #[test]
    fn trained_params_pin_lambda_rules() {
        let (a, c) = build_char_corpus("abab").unwrap();
        let s = CountStore::build(&c, 2, a.len(), false);
        let tying = untied_scheme(&s);
        let lambda = vec![0.5; tying.class_count() as usize];
        let p = TrainedParams {
            order: 2,
            view: s.view_all(),
            tying: &tying,
            lambda: &lambda,
        };
        assert_eq!(p.lambda(&[]), 1.0);
        assert_eq!(p.lambda(&[0]), 0.5);
        // novel state: never seen
        assert_eq!(p.lambda(&[2, 2]), 0.0);
        // seen but never extended ("b" at the very end has... "b" extends once;
        // use the final "ab" at order 2 which never extends? it extends once
        // at t=2. "bb" is genuinely unseen.)
        assert_eq!(p.lambda(&[1, 1]), 0.0);
    }

    #[test]
    fn general_interp_conditional_normalizes() {
        let mut rows: HashMap<Box<[u32]>, Vec<f64>> = HashMap::new();
        rows.insert(Box::from(&[][..]), vec![1.0]);
        rows.insert(Box::from(&[0u32][..]), vec![0.3, 0.7]);
        rows.insert(Box::from(&[1u32][..]), vec![0.9, 0.1]);
        let mut delta = TableDelta::uniform(2, 1);
        delta.set_row(&[0], &[0.25, 0.75]);
        let m = GeneralInterp {
            order: 1,
            delta,
            rows,
        };
        for h in [&[][..], &[0u32][..], &[1u32][..]] {
            let total: f64 = (0..2).map(|y| m.conditional(h, y)).sum();
            assert!(close(total, 1.0, 1e-12));
        }
    }

    #[test]
    fn state_independent_renormalizes_short_history() {
        let m = StateIndependentInterp {
            order: 2,
            delta: TableDelta::uniform(2, 2),
            weights: vec![0.2, 0.3, 0.5],
        };
        let total: f64 = (0..2).map(|y| m.conditional(&[0], y)).sum();
        assert!(close(total, 1.0, 1e-12));
    }
}
