//! Forward/backward lattices over the hidden state order and the EM loop
//! that estimates the non-emitting (or interpolation) parameters on withheld
//! blocks.
//!
//! Conventions, fixed here and relied on everywhere:
//!
//! * `alpha[t][i]` is the probability of generating the first `t` symbols and
//!   *arriving* at the order-`i` state (by emission, or at `t = 0`), before
//!   any same-time drops. Summing a row gives the prefix probability.
//! * The post-drop occupancy `post[i] = alpha[t][i] + post[i+1] * (1 -
//!   lambda)` is recomputed from `alpha` where needed; `post[i] * lambda_i`
//!   is the mass that emits at order `i`.
//! * `beta[t][i]` is the probability of the suffix given the process rests
//!   at order `i` at time `t`, *including* the time-`t` drop decisions. The
//!   pairing `sum_i alpha[t][i] * beta[t][i]` therefore reproduces the string
//!   probability at every `t`.
//! * `beta[T][i] = 1`: nothing remains after the final emission.
//!
//! Each position's emission grows the state by one symbol, capping at the
//! model order; drops move down one order at a time and, in the non-emitting
//! reading, are never undone within the string.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::{Corpus, CorpusError};
use crate::counts::{CountStore, CountsError};
use crate::models::{HierParams, TrainedParams};
use crate::numeric::ExtScalar;
use crate::tying::TyingScheme;

#[derive(Debug, Clone, PartialEq)]
pub enum EstimationError {
    /// The model assigns zero probability to a training block.
    ZeroProbability,
    /// Cross-estimation needs at least two blocks.
    NeedTwoBlocks,
    Counts(CountsError),
    Corpus(CorpusError),
}

impl fmt::Display for EstimationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimationError::ZeroProbability => {
                write!(f, "model assigns zero probability to a training block")
            }
            EstimationError::NeedTwoBlocks => {
                write!(f, "cross-estimation requires at least two blocks")
            }
            EstimationError::Counts(e) => write!(f, "{e}"),
            EstimationError::Corpus(e) => write!(f, "{e}"),
        }
    }
}

impl From<CountsError> for EstimationError {
    fn from(e: CountsError) -> Self {
        EstimationError::Counts(e)
    }
}

impl From<CorpusError> for EstimationError {
    fn from(e: CorpusError) -> Self {
        EstimationError::Corpus(e)
    }
}

/// Which mixture reading the expectation step follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixSemantics {
    /// The drop chain restarts at the full history suffix every position.
    Interpolated,
    /// Drops persist across positions; the state order is a hidden variable.
    NonEmitting,
}

/// Hierarchical parameters whose states map to accumulator classes.
pub trait EstParams: HierParams {
    /// Accumulator class for a state, or `None` when the state's parameter is
    /// pinned (the empty state, and states novel to the current data).
    fn est_class(&self, state: &[u32]) -> Option<u32>;
    fn class_count(&self) -> usize;
}

impl<'a> EstParams for TrainedParams<'a> {
    fn est_class(&self, state: &[u32]) -> Option<u32> {
        if state.is_empty() || !self.view.observed(state) {
            return None;
        }
        self.tying.class_of(state)
    }

    fn class_count(&self) -> usize {
        self.tying.class_count() as usize
    }
}

/// Per-position parameter lookups backing one lattice computation.
pub trait PosParams {
    /// Number of symbols to generate.
    fn len(&self) -> usize;
    fn order(&self) -> usize;
    /// Hidden order at time 0 (the capped initial-context length).
    fn start_order(&self) -> usize;
    /// Highest reachable order at time `t`.
    fn top(&self, t: usize) -> usize;
    /// Emit-vs-drop parameter of the order-`i` state at time `t`.
    fn lam(&self, t: usize, i: usize) -> f64;
    /// Emission probability of the next symbol from the order-`i` state.
    fn del(&self, t: usize, i: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameter lookups computed on the fly from a model and a symbol buffer.
pub struct DirectPos<'a, P: HierParams> {
    params: &'a P,
    full: Vec<u32>,
    ctx_len: usize,
}

impl<'a, P: HierParams> DirectPos<'a, P> {
    pub fn new(params: &'a P, ctx: &[u32], x: &[u32]) -> Self {
        let mut full = Vec::with_capacity(ctx.len() + x.len());
        full.extend_from_slice(ctx);
        full.extend_from_slice(x);
        DirectPos {
            params,
            full,
            ctx_len: ctx.len(),
        }
    }

    #[inline]
    fn state(&self, t: usize, i: usize) -> &[u32] {
        let pos = self.ctx_len + t;
        &self.full[pos - i..pos]
    }
}

impl<'a, P: HierParams> PosParams for DirectPos<'a, P> {
    fn len(&self) -> usize {
        self.full.len() - self.ctx_len
    }

    fn order(&self) -> usize {
        self.params.order()
    }

    fn start_order(&self) -> usize {
        self.params.order().min(self.ctx_len)
    }

    fn top(&self, t: usize) -> usize {
        self.params.order().min(self.ctx_len + t)
    }

    fn lam(&self, t: usize, i: usize) -> f64 {
        self.params.lambda(self.state(t, i))
    }

    fn del(&self, t: usize, i: usize) -> f64 {
        self.params.delta(self.state(t, i), self.full[self.ctx_len + t])
    }
}

/// Class id sentinel for "no accumulator".
const NO_CLASS: u32 = u32::MAX;

/// Parameter lookups materialized once per block pass: one lambda, delta, and
/// class entry per (position, order). Rebuilding these arrays costs one hash
/// lookup per entry instead of three per lattice visit.
pub struct CachedPos {
    t_len: usize,
    n: usize,
    start: usize,
    lam: Vec<f64>,
    del: Vec<f64>,
    class: Vec<u32>,
}

impl CachedPos {
    pub fn build<P: EstParams>(params: &P, x: &[u32]) -> CachedPos {
        let n = params.order();
        let t_len = x.len();
        let cols = n + 1;
        let mut lam = vec![0.0; t_len * cols];
        let mut del = vec![0.0; t_len * cols];
        let mut class = vec![NO_CLASS; t_len * cols];
        for t in 0..t_len {
            let top = n.min(t);
            for i in 0..=top {
                let state = &x[t - i..t];
                let idx = t * cols + i;
                let l = params.lambda(state);
                lam[idx] = l;
                // pinned states never emit; skip the emission lookup
                if l > 0.0 {
                    del[idx] = params.delta(state, x[t]);
                }
                class[idx] = params.est_class(state).unwrap_or(NO_CLASS);
            }
        }
        CachedPos {
            t_len,
            n,
            start: 0,
            lam,
            del,
            class,
        }
    }

    #[inline]
    fn idx(&self, t: usize, i: usize) -> usize {
        t * (self.n + 1) + i
    }

    #[inline]
    pub fn class(&self, t: usize, i: usize) -> Option<u32> {
        match self.class[self.idx(t, i)] {
            NO_CLASS => None,
            c => Some(c),
        }
    }
}

impl PosParams for CachedPos {
    fn len(&self) -> usize {
        self.t_len
    }

    fn order(&self) -> usize {
        self.n
    }

    fn start_order(&self) -> usize {
        self.start
    }

    fn top(&self, t: usize) -> usize {
        self.n.min(self.start + t)
    }

    fn lam(&self, t: usize, i: usize) -> f64 {
        self.lam[self.idx(t, i)]
    }

    fn del(&self, t: usize, i: usize) -> f64 {
        self.del[self.idx(t, i)]
    }
}

/// A `(T+1) x (n+1)` grid of extended-exponent values.
#[derive(Clone, Debug)]
pub struct Grid {
    cols: usize,
    data: Vec<ExtScalar>,
}

impl Grid {
    fn zeroed(rows: usize, cols: usize) -> Grid {
        Grid {
            cols,
            data: vec![ExtScalar::ZERO; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, t: usize, i: usize) -> ExtScalar {
        self.data[t * self.cols + i]
    }

    #[inline]
    fn set(&mut self, t: usize, i: usize, v: ExtScalar) {
        self.data[t * self.cols + i] = v;
    }
}

/// Post-drop occupancy of one time step, from the arrival row.
fn post_drop(pp: &impl PosParams, alpha: &Grid, t: usize, out: &mut [ExtScalar]) {
    let top = pp.top(t);
    out[top] = alpha.at(t, top);
    for i in (0..top).rev() {
        out[i] = alpha.at(t, i) + out[i + 1].mul_f64(1.0 - pp.lam(t, i + 1));
    }
}

/// Forward pass: fills the arrival grid `alpha`.
pub fn forward(pp: &impl PosParams) -> Grid {
    let n = pp.order();
    let t_len = pp.len();
    let mut alpha = Grid::zeroed(t_len + 1, n + 1);
    alpha.set(0, pp.start_order(), ExtScalar::ONE);
    let mut post = vec![ExtScalar::ZERO; n + 1];
    for t in 0..t_len {
        let top = pp.top(t);
        post_drop(pp, &alpha, t, &mut post);
        for (i, &mass) in post.iter().enumerate().take(top + 1) {
            if mass.is_zero() {
                continue;
            }
            let lam = pp.lam(t, i);
            if lam == 0.0 {
                continue;
            }
            let emit = mass.mul_f64(lam * pp.del(t, i));
            if emit.is_zero() {
                continue;
            }
            let grown = (i + 1).min(n);
            alpha.set(t + 1, grown, alpha.at(t + 1, grown) + emit);
        }
    }
    alpha
}

/// Backward pass: fills the suffix grid `beta`.
pub fn backward(pp: &impl PosParams) -> Grid {
    let n = pp.order();
    let t_len = pp.len();
    let mut beta = Grid::zeroed(t_len + 1, n + 1);
    for i in 0..=pp.top(t_len) {
        beta.set(t_len, i, ExtScalar::ONE);
    }
    for t in (0..t_len).rev() {
        let top = pp.top(t);
        for i in 0..=top {
            let lam = pp.lam(t, i);
            let mut v = ExtScalar::ZERO;
            if lam > 0.0 {
                let grown = (i + 1).min(n);
                v = beta.at(t + 1, grown).mul_f64(lam * pp.del(t, i));
            }
            if i > 0 && lam < 1.0 {
                v += beta.at(t, i - 1).mul_f64(1.0 - lam);
            }
            beta.set(t, i, v);
        }
    }
    beta
}

/// Prefix probability `p(x^t)` for every `t`, read off the arrival rows.
pub fn prefix_totals(pp: &impl PosParams, alpha: &Grid) -> Vec<ExtScalar> {
    (0..=pp.len())
        .map(|t| {
            let mut sum = ExtScalar::ZERO;
            for i in 0..=pp.top(t) {
                sum += alpha.at(t, i);
            }
            sum
        })
        .collect()
}

/// Forward and backward grids plus the string probability.
pub struct Lattice {
    pub alpha: Grid,
    pub beta: Grid,
    pub total: ExtScalar,
}

impl Lattice {
    pub fn build(pp: &impl PosParams) -> Lattice {
        let alpha = forward(pp);
        let beta = backward(pp);
        let mut total = ExtScalar::ZERO;
        for i in 0..=pp.top(pp.len()) {
            total += alpha.at(pp.len(), i);
        }
        Lattice { alpha, beta, total }
    }

    /// String probability recomputed from the backward side.
    pub fn backward_total(&self, pp: &impl PosParams) -> ExtScalar {
        self.beta.at(0, pp.start_order())
    }
}

/// Rolling forward pass: prefix probabilities in `O(n)` space.
pub fn rolling_totals(pp: &impl PosParams) -> Vec<ExtScalar> {
    let n = pp.order();
    let t_len = pp.len();
    let mut totals = Vec::with_capacity(t_len + 1);
    let mut cur = vec![ExtScalar::ZERO; n + 1];
    let mut next = vec![ExtScalar::ZERO; n + 1];
    let mut post = vec![ExtScalar::ZERO; n + 1];
    cur[pp.start_order()] = ExtScalar::ONE;
    totals.push(ExtScalar::ONE);
    for t in 0..t_len {
        let top = pp.top(t);
        post[top] = cur[top];
        for i in (0..top).rev() {
            post[i] = cur[i] + post[i + 1].mul_f64(1.0 - pp.lam(t, i + 1));
        }
        next.iter_mut().for_each(|v| *v = ExtScalar::ZERO);
        for (i, &mass) in post.iter().enumerate().take(top + 1) {
            if mass.is_zero() {
                continue;
            }
            let lam = pp.lam(t, i);
            if lam == 0.0 {
                continue;
            }
            let emit = mass.mul_f64(lam * pp.del(t, i));
            if emit.is_zero() {
                continue;
            }
            let grown = (i + 1).min(n);
            next[grown] += emit;
        }
        core::mem::swap(&mut cur, &mut next);
        let mut sum = ExtScalar::ZERO;
        for i in 0..=pp.top(t + 1) {
            sum += cur[i];
        }
        totals.push(sum);
    }
    totals
}

/// Probability of `x` after `ctx` in the non-emitting reading.
pub fn nonemit_total<P: HierParams>(params: &P, ctx: &[u32], x: &[u32]) -> ExtScalar {
    let pp = DirectPos::new(params, ctx, x);
    rolling_totals(&pp)
        .pop()
        .expect("totals always holds the t = 0 entry")
}

/// Per-class expectation accumulators, initialized to a positive floor so no
/// parameter is ever re-estimated to exactly 0 or 1.
#[derive(Clone, Debug)]
pub struct Accumulators {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl Accumulators {
    pub fn with_floor(classes: usize, floor: f64) -> Accumulators {
        Accumulators {
            plus: vec![floor; classes],
            minus: vec![floor; classes],
        }
    }
}

/// Accumulates emit/drop expectations for one block under the non-emitting
/// reading and returns the block's log2 probability.
fn expectation_nonemit(pp: &CachedPos, acc: &mut Accumulators) -> Result<f64, EstimationError> {
    let lattice = Lattice::build(pp);
    if lattice.total.is_zero() {
        return Err(EstimationError::ZeroProbability);
    }
    let n = pp.order();
    let mut post = vec![ExtScalar::ZERO; n + 1];
    for t in 0..pp.len() {
        let top = pp.top(t);
        post_drop(pp, &lattice.alpha, t, &mut post);
        for i in 1..=top {
            let Some(class) = pp.class(t, i) else { continue };
            let class = class as usize;
            let lam = pp.lam(t, i);
            if lam > 0.0 {
                let grown = (i + 1).min(n);
                let emit =
                    post[i].mul_f64(lam * pp.del(t, i)) * lattice.beta.at(t + 1, grown);
                acc.plus[class] += emit.ratio(lattice.total);
            }
            if lam < 1.0 {
                let drop = post[i].mul_f64(1.0 - lam) * lattice.beta.at(t, i - 1);
                acc.minus[class] += drop.ratio(lattice.total);
            }
        }
    }
    Ok(lattice.total.log2())
}

/// Accumulates expectations for one block under the interpolated reading:
/// every position is its own mixture over orders, so no lattice is needed.
fn expectation_interp(pp: &CachedPos, acc: &mut Accumulators) -> Result<f64, EstimationError> {
    let mut bits = 0.0;
    let n = pp.order();
    let mut weights = vec![0.0; n + 1];
    for t in 0..pp.len() {
        let top = pp.top(t);
        let mut keep = 1.0;
        let mut p = 0.0;
        for i in (0..=top).rev() {
            let lam = pp.lam(t, i);
            weights[i] = keep * lam * pp.del(t, i);
            p += weights[i];
            keep *= 1.0 - lam;
        }
        if p == 0.0 {
            return Err(EstimationError::ZeroProbability);
        }
        bits += libm::log2(p);
        // posterior over the emitting order; drops are everything below
        let mut below = weights[0] / p;
        for j in 1..=top {
            let post = weights[j] / p;
            if let Some(class) = pp.class(t, j) {
                acc.plus[class as usize] += post;
                acc.minus[class as usize] += below;
            }
            below += post;
        }
    }
    Ok(bits)
}

/// One expectation pass over a block, dispatching on the mixture reading.
/// Returns the block's log2 probability under the current parameters.
pub fn expectation_step<P: EstParams>(
    block: &[u32],
    params: &P,
    semantics: MixSemantics,
    acc: &mut Accumulators,
) -> Result<f64, EstimationError> {
    let pp = CachedPos::build(params, block);
    match semantics {
        MixSemantics::NonEmitting => expectation_nonemit(&pp, acc),
        MixSemantics::Interpolated => expectation_interp(&pp, acc),
    }
}

/// Re-estimates every class parameter as `plus / (plus + minus)`.
pub fn maximization_step(acc: &Accumulators) -> Vec<f64> {
    acc.plus
        .iter()
        .zip(acc.minus.iter())
        .map(|(&p, &m)| p / (p + m))
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct EstimationConfig {
    pub iterations: u32,
    pub acc_floor: f64,
    /// Stop early when the relative withheld log-likelihood gain drops below
    /// this threshold.
    pub early_stop: Option<f64>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            iterations: 10,
            acc_floor: 0.1,
            early_stop: None,
        }
    }
}

/// Withheld log2 likelihood per iteration, measured under the parameters the
/// iteration started with.
#[derive(Clone, Copy, Debug)]
pub struct IterationLog {
    pub iteration: u32,
    pub withheld_log2: f64,
}

fn run_em(
    corpus: &Corpus,
    counts: &CountStore,
    tying: &TyingScheme,
    semantics: MixSemantics,
    cfg: &EstimationConfig,
    blocks: &[usize],
) -> Result<(Vec<f64>, Vec<IterationLog>), EstimationError> {
    let classes = tying.class_count() as usize;
    let mut lambda = vec![0.5; classes];
    let mut logs = Vec::new();
    let mut prev: Option<f64> = None;
    for iteration in 0..cfg.iterations {
        let mut acc = Accumulators::with_floor(classes, cfg.acc_floor);
        let mut withheld = 0.0;
        for &b in blocks {
            let view = counts.view_minus(b)?;
            let params = TrainedParams {
                order: counts.order(),
                view,
                tying,
                lambda: &lambda,
            };
            withheld += expectation_step(corpus.block(b)?, &params, semantics, &mut acc)?;
        }
        logs.push(IterationLog {
            iteration,
            withheld_log2: withheld,
        });
        if let (Some(tol), Some(prev)) = (cfg.early_stop, prev) {
            if withheld - prev <= tol * prev.abs() {
                break;
            }
        }
        prev = Some(withheld);
        lambda = maximization_step(&acc);
    }
    Ok((lambda, logs))
}

/// Cross-estimation: every block takes a turn as the withheld block while the
/// emission estimates come from the remaining blocks; one maximization per
/// sweep. The returned parameters pair with the full-corpus counts.
pub fn cross_estimate(
    corpus: &Corpus,
    counts: &CountStore,
    tying: &TyingScheme,
    semantics: MixSemantics,
    cfg: &EstimationConfig,
) -> Result<(Vec<f64>, Vec<IterationLog>), EstimationError> {
    if corpus.num_blocks() < 2 {
        return Err(EstimationError::NeedTwoBlocks);
    }
    let blocks: Vec<usize> = (0..corpus.num_blocks()).collect();
    run_em(corpus, counts, tying, semantics, cfg, &blocks)
}

/// Forward-estimation: a single partition, with block `withheld` carrying the
/// mixture expectations and its complement carrying the emission estimates.
pub fn forward_estimate(
    corpus: &Corpus,
    counts: &CountStore,
    withheld: usize,
    tying: &TyingScheme,
    semantics: MixSemantics,
    cfg: &EstimationConfig,
) -> Result<(Vec<f64>, Vec<IterationLog>), EstimationError> {
    if corpus.num_blocks() < 2 {
        return Err(EstimationError::NeedTwoBlocks);
    }
    run_em(corpus, counts, tying, semantics, cfg, &[withheld])
}
