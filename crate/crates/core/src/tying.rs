//! Parameter tying: mapping states to equivalence classes that share one
//! non-emitting transition parameter, with pooled EM expectations.
//!
//! Four schemes are provided. `Untied` gives every predictive state its own
//! class. `Order` ties all states of one order together (the
//! state-independent mixture). `FreqDiv` ties states with the same
//! (frequency, diversity) pair, across orders. `Posterior` buckets states by
//! their mean empirical posterior under a uniform prior on the non-emitting
//! transitions, quantized to a fixed number of levels per order.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::corpus::Corpus;
use crate::counts::CountStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TyingKind {
    Untied,
    Order,
    FreqDiv,
    FreqDivLog,
    Posterior { levels: u32 },
}

impl TyingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TyingKind::Untied => "none",
            TyingKind::Order => "order",
            TyingKind::FreqDiv => "freq-div",
            TyingKind::FreqDivLog => "freq-div-log",
            TyingKind::Posterior { .. } => "posterior",
        }
    }
}

impl fmt::Display for TyingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TyingKind::Posterior { levels } => write!(f, "posterior:{levels}"),
            other => f.write_str(other.as_str()),
        }
    }
}

/// A total, deterministic map from predictive states (order >= 1, at least
/// one observed emission) to dense class ids.
#[derive(Clone, Debug)]
pub struct TyingScheme {
    kind: TyingKind,
    class_of: HashMap<Box<[u32]>, u32>,
    class_count: u32,
}

impl TyingScheme {
    #[inline]
    pub fn kind(&self) -> TyingKind {
        self.kind
    }

    #[inline]
    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    /// Class of a state; `None` for states outside the training map (novel
    /// states, whose non-emitting parameter is pinned to zero).
    #[inline]
    pub fn class_of(&self, state: &[u32]) -> Option<u32> {
        self.class_of.get(state).copied()
    }

    /// All `(state, class)` pairs sorted by state (serialization order).
    pub fn sorted_entries(&self) -> Vec<(&[u32], u32)> {
        let mut v: Vec<(&[u32], u32)> = self
            .class_of
            .iter()
            .map(|(s, &c)| (s.as_ref(), c))
            .collect();
        v.sort_unstable_by(|a, b| (a.0.len(), a.0).cmp(&(b.0.len(), b.0)));
        v
    }

    /// Rebuilds a scheme from explicit entries (model-file loading path).
    pub fn from_entries(
        kind: TyingKind,
        entries: impl IntoIterator<Item = (Box<[u32]>, u32)>,
    ) -> TyingScheme {
        let class_of: HashMap<Box<[u32]>, u32> = entries.into_iter().collect();
        let class_count = class_of.values().max().map_or(0, |&m| m + 1);
        TyingScheme {
            kind,
            class_of,
            class_count,
        }
    }
}

/// Predictive states of orders `1..=n` in canonical (order, ids) order.
fn predictive_states(counts: &CountStore) -> Vec<(Box<[u32]>, u32, u32)> {
    let mut states = Vec::new();
    for order in 1..=counts.order() {
        for (ctx, cell) in counts.sorted_contexts(order) {
            if cell.succ_total > 0 {
                states.push((Box::from(ctx), cell.count, cell.diversity()));
            }
        }
    }
    states
}

/// One class per predictive state.
pub fn untied_scheme(counts: &CountStore) -> TyingScheme {
    let states = predictive_states(counts);
    let class_of = states
        .into_iter()
        .enumerate()
        .map(|(i, (s, _, _))| (s, i as u32))
        .collect::<HashMap<_, _>>();
    let class_count = class_of.len() as u32;
    TyingScheme {
        kind: TyingKind::Untied,
        class_of,
        class_count,
    }
}

/// One class per state order (state-independent parameters).
pub fn order_scheme(counts: &CountStore) -> TyingScheme {
    let states = predictive_states(counts);
    let class_of = states
        .into_iter()
        .map(|(s, _, _)| {
            let order = s.len() as u32;
            (s, order - 1)
        })
        .collect();
    TyingScheme {
        kind: TyingKind::Order,
        class_of,
        class_count: counts.order() as u32,
    }
}

/// Ties states sharing the exact (frequency, diversity) pair, regardless of
/// order. Class ids follow the sorted pair order.
pub fn freq_div_scheme(counts: &CountStore) -> TyingScheme {
    let states = predictive_states(counts);
    let mut pairs: Vec<(u32, u32)> = states.iter().map(|&(_, c, q)| (c, q)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let pair_index: HashMap<(u32, u32), u32> = pairs
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();
    let class_count = pairs.len() as u32;
    let class_of = states
        .into_iter()
        .map(|(s, c, q)| (s, pair_index[&(c, q)]))
        .collect();
    TyingScheme {
        kind: TyingKind::FreqDiv,
        class_of,
        class_count,
    }
}

/// Ties states sharing a log2-bucketed (frequency, diversity) pair; a coarser
/// variant of [`freq_div_scheme`] for small corpora.
pub fn freq_div_log_scheme(counts: &CountStore) -> TyingScheme {
    let states = predictive_states(counts);
    let bucket = |x: u32| 32 - x.leading_zeros(); // floor(log2(x)) + 1, 0 -> 0
    let mut pairs: Vec<(u32, u32)> = states.iter().map(|&(_, c, q)| (bucket(c), bucket(q))).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let pair_index: HashMap<(u32, u32), u32> = pairs
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i as u32))
        .collect();
    let class_count = pairs.len() as u32;
    let class_of = states
        .into_iter()
        .map(|(s, c, q)| (s, pair_index[&(bucket(c), bucket(q))]))
        .collect();
    TyingScheme {
        kind: TyingKind::FreqDivLog,
        class_of,
        class_count,
    }
}

/// Empirical occupancy statistics under a uniform prior on the non-emitting
/// transitions: expected posterior mass per state and its per-occurrence mean.
#[derive(Clone, Debug, Default)]
pub struct PosteriorStats {
    /// Expected occupancy mass per state.
    pub emp_expect: HashMap<Box<[u32]>, f64>,
    /// `emp_expect / c(state)`, in `[0, 1]`.
    pub mean_posterior: HashMap<Box<[u32]>, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosteriorError(pub String);

impl fmt::Display for PosteriorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Posterior over the state order at one position, with the weight of each
/// candidate order taken as the state's training frequency.
///
/// `t` is the number of symbols of the block already seen (`t >= 1`); the
/// candidate state of order `i` is the length-`i` suffix of the prefix.
pub fn empirical_posterior(
    counts: &CountStore,
    block: &[u32],
    t: usize,
    i: usize,
) -> Result<f64, PosteriorError> {
    if t == 0 {
        return Err(PosteriorError(String::from(
            "no state of positive order exists at position 0",
        )));
    }
    let top = counts.order().min(t);
    if i == 0 || i > top {
        return Err(PosteriorError(alloc::format!(
            "order {i} out of range 1..={top} at position {t}"
        )));
    }
    let v = counts.view_all();
    let mut total = 0.0;
    let mut target = 0.0;
    for j in 1..=top {
        let w = v.context_count(&block[t - j..t]) as f64;
        total += w;
        if j == i {
            target = w;
        }
    }
    if total == 0.0 {
        return Err(PosteriorError(String::from(
            "no candidate state has positive frequency",
        )));
    }
    Ok(target / total)
}

/// Accumulates `emp_expect` for every state by a single dynamic-programming
/// sweep over the corpus: each position contributes one unit of posterior
/// mass, split across the candidate orders by training frequency.
pub fn posterior_stats(counts: &CountStore, corpus: &Corpus) -> PosteriorStats {
    let n = counts.order();
    let v = counts.view_all();
    let mut emp_expect: HashMap<Box<[u32]>, f64> = HashMap::new();
    let mut weights: Vec<f64> = Vec::with_capacity(n);
    for b in 0..corpus.num_blocks() {
        let block = corpus.block(b).expect("block id in range");
        for t in 1..=block.len() {
            let top = n.min(t);
            weights.clear();
            let mut total = 0.0;
            for j in 1..=top {
                let w = v.context_count(&block[t - j..t]) as f64;
                weights.push(w);
                total += w;
            }
            if total == 0.0 {
                continue;
            }
            for j in 1..=top {
                let w = weights[j - 1];
                if w > 0.0 {
                    *emp_expect.entry_ref(&block[t - j..t]).or_insert(0.0) += w / total;
                }
            }
        }
    }
    let mut mean_posterior = HashMap::with_capacity(emp_expect.len());
    for (state, &mass) in emp_expect.iter() {
        let c = v.context_count(state);
        if c > 0 {
            mean_posterior.insert(state.clone(), mass / c as f64);
        }
    }
    PosteriorStats {
        emp_expect,
        mean_posterior,
    }
}

/// Buckets each predictive state by `(order, floor(mean_posterior * levels))`
/// with the top bucket clamped to `levels - 1`.
pub fn posterior_scheme(counts: &CountStore, corpus: &Corpus, levels: u32) -> TyingScheme {
    assert!(levels >= 1, "posterior tying needs at least one level");
    let stats = posterior_stats(counts, corpus);
    let states = predictive_states(counts);
    let bucket_of = |state: &[u32]| -> (u32, u32) {
        let mp = stats.mean_posterior.get(state).copied().unwrap_or(0.0);
        let b = ((mp * levels as f64) as u32).min(levels - 1);
        (state.len() as u32, b)
    };
    let mut keys: Vec<(u32, u32)> = states.iter().map(|(s, _, _)| bucket_of(s)).collect();
    keys.sort_unstable();
    keys.dedup();
    let key_index: HashMap<(u32, u32), u32> = keys
        .iter()
        .enumerate()
        .map(|(i, &k)| (k, i as u32))
        .collect();
    let class_count = keys.len() as u32;
    let class_of = states
        .into_iter()
        .map(|(s, _, _)| {
            let key = bucket_of(&s);
            (s, key_index[&key])
        })
        .collect();
    TyingScheme {
        kind: TyingKind::Posterior { levels },
        class_of,
        class_count,
    }
}
