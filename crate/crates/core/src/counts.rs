//! Context statistics over all orders `0..=n`: string frequencies, successor
//! counts, and diversity, with per-block views for cross-estimation.
//!
//! For every block and every position `t`, the event `context -> symbol` is
//! recorded for each context length `i <= min(n, t - block_start)`; contexts
//! never reach backwards across a block bound. The string frequency `c(ctx)`
//! additionally counts occurrences that end exactly at a block end and
//! therefore have no successor, so `c(ctx) = sum_y succ(ctx)(y) + deficit`.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CountsError {
    BadBlockId { id: usize, blocks: usize },
    NoBlockStats,
}

impl fmt::Display for CountsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CountsError::BadBlockId { id, blocks } => {
                write!(f, "block id {id} out of range ({blocks} blocks)")
            }
            CountsError::NoBlockStats => {
                write!(f, "count store carries no per-block statistics")
            }
        }
    }
}

/// Statistics for one context: its string frequency and successor counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateCell {
    /// Occurrences of the context string, including block-final ones.
    pub count: u32,
    /// Successors sorted by symbol id.
    pub succ: Vec<(u32, u32)>,
    /// Cached `sum_y succ(y)`.
    pub succ_total: u32,
}

impl StateCell {
    fn bump_count(&mut self) {
        self.count = self
            .count
            .checked_add(1)
            .expect("context count exceeds design limit (u32)");
    }

    fn bump_succ(&mut self, y: u32) {
        match self.succ.binary_search_by_key(&y, |&(s, _)| s) {
            Ok(i) => self.succ[i].1 += 1,
            Err(i) => self.succ.insert(i, (y, 1)),
        }
        self.succ_total = self
            .succ_total
            .checked_add(1)
            .expect("successor total exceeds design limit (u32)");
    }

    pub fn succ_count(&self, y: u32) -> u32 {
        match self.succ.binary_search_by_key(&y, |&(s, _)| s) {
            Ok(i) => self.succ[i].1,
            Err(_) => 0,
        }
    }

    /// Number of distinct observed successors.
    pub fn diversity(&self) -> u32 {
        self.succ.len() as u32
    }
}

type OrderMap = HashMap<Box<[u32]>, StateCell>;

fn record_block(maps: &mut [OrderMap], block: &[u32], n: usize) {
    // prediction events: context of each length -> block[t]
    for t in 0..block.len() {
        let top = n.min(t);
        for i in 0..=top {
            // entry_ref avoids boxing the context on every lookup hit
            let cell = maps[i].entry_ref(&block[t - i..t]).or_default();
            cell.bump_succ(block[t]);
            cell.bump_count();
        }
    }
    // string occurrences ending at the block end (no successor to record)
    let t = block.len();
    let top = n.min(t);
    for i in 1..=top {
        maps[i].entry_ref(&block[t - i..t]).or_default().bump_count();
    }
}

/// Context statistics for a blocked corpus at orders `0..=n`.
#[derive(Clone, Debug)]
pub struct CountStore {
    order: usize,
    alphabet_size: u32,
    full: Vec<OrderMap>,
    per_block: Option<Vec<Vec<OrderMap>>>,
}

impl CountStore {
    /// Builds statistics for all orders `0..=n` over the corpus blocks.
    /// `keep_blocks` additionally retains per-block statistics so that
    /// leave-one-block-out views can be served.
    pub fn build(corpus: &Corpus, n: usize, alphabet_size: u32, keep_blocks: bool) -> CountStore {
        let mut full: Vec<OrderMap> = (0..=n).map(|_| OrderMap::new()).collect();
        let mut per_block = keep_blocks.then(Vec::new);
        for b in 0..corpus.num_blocks() {
            let block = corpus.block(b).expect("block id in range");
            record_block(&mut full, block, n);
            if let Some(pb) = per_block.as_mut() {
                let mut maps: Vec<OrderMap> = (0..=n).map(|_| OrderMap::new()).collect();
                record_block(&mut maps, block, n);
                pb.push(maps);
            }
        }
        CountStore {
            order: n,
            alphabet_size,
            full,
            per_block,
        }
    }

    /// Reassembles a store from explicit cells (model-file loading path).
    /// Cells are keyed `(context, cell)`; no per-block statistics.
    pub fn from_cells(
        order: usize,
        alphabet_size: u32,
        cells: impl IntoIterator<Item = (Box<[u32]>, StateCell)>,
    ) -> CountStore {
        let mut full: Vec<OrderMap> = (0..=order).map(|_| OrderMap::new()).collect();
        for (ctx, cell) in cells {
            debug_assert!(ctx.len() <= order);
            full[ctx.len()].insert(ctx, cell);
        }
        CountStore {
            order,
            alphabet_size,
            full,
            per_block: None,
        }
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn alphabet_size(&self) -> u32 {
        self.alphabet_size
    }

    pub fn num_blocks(&self) -> Option<usize> {
        self.per_block.as_ref().map(Vec::len)
    }

    /// Total number of stored contexts across all orders.
    pub fn context_entries(&self) -> usize {
        self.full.iter().map(HashMap::len).sum()
    }

    /// View over the complete training statistics.
    pub fn view_all(&self) -> CountView<'_> {
        CountView {
            store: self,
            minus: None,
        }
    }

    /// View whose statistics equal a rebuild with block `i` removed.
    pub fn view_minus(&self, i: usize) -> Result<CountView<'_>, CountsError> {
        let pb = self.per_block.as_ref().ok_or(CountsError::NoBlockStats)?;
        if i >= pb.len() {
            return Err(CountsError::BadBlockId {
                id: i,
                blocks: pb.len(),
            });
        }
        Ok(CountView {
            store: self,
            minus: Some(&pb[i]),
        })
    }

    /// Drops contexts at orders >= 1 whose full-corpus frequency is below
    /// `min_count`, in both the full and the per-block maps. Trades fidelity
    /// for memory; leave unset to keep every observed context.
    pub fn prune_min_count(&mut self, min_count: u32) {
        if min_count <= 1 {
            return;
        }
        for i in 1..=self.order {
            let full = &mut self.full[i];
            let mut dropped: Vec<Box<[u32]>> = Vec::new();
            full.retain(|ctx, cell| {
                if cell.count < min_count {
                    dropped.push(ctx.clone());
                    false
                } else {
                    true
                }
            });
            if let Some(pb) = self.per_block.as_mut() {
                for maps in pb.iter_mut() {
                    for ctx in &dropped {
                        maps[i].remove(ctx);
                    }
                }
            }
        }
    }

    /// Iterates all contexts of one order in sorted order (serialization and
    /// canonical class enumeration).
    pub fn sorted_contexts(&self, order: usize) -> Vec<(&[u32], &StateCell)> {
        let mut v: Vec<(&[u32], &StateCell)> = self.full[order]
            .iter()
            .map(|(k, c)| (k.as_ref(), c))
            .collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }
}

/// Read-only statistics, optionally with one block's contribution removed.
#[derive(Clone, Copy)]
pub struct CountView<'a> {
    store: &'a CountStore,
    minus: Option<&'a Vec<OrderMap>>,
}

impl<'a> CountView<'a> {
    #[inline]
    pub fn order(&self) -> usize {
        self.store.order
    }

    #[inline]
    pub fn alphabet_size(&self) -> u32 {
        self.store.alphabet_size
    }

    fn cell(&self, ctx: &[u32]) -> Option<&'a StateCell> {
        self.store.full.get(ctx.len())?.get(ctx)
    }

    fn minus_cell(&self, ctx: &[u32]) -> Option<&'a StateCell> {
        self.minus?.get(ctx.len())?.get(ctx)
    }

    /// String frequency `c(ctx)`.
    pub fn context_count(&self, ctx: &[u32]) -> u64 {
        let full = self.cell(ctx).map_or(0, |c| c.count as u64);
        let sub = self.minus_cell(ctx).map_or(0, |c| c.count as u64);
        full - sub
    }

    /// `succ(ctx)(y)`: times `y` followed `ctx`.
    pub fn successor_count(&self, ctx: &[u32], y: u32) -> u64 {
        let full = self.cell(ctx).map_or(0, |c| c.succ_count(y) as u64);
        let sub = self.minus_cell(ctx).map_or(0, |c| c.succ_count(y) as u64);
        full - sub
    }

    /// `sum_y succ(ctx)(y)`: number of prediction events from this context.
    pub fn succ_total(&self, ctx: &[u32]) -> u64 {
        let full = self.cell(ctx).map_or(0, |c| c.succ_total as u64);
        let sub = self.minus_cell(ctx).map_or(0, |c| c.succ_total as u64);
        full - sub
    }

    /// Diversity `q(ctx)`: number of distinct observed successors.
    pub fn diversity(&self, ctx: &[u32]) -> u32 {
        match (self.cell(ctx), self.minus_cell(ctx)) {
            (None, _) => 0,
            (Some(full), None) => full.diversity(),
            (Some(full), Some(sub)) => {
                let mut q = 0;
                for &(y, c) in &full.succ {
                    if c as u64 - sub.succ_count(y) as u64 > 0 {
                        q += 1;
                    }
                }
                q
            }
        }
    }

    /// Distinct successors with positive view count, sorted by symbol id.
    pub fn successors(&self, ctx: &[u32]) -> Vec<(u32, u64)> {
        let Some(full) = self.cell(ctx) else {
            return Vec::new();
        };
        let sub = self.minus_cell(ctx);
        full.succ
            .iter()
            .filter_map(|&(y, c)| {
                let v = c as u64 - sub.map_or(0, |s| s.succ_count(y) as u64);
                (v > 0).then_some((y, v))
            })
            .collect()
    }

    /// Maximum-likelihood emission estimate `delta_i(y | ctx)`.
    ///
    /// The empty context is add-one smoothed so every symbol keeps positive
    /// probability; higher orders are pure relative frequencies, zero for
    /// unobserved contexts.
    pub fn ml_delta(&self, ctx: &[u32], y: u32) -> f64 {
        if ctx.is_empty() {
            let num = self.successor_count(ctx, y) + 1;
            let den = self.succ_total(ctx) + self.alphabet_size() as u64;
            return num as f64 / den as f64;
        }
        let den = self.succ_total(ctx);
        if den == 0 {
            return 0.0;
        }
        self.successor_count(ctx, y) as f64 / den as f64
    }

    /// True when the context has at least one observed prediction event, i.e.
    /// its emission row is a proper distribution.
    #[inline]
    pub fn observed(&self, ctx: &[u32]) -> bool {
        ctx.is_empty() || self.succ_total(ctx) > 0
    }

    /// Materializes the view into a standalone store (tests and diagnostics).
    pub fn materialize(&self) -> CountStore {
        let mut full: Vec<OrderMap> = (0..=self.order()).map(|_| OrderMap::new()).collect();
        for i in 0..=self.order() {
            for (ctx, _) in self.store.full[i].iter() {
                let count = self.context_count(ctx);
                let succ = self.successors(ctx);
                if count == 0 && succ.is_empty() {
                    continue;
                }
                let succ_total = succ.iter().map(|&(_, c)| c).sum::<u64>() as u32;
                full[i].insert(
                    ctx.clone(),
                    StateCell {
                        count: count as u32,
                        succ: succ.into_iter().map(|(y, c)| (y, c as u32)).collect(),
                        succ_total,
                    },
                );
            }
        }
        CountStore {
            order: self.order(),
            alphabet_size: self.alphabet_size(),
            full,
            per_block: None,
        }
    }
}

/// Compares the full statistics of two stores (test helper; block statistics
/// are not part of the comparison).
pub fn same_statistics(a: &CountStore, b: &CountStore) -> bool {
    a.order == b.order
        && a.full.iter().zip(b.full.iter()).all(|(ma, mb)| {
            ma.len() == mb.len() && ma.iter().all(|(k, v)| mb.get(k) == Some(v))
        })
}
