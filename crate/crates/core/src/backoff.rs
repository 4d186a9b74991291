//! Backoff models: a transition dictionary with discounted emission
//! probabilities, rescaled residual mass on backoff, and the non-emitting
//! variant in which a backoff shortens the state for the rest of the string.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::counts::CountStore;

#[derive(Debug, Clone, PartialEq)]
pub enum BackoffError {
    /// A dictionary entry has no support in the counts.
    MissingCount { order: usize },
    BadDiscount(f64),
}

impl fmt::Display for BackoffError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackoffError::MissingCount { order } => write!(
                f,
                "dictionary entry at order {order} has zero count; dictionary and counts disagree"
            ),
            BackoffError::BadDiscount(d) => {
                write!(f, "discount must lie strictly in (0,1), got {d}")
            }
        }
    }
}

/// One context's dictionary row: admitted successors with their emission
/// probabilities, and the derived rescalar applied when none matches.
#[derive(Clone, Debug, Default)]
struct ContextRow {
    /// `(symbol, probability)` sorted by symbol.
    entries: Vec<(u32, f64)>,
    /// Sum of the entry probabilities.
    in_dict_mass: f64,
    /// Residual rescalar; `None` until derived.
    eta: Option<f64>,
}

impl ContextRow {
    fn prob(&self, y: u32) -> Option<f64> {
        self.entries
            .binary_search_by_key(&y, |&(s, _)| s)
            .ok()
            .map(|i| self.entries[i].1)
    }
}

/// A backoff model: dictionary, discounted emission estimates, and the
/// per-context rescalars, evaluated either with per-symbol backoff or with
/// permanent (non-emitting) backoff.
#[derive(Clone, Debug)]
pub struct BackoffModel {
    alphabet_size: u32,
    order: usize,
    /// Rows keyed by context, per order.
    rows: Vec<HashMap<Box<[u32]>, ContextRow>>,
}

/// Admitted successors of one context, with joint counts, sorted by symbol.
pub type DictRow = Vec<(u32, u32)>;

/// Raw dictionary: admitted `(context, symbol)` pairs with their counts.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dictionary {
    /// `entries[order]` maps a context to its admitted row.
    pub entries: Vec<HashMap<Box<[u32]>, DictRow>>,
}

impl Dictionary {
    pub fn max_order(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn entry_count(&self) -> usize {
        self.entries
            .iter()
            .flat_map(|m| m.values())
            .map(Vec::len)
            .sum()
    }
}

/// Selects the dictionary by per-order frequency thresholds: a transition is
/// admitted when its joint count strictly exceeds the threshold for its
/// order. Every order-0 transition is always included.
pub fn select_dictionary(counts: &CountStore, thresholds: &[u32]) -> Dictionary {
    let n = counts.order();
    let threshold = |order: usize| -> u64 {
        thresholds
            .get(order)
            .or_else(|| thresholds.last())
            .copied()
            .unwrap_or(0) as u64
    };
    let view = counts.view_all();
    let mut entries: Vec<HashMap<Box<[u32]>, DictRow>> =
        (0..=n).map(|_| HashMap::new()).collect();
    // order 0: the whole alphabet, observed or not
    let all: DictRow = (0..counts.alphabet_size())
        .map(|y| (y, view.successor_count(&[], y) as u32))
        .collect();
    entries[0].insert(Box::from(&[][..]), all);
    for order in 1..=n {
        for (ctx, _) in counts.sorted_contexts(order) {
            // the joint count of the extension string equals the successor
            // count: every within-block occurrence of ctx followed by y is a
            // prediction event
            let row: DictRow = view
                .successors(ctx)
                .into_iter()
                .filter(|&(_, joint)| joint > threshold(order))
                .map(|(y, joint)| (y, joint as u32))
                .collect();
            if !row.is_empty() {
                entries[order].insert(Box::from(ctx), row);
            }
        }
    }
    Dictionary { entries }
}

impl BackoffModel {
    /// Builds the model from a dictionary with absolute discounting: each
    /// admitted transition at orders >= 1 gets `(count - discount) / c(ctx)`;
    /// order 0 is the add-one estimate over the full alphabet so the model
    /// never assigns zero. Rescalars are derived bottom-up.
    pub fn from_counts(
        counts: &CountStore,
        dict: &Dictionary,
        discount: f64,
    ) -> Result<BackoffModel, BackoffError> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(BackoffError::BadDiscount(discount));
        }
        let view = counts.view_all();
        let k = counts.alphabet_size();
        let n = dict.max_order();
        let mut rows: Vec<HashMap<Box<[u32]>, ContextRow>> =
            (0..=n).map(|_| HashMap::new()).collect();
        // order 0: add-one, leaves no deficit
        let den = (view.succ_total(&[]) + k as u64) as f64;
        let zero: Vec<(u32, f64)> = (0..k)
            .map(|y| (y, (view.successor_count(&[], y) + 1) as f64 / den))
            .collect();
        rows[0].insert(
            Box::from(&[][..]),
            ContextRow {
                in_dict_mass: zero.iter().map(|&(_, p)| p).sum(),
                entries: zero,
                eta: None,
            },
        );
        for order in 1..=n {
            for (ctx, successors) in dict.entries[order].iter() {
                let den = view.context_count(ctx) as f64;
                let mut entries = Vec::with_capacity(successors.len());
                for &(y, joint) in successors {
                    if joint == 0 {
                        return Err(BackoffError::MissingCount { order });
                    }
                    entries.push((y, (joint as f64 - discount) / den));
                }
                entries.sort_unstable_by_key(|&(y, _)| y);
                let in_dict_mass = entries.iter().map(|&(_, p)| p).sum();
                rows[order].insert(
                    ctx.clone(),
                    ContextRow {
                        entries,
                        in_dict_mass,
                        eta: None,
                    },
                );
            }
        }
        let mut model = BackoffModel {
            alphabet_size: k,
            order: n,
            rows,
        };
        model.derive_rescalars();
        Ok(model)
    }

    /// Builds a model from explicit probabilities (row sums may be < 1 and
    /// the residual is redistributed on backoff). Used for constructed
    /// models; order-0 must cover the whole alphabet.
    pub fn from_explicit(
        alphabet_size: u32,
        order: usize,
        entries: impl IntoIterator<Item = (Box<[u32]>, Vec<(u32, f64)>)>,
    ) -> BackoffModel {
        let mut rows: Vec<HashMap<Box<[u32]>, ContextRow>> =
            (0..=order).map(|_| HashMap::new()).collect();
        for (ctx, mut row) in entries {
            row.sort_unstable_by_key(|&(y, _)| y);
            let in_dict_mass = row.iter().map(|&(_, p)| p).sum();
            rows[ctx.len()].insert(
                ctx,
                ContextRow {
                    entries: row,
                    in_dict_mass,
                    eta: None,
                },
            );
        }
        let mut model = BackoffModel {
            alphabet_size,
            order,
            rows,
        };
        model.derive_rescalars();
        model
    }

    /// Derives every context's rescalar bottom-up: the undistributed mass of
    /// the context divided by the mass its shorter suffix assigns outside the
    /// context's dictionary row.
    fn derive_rescalars(&mut self) {
        for order in 1..=self.order {
            let contexts: Vec<Box<[u32]>> = self.rows[order].keys().cloned().collect();
            for ctx in contexts {
                let row = &self.rows[order][&ctx];
                let numer = 1.0 - row.in_dict_mass;
                let shorter_mass: f64 = row
                    .entries
                    .iter()
                    .map(|&(y, _)| self.conditional(&ctx[1..], y))
                    .sum();
                let denom = 1.0 - shorter_mass;
                // a full row never backs off, so its rescalar is unused; a
                // denominator of zero elsewhere means nothing remains to
                // redistribute and the backoff contributes zero
                let eta = if denom > 0.0 { numer / denom } else { 0.0 };
                self.rows[order].get_mut(&ctx).unwrap().eta = Some(eta);
            }
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

    /// True when the row for this exact context exists and `eta` was flagged
    /// degenerate (no mass to redistribute).
    pub fn degenerate_contexts(&self) -> Vec<Box<[u32]>> {
        let mut out = Vec::new();
        for order in 1..=self.order {
            for (ctx, row) in self.rows[order].iter() {
                if row.eta == Some(0.0)
                    && row.in_dict_mass < 1.0
                    && (row.entries.len() as u32) < self.alphabet_size
                {
                    out.push(ctx.clone());
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn row(&self, ctx: &[u32]) -> Option<&ContextRow> {
        self.rows.get(ctx.len())?.get(ctx)
    }

    /// Per-symbol backoff conditional: the longest suffix of the history
    /// whose dictionary row contains the symbol wins, with every skipped
    /// suffix contributing its rescalar.
    pub fn conditional(&self, history: &[u32], y: u32) -> f64 {
        let top = self.order.min(history.len());
        let mut suffix = &history[history.len() - top..];
        let mut scale = 1.0;
        loop {
            if let Some(row) = self.row(suffix) {
                if let Some(p) = row.prob(y) {
                    return scale * p;
                }
                scale *= row.eta.unwrap_or(1.0);
            }
            // contexts without a row pass through unscaled (eta = 1)
            if suffix.is_empty() {
                // unreachable: the order-0 row covers the alphabet
                return 0.0;
            }
            suffix = &suffix[1..];
        }
    }

    /// String probability under per-symbol backoff: the state after each
    /// emission is the full history suffix.
    pub fn string_prob(&self, x: &[u32]) -> f64 {
        let mut p = 1.0;
        for t in 0..x.len() {
            p *= self.conditional(&x[..t], x[t]);
        }
        p
    }

    /// String probability (after `ctx`) under non-emitting backoff: a
    /// backoff shortens the state permanently, and an emission grows the
    /// shortened state rather than restoring the full suffix.
    pub fn nonemit_string_prob(&self, ctx: &[u32], x: &[u32]) -> f64 {
        let top = self.order.min(ctx.len());
        let mut state: Vec<u32> = ctx[ctx.len() - top..].to_vec();
        let mut p = 1.0;
        for &y in x {
            loop {
                match self.row(&state) {
                    Some(row) => {
                        if let Some(q) = row.prob(y) {
                            p *= q;
                            break;
                        }
                        p *= row.eta.unwrap_or(1.0);
                    }
                    None => {
                        if state.is_empty() {
                            return 0.0; // unreachable with a valid order-0 row
                        }
                    }
                }
                state.remove(0);
            }
            state.push(y);
            if state.len() > self.order {
                state.remove(0);
            }
        }
        p
    }

    /// Sorted `(context, symbol, probability)` rows for serialization.
    pub fn sorted_rows(&self) -> Vec<(&[u32], &[(u32, f64)])> {
        let mut out: Vec<(&[u32], &[(u32, f64)])> = Vec::new();
        for order in 0..=self.order {
            let mut ctxs: Vec<&Box<[u32]>> = self.rows[order].keys().collect();
            ctxs.sort_unstable();
            for ctx in ctxs {
                out.push((ctx.as_ref(), &self.rows[order][ctx.as_ref()].entries));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use crate::corpus::build_char_corpus;
    use alloc::vec;
    use crate::models::for_each_state;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rescalar_worked_example() {
        // dictionary {eps} x {a, b} plus ("a", a); delta(a|a) = 0.6,
        // delta(.|eps) = 0.5 each
        let model = BackoffModel::from_explicit(
            2,
            1,
            [
                (Box::from(&[][..]), vec![(0, 0.5), (1, 0.5)]),
                (Box::from(&[0u32][..]), vec![(0, 0.6)]),
            ],
        );
        assert!(close(model.conditional(&[0], 0), 0.6, 1e-15));
        // eta("a") = (1 - 0.6) / (1 - 0.5) = 0.8; p(b|a) = 0.8 * 0.5 = 0.4
        assert!(close(model.conditional(&[0], 1), 0.4, 1e-15));
        let total = model.conditional(&[0], 0) + model.conditional(&[0], 1);
        assert!(close(total, 1.0, 1e-15));
    }

    #[test]
    fn complete_dictionary_is_plain_lookup() {
        // full rows at every order: no backoff is ever taken
        let mut entries: Vec<(Box<[u32]>, Vec<(u32, f64)>)> = Vec::new();
        entries.push((Box::from(&[][..]), vec![(0, 0.3), (1, 0.7)]));
        for s in [[0u32], [1u32]] {
            entries.push((Box::from(&s[..]), vec![(0, 0.25), (1, 0.75)]));
        }
        let model = BackoffModel::from_explicit(2, 1, entries);
        assert!(close(model.conditional(&[1, 0], 1), 0.75, 1e-15));
        for_each_state(2, 6, |x| {
            let per_symbol = model.string_prob(x);
            let nonemit = model.nonemit_string_prob(&[], x);
            assert!(close(per_symbol, nonemit, 1e-12), "string {x:?}");
        });
    }

    #[test]
    fn rows_normalize_for_random_dictionaries() {
        // a handful of gap patterns over |A| = 3, order 2
        let patterns: &[&[(usize, u32)]] = &[
            &[(1, 0), (1, 2), (2, 1)],
            &[(1, 1)],
            &[(2, 0), (2, 2)],
            &[],
        ];
        for (pi, pat) in patterns.iter().enumerate() {
            let mut entries: Vec<(Box<[u32]>, Vec<(u32, f64)>)> = Vec::new();
            entries.push((Box::from(&[][..]), vec![(0, 0.2), (1, 0.5), (2, 0.3)]));
            // deterministic scrambled rows; full rows must sum to 1
            let mut stamp = 7u32;
            for order in 1..=2usize {
                for_each_state(3, order, |st| {
                    stamp = stamp.wrapping_mul(1664525).wrapping_add(1013904223);
                    let keep: Vec<u32> = (0..3u32)
                        .filter(|y| !pat.contains(&(order, *y)) && (stamp >> y) & 1 == 0)
                        .collect();
                    if keep.is_empty() {
                        return;
                    }
                    let row: Vec<(u32, f64)> = if keep.len() == 3 {
                        keep.iter().map(|&y| (y, [0.2, 0.5, 0.3][y as usize])).collect()
                    } else {
                        keep.iter().map(|&y| (y, 0.15 + 0.1 * y as f64)).collect()
                    };
                    entries.push((Box::from(st), row));
                });
            }
            let model = BackoffModel::from_explicit(3, 2, entries);
            for hist_len in 0..=3usize {
                for_each_state(3, hist_len, |h| {
                    let total: f64 = (0..3).map(|y| model.conditional(h, y)).sum();
                    assert!(
                        close(total, 1.0, 1e-12),
                        "pattern {pi}, history {h:?}: {total}"
                    );
                });
            }
        }
    }

    #[test]
    fn threshold_selection_on_abab() {
        let (a, c) = build_char_corpus("abab").unwrap();
        let s = CountStore::build(&c, 1, a.len(), false);
        // threshold 1 at order 1: only transitions with joint count > 1
        let dict = select_dictionary(&s, &[0, 1]);
        // c("ab") = 2 > 1 -> ("a", b) admitted; c("ba") = 1 -> dropped
        assert!(dict.entries[1].contains_key(&Box::from(&[0u32][..])));
        assert!(!dict.entries[1].contains_key(&Box::from(&[1u32][..])));
        // order 0 always covers the alphabet
        assert_eq!(dict.entries[0][&Box::from(&[][..])].len(), 3);
    }

    #[test]
    fn threshold_infinity_keeps_only_order0() {
        let (a, c) = build_char_corpus("abab").unwrap();
        let s = CountStore::build(&c, 1, a.len(), false);
        let dict = select_dictionary(&s, &[u32::MAX, u32::MAX]);
        assert_eq!(dict.entries[1].len(), 0);
        assert_eq!(dict.entries[0].len(), 1);
    }

    #[test]
    fn threshold_zero_keeps_everything_observed() {
        let (a, c) = build_char_corpus("abab").unwrap();
        let s = CountStore::build(&c, 1, a.len(), false);
        let dict = select_dictionary(&s, &[0]);
        assert!(dict.entries[1].contains_key(&Box::from(&[0u32][..])));
        assert!(dict.entries[1].contains_key(&Box::from(&[1u32][..])));
    }

    #[test]
    fn discounted_estimates_on_abab() {
        let (a, c) = build_char_corpus("abab").unwrap();
        let s = CountStore::build(&c, 1, a.len(), false);
        let dict = select_dictionary(&s, &[0]);
        let model = BackoffModel::from_counts(&s, &dict, 0.5).unwrap();
        // delta(b | a) = (c("ab") - 0.5) / c("a") = 1.5 / 2
        assert!(close(model.row(&[0]).unwrap().prob(1).unwrap(), 0.75, 1e-15));
        // delta(a | b) = (c("ba") - 0.5) / c("b") = 0.5 / 2
        assert!(close(model.row(&[1]).unwrap().prob(0).unwrap(), 0.25, 1e-15));
        // order 0 add-one with k = 3: a and b get 3/7, OOV gets 1/7
        assert!(close(model.conditional(&[], 0), 3.0 / 7.0, 1e-15));
        assert!(close(model.conditional(&[], 2), 1.0 / 7.0, 1e-15));
        // every row still normalizes
        for hist in [&[][..], &[0u32][..], &[1u32][..], &[2u32][..]] {
            let total: f64 = (0..3).map(|y| model.conditional(hist, y)).sum();
            assert!(close(total, 1.0, 1e-12), "history {hist:?}");
        }
    }

    #[test]
    fn discount_arithmetic() {
        // c(xy) = 10, c(x) = 10, discount 0.5 -> 0.95
        let (a, c) = build_char_corpus(&"xy".repeat(10)).unwrap();
        let s = CountStore::build(&c, 1, a.len(), false);
        let dict = select_dictionary(&s, &[0]);
        let model = BackoffModel::from_counts(&s, &dict, 0.5).unwrap();
        // "x" occurs 10 times, always extends with y
        let x_id = a.id_of("x");
        let y_id = a.id_of("y");
        assert!(close(
            model.row(&[x_id]).unwrap().prob(y_id).unwrap(),
            0.95,
            1e-15
        ));
    }

    #[test]
    fn bad_discount_rejected() {
        let (a, c) = build_char_corpus("abab").unwrap();
        let s = CountStore::build(&c, 1, a.len(), false);
        let dict = select_dictionary(&s, &[0]);
        assert!(matches!(
            BackoffModel::from_counts(&s, &dict, 0.0),
            Err(BackoffError::BadDiscount(_))
        ));
        assert!(matches!(
            BackoffModel::from_counts(&s, &dict, 1.0),
            Err(BackoffError::BadDiscount(_))
        ));
    }

    #[test]
    fn degenerate_rescalar_reported() {
        // longer context keeps mass out of dictionary while the shorter
        // context's admitted set carries everything: nothing left to scale
        let model = BackoffModel::from_explicit(
            2,
            1,
            [
                (Box::from(&[][..]), vec![(0, 1.0), (1, 0.0)]),
                (Box::from(&[0u32][..]), vec![(0, 0.6)]),
            ],
        );
        // eta("a"): numer 0.4, denom 1 - p_b(a|eps) = 0 -> eta pinned 0
        assert_eq!(model.row(&[0]).unwrap().eta, Some(0.0));
        assert_eq!(model.degenerate_contexts().len(), 1);
    }

    #[test]
    fn single_symbol_nonemit_equals_per_symbol() {
        let model = BackoffModel::from_explicit(
            2,
            1,
            [
                (Box::from(&[][..]), vec![(0, 0.4), (1, 0.6)]),
                (Box::from(&[1u32][..]), vec![(1, 0.5)]),
            ],
        );
        for h in [&[][..], &[0u32][..], &[1u32][..]] {
            for y in 0..2u32 {
                let a = model.conditional(h, y);
                let b = model.nonemit_string_prob(h, &[y]);
                assert!(close(a, b, 1e-15), "h {h:?} y {y}");
            }
        }
    }

    #[test]
    fn dictionary_gap_separates_nonemit_from_per_symbol() {
        // the gap at ("11", 0) drops both models to low order, but only the
        // non-emitting model's state stays short: at the next position it
        // predicts from "0" while the per-symbol model is back at "10"
        let entries: Vec<(Box<[u32]>, Vec<(u32, f64)>)> = vec![
            (Box::from(&[][..]), vec![(0, 0.9), (1, 0.1)]),
            (Box::from(&[0u32][..]), vec![(1, 0.3)]),
            (Box::from(&[1u32][..]), vec![(1, 0.85)]),
            (Box::from(&[1u32, 1][..]), vec![(1, 0.2)]),
            (Box::from(&[1u32, 0][..]), vec![(1, 0.6)]),
        ];
        let model = BackoffModel::from_explicit(2, 2, entries);
        let x = [1u32, 1, 0, 1];
        let per_symbol = model.string_prob(&x);
        let nonemit = model.nonemit_string_prob(&[], &x);
        // final symbol: per-symbol reads ("10", 1) = 0.6, non-emitting reads
        // ("0", 1) = 0.3; shared prefix factor 0.1 * 0.85 * 0.8
        assert!(close(per_symbol / nonemit, 2.0, 1e-9));
        assert!(
            (per_symbol - nonemit).abs() > 1e-3,
            "expected separation, got {per_symbol} vs {nonemit}"
        );
        // both remain proper distributions over same-length strings
        for len in [4usize, 7] {
            let mut total_ps = 0.0;
            let mut total_ne = 0.0;
            for_each_state(2, len, |s| {
                total_ps += model.string_prob(s);
                total_ne += model.nonemit_string_prob(&[], s);
            });
            assert!(close(total_ps, 1.0, 1e-9), "per-symbol at length {len}");
            assert!(close(total_ne, 1.0, 1e-9), "non-emitting at length {len}");
        }
    }
}
