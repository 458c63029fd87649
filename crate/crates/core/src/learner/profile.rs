//! Whole-pool evaluation for one session.
//!
//! For a session `s` the aggregate of every pool model is computed in one
//! sweep per window family. Each candidate record is reduced to the bitmask
//! of features on which it agrees with `s`; it belongs to `Agg(M, s)` exactly
//! when that agreement pattern is a superset of `M`'s mask. Counts per mask
//! come from a superset-sum over the pattern histogram, and medians from a
//! single walk over the candidates in throughput order, crediting every
//! submask of each candidate's pattern.
//!
//! Nested windows of one family (recency spans, same-hour-of-day days,
//! same-hour-of-week weeks) share the widest window's candidates and differ
//! only by a lower time bound.

use std::collections::BTreeMap;

use crate::history::HistoryIndex;
use crate::model::{middle_value, TimeWindow, Timestamp};

use super::ModelPool;

struct Candidate {
    throughput: f64,
    pattern: u32,
    timestamp: Timestamp,
}

/// Window families: each entry is the widest window plus (pool window
/// position, lower bound) for every member.
fn families(pool: &ModelPool, target: Timestamp) -> Vec<(TimeWindow, Vec<(usize, Timestamp)>)> {
    let mut out: Vec<(TimeWindow, Vec<(usize, Timestamp)>)> = Vec::new();
    for (position, window) in pool.windows().iter().enumerate() {
        let lower = window.lower_bound(target);
        let family = std::mem::discriminant(window);
        match out
            .iter_mut()
            .find(|(w, _)| std::mem::discriminant(w) == family)
        {
            Some((widest, members)) => {
                if lower < widest.lower_bound(target) {
                    *widest = *window;
                }
                members.push((position, lower));
            }
            None => out.push((*window, vec![(position, lower)])),
        }
    }
    out
}

fn candidates(
    index: &HistoryIndex,
    window: TimeWindow,
    codes: &[u32],
    target: Timestamp,
) -> Vec<Candidate> {
    let tp = index.throughputs();
    let ts = index.timestamps();
    let mut out = Vec::new();
    for range in index.window_ranges(window, target) {
        for p in range {
            let pattern =
                index
                    .codes_at(p)
                    .iter()
                    .zip(codes)
                    .enumerate()
                    .fold(
                        0u32,
                        |acc, (f, (a, b))| if a == b { acc | (1 << f) } else { acc },
                    );
            out.push(Candidate {
                throughput: tp[p],
                pattern,
                timestamp: ts[p],
            });
        }
    }
    out
}

/// In place: `counts[m]` becomes the number of patterns that are supersets of `m`.
fn superset_sums(counts: &mut [u32], arity: usize) {
    for bit in 0..arity {
        let b = 1usize << bit;
        for m in 0..counts.len() {
            if m & b == 0 {
                counts[m] += counts[m | b];
            }
        }
    }
}

fn mask_counts(cands: &[Candidate], lower: Timestamp, arity: usize) -> Vec<u32> {
    let mut counts = vec![0u32; 1 << arity];
    for c in cands.iter().filter(|c| c.timestamp >= lower) {
        counts[c.pattern as usize] += 1;
    }
    superset_sums(&mut counts, arity);
    counts
}

/// `|Agg(M, s)|` for every pool model, in pool order.
pub(crate) fn support_counts(
    index: &HistoryIndex,
    pool: &ModelPool,
    codes: &[u32],
    target: Timestamp,
) -> Vec<u32> {
    let nw = pool.windows().len();
    let arity = pool.arity();
    let mut out = vec![0u32; pool.len()];
    for (widest, members) in families(pool, target) {
        let cands = candidates(index, widest, &codes[..arity], target);
        for (w, lower) in members {
            for (m, c) in mask_counts(&cands, lower, arity).into_iter().enumerate() {
                out[m * nw + w] = c;
            }
        }
    }
    out
}

/// `Median(Agg(M, s))` for every pool model, in pool order; NaN where the
/// aggregate is empty.
pub(crate) fn model_medians(
    index: &HistoryIndex,
    pool: &ModelPool,
    codes: &[u32],
    target: Timestamp,
) -> Vec<f64> {
    let nw = pool.windows().len();
    let arity = pool.arity();
    let masks = 1usize << arity;
    let mut out = vec![f64::NAN; pool.len()];
    let mut seen = vec![0u32; masks];
    let mut lower_value = vec![0f64; masks];
    let mut upper_value = vec![0f64; masks];
    for (widest, members) in families(pool, target) {
        let mut cands = candidates(index, widest, &codes[..arity], target);
        if cands.is_empty() {
            continue;
        }
        cands.sort_by(|a, b| a.throughput.total_cmp(&b.throughput));
        for (w, lower) in members {
            let counts = mask_counts(&cands, lower, arity);
            seen.fill(0);
            for c in cands.iter().filter(|c| c.timestamp >= lower) {
                let p = c.pattern;
                let mut m = p;
                loop {
                    let mi = m as usize;
                    let rank = seen[mi];
                    let n = counts[mi];
                    if rank == (n - 1) / 2 {
                        lower_value[mi] = c.throughput;
                    }
                    if rank == n / 2 {
                        upper_value[mi] = c.throughput;
                    }
                    seen[mi] = rank + 1;
                    if m == 0 {
                        break;
                    }
                    m = (m - 1) & p;
                }
            }
            for (m, &n) in counts.iter().enumerate() {
                if n > 0 {
                    out[m * nw + w] = middle_value(lower_value[m], upper_value[m], n as usize);
                }
            }
        }
    }
    out
}

/// Memoized [`model_medians`] rows for sessions of one store.
///
/// A stored session's row depends only on records strictly older than it, so
/// it stays valid for every later prefix snapshot of the same store. A cache
/// silently resets when used with a different store or pool.
#[derive(Debug, Default)]
pub struct ScoreCache {
    owner: Option<(HistoryIndex, ModelPool)>,
    rows: BTreeMap<usize, Box<[f64]>>,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }

    /// Drops rows of sessions at store positions below `position`.
    pub fn evict_below(&mut self, position: usize) {
        self.rows = self.rows.split_off(&position);
    }

    fn bind(&mut self, index: &HistoryIndex, pool: &ModelPool) {
        let same = matches!(&self.owner, Some((i, p)) if i.same_store(index) && p == pool);
        if !same {
            self.rows.clear();
            self.owner = Some((index.clone(), pool.clone()));
        }
    }

    /// Rows for the stored sessions at `positions`, computing missing ones.
    pub(crate) fn rows(
        &mut self,
        index: &HistoryIndex,
        pool: &ModelPool,
        positions: &[usize],
    ) -> Vec<&[f64]> {
        self.bind(index, pool);
        for &p in positions {
            self.rows.entry(p).or_insert_with(|| {
                let row =
                    model_medians(index, pool, index.codes_at(p), index.record(p).timestamp());
                row.into_boxed_slice()
            });
        }
        positions.iter().map(|p| &*self.rows[p]).collect()
    }
}
