//! Brute-force reference implementations and corpus builders shared by the
//! integration tests. Nothing here goes through the index or the learner's
//! search; every quantity is recomputed by linear scan.

#![allow(dead_code)]

use dda_core::model::{FeatureVector, PredictionModel, SessionRecord, TimeWindow, Timestamp};
use dda_core::FeatureSchema;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ESTIMATION_FEATURES: [usize; 4] = [0, 1, 2, 3];
pub const ESTIMATION_WINDOW: i64 = 4 * 3_600;

pub fn schema4() -> FeatureSchema {
    FeatureSchema::new(["Target", "ISP", "Technology", "Downlink"]).unwrap()
}

pub fn in_window(window: TimeWindow, t: Timestamp, target: Timestamp) -> bool {
    if t >= target {
        return false;
    }
    let hour = |x: Timestamp| x.div_euclid(3_600);
    match window {
        TimeWindow::Recency(span) => (target - t) as u128 <= span as u128,
        TimeWindow::SameHourOfDay(d) => {
            target - t <= i64::from(d) * 86_400
                && hour(t).rem_euclid(24) == hour(target).rem_euclid(24)
        }
        TimeWindow::SameHourOfWeek(w) => {
            target - t <= i64::from(w) * 604_800
                && hour(t).rem_euclid(168) == hour(target).rem_euclid(168)
        }
    }
}

/// Positions of `records` in `Agg(model, target)`.
pub fn aggregate(
    records: &[SessionRecord],
    model: &PredictionModel,
    target: &SessionRecord,
) -> Vec<usize> {
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            in_window(model.window, r.timestamp(), target.timestamp())
                && (0..target.features().len())
                    .filter(|&i| model.mask.0 >> i & 1 == 1)
                    .all(|i| r.feature(i) == target.feature(i))
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

pub fn aggregate_median(
    records: &[SessionRecord],
    model: &PredictionModel,
    target: &SessionRecord,
) -> Option<f64> {
    let tp: Vec<f64> = aggregate(records, model, target)
        .into_iter()
        .map(|i| records[i].throughput())
        .collect();
    median(&tp)
}

/// Positions of the estimation set of `target`.
pub fn estimation_set(records: &[SessionRecord], target: &SessionRecord) -> Vec<usize> {
    let t = target.timestamp();
    records
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            r.timestamp() < t
                && t - r.timestamp() <= ESTIMATION_WINDOW
                && ESTIMATION_FEATURES
                    .iter()
                    .all(|&f| r.feature(f) == target.feature(f))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Mean normalized absolute error of `k * median` over the estimation set;
/// `None` if the set is empty or some aggregate is.
pub fn empirical_error(
    records: &[SessionRecord],
    model: &PredictionModel,
    estimation: &[usize],
    k: f64,
) -> Option<f64> {
    if estimation.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for &e in estimation {
        let s = &records[e];
        let m = aggregate_median(records, model, s)?;
        sum += (m * k - s.throughput()).abs() / s.throughput();
    }
    Some(sum / estimation.len() as f64)
}

/// Pool order: masks ascending, then windows in the given order.
pub fn pool(arity: usize, windows: &[TimeWindow]) -> Vec<PredictionModel> {
    (0..1u32 << arity)
        .flat_map(|m| {
            windows
                .iter()
                .map(move |&w| PredictionModel::new(dda_core::FeatureMask(m), w))
        })
        .collect()
}

/// First pool model (in pool order) attaining the minimum defined error,
/// skipping `excluded` positions.
pub fn argmin_model(
    records: &[SessionRecord],
    pool: &[PredictionModel],
    target: &SessionRecord,
    excluded: &[bool],
) -> Option<(usize, f64)> {
    let est = estimation_set(records, target);
    let mut best: Option<(usize, f64)> = None;
    for (i, model) in pool.iter().enumerate() {
        if excluded.get(i).copied().unwrap_or(false) {
            continue;
        }
        if let Some(e) = empirical_error(records, model, &est, 1.0) {
            if best.is_none_or(|(_, b)| e < b) {
                best = Some((i, e));
            }
        }
    }
    best
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small 4-feature corpus, sorted by timestamp: a sparse three-week
/// background plus a dense final six hours, throughputs from a short list so
/// that exact ties are common. Returns the records and a target after them.
pub fn small_corpus(seed: u64, n: usize) -> (Vec<SessionRecord>, SessionRecord) {
    let mut rng = rng(seed);
    let end: Timestamp = 1_600_000_000 + rng.random_range(0..86_400);
    let alphabet = |rng: &mut ChaCha8Rng, f: usize| {
        let sizes = [2, 2, 2, 3];
        format!("v{}", rng.random_range(0..sizes[f]))
    };
    let levels = [1.0, 2.0, 3.0, 5.0, 8.0];
    let mut records: Vec<SessionRecord> = (0..n)
        .map(|i| {
            let ts = if i % 5 < 2 {
                end - rng.random_range(1..21 * 86_400)
            } else {
                end - rng.random_range(1..6 * 3_600)
            };
            let values: Vec<String> = (0..4).map(|f| alphabet(&mut rng, f)).collect();
            let tp = levels[rng.random_range(0..levels.len())];
            SessionRecord::new(FeatureVector::new(values), ts, tp).unwrap()
        })
        .collect();
    records.sort_by_key(SessionRecord::timestamp);
    let values: Vec<String> = (0..4).map(|f| alphabet(&mut rng, f)).collect();
    let target = SessionRecord::new(FeatureVector::new(values), end, 1.0).unwrap();
    (records, target)
}
