//! Per-session model selection.
//!
//! For a target session `s` the learner scores every pool model on the
//! estimation set `E(s)` (recent sessions similar to `s`) by mean normalized
//! absolute error, picks the best model whose own aggregate for `s` is large
//! enough, trains a multiplicative correction `k` on the same estimation set
//! and predicts `k * Median(Agg(M*, s))`.

mod pool;
mod profile;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{HistoryIndex, DEFAULT_ESTIMATION_FEATURES, DEFAULT_ESTIMATION_WINDOW};
use crate::model::{
    median_in_place, normalized_absolute_error, FeatureMask, FeatureSchema, PredictionModel,
    SessionRecord, TimeWindow, Timestamp,
};

pub use pool::{enumerate_models, ModelPool};
pub use profile::ScoreCache;

pub const DEFAULT_RECENCY_SPANS: [u64; 7] = [600, 1_800, 3_600, 7_200, 14_400, 21_600, 36_000];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdaConfig {
    /// Smallest `|Agg(M*, s)|` a prediction may rest on.
    pub min_support: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub k_step: f64,
    /// Recency window lengths, seconds.
    pub recency_spans: Vec<u64>,
    /// Same-hour-of-day look-backs, days.
    pub day_spans: Vec<u32>,
    /// Same-hour-of-week look-backs, weeks.
    pub week_spans: Vec<u32>,
    pub estimation_features: Vec<String>,
    /// Estimation-set look-back, seconds.
    pub estimation_window: u64,
    /// Look-back of the first fallback when the pool is exhausted, seconds.
    pub fallback_window: u64,
}

impl Default for DdaConfig {
    fn default() -> Self {
        Self {
            min_support: 20,
            k_min: 0.0,
            k_max: 5.0,
            k_step: 0.05,
            recency_spans: DEFAULT_RECENCY_SPANS.to_vec(),
            day_spans: (1..=7).collect(),
            week_spans: (1..=3).collect(),
            estimation_features: DEFAULT_ESTIMATION_FEATURES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            estimation_window: DEFAULT_ESTIMATION_WINDOW,
            fallback_window: 36_000,
        }
    }
}

impl DdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_support < 1 {
            return Err(Error::Config("min_support must be at least 1".into()));
        }
        if !(self.k_min >= 0.0 && self.k_max >= self.k_min && self.k_max.is_finite()) {
            return Err(Error::Config(format!(
                "k grid needs 0 <= k_min <= k_max, got [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if self.k_step.is_nan() || self.k_step <= 0.0 {
            return Err(Error::Config("k_step must be positive".into()));
        }
        let steps = (self.k_max - self.k_min) / self.k_step;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::Config(
                "k range must be a whole number of steps".into(),
            ));
        }
        if self.estimation_window == 0 || self.fallback_window == 0 {
            return Err(Error::Config(
                "estimation and fallback windows must be positive".into(),
            ));
        }
        let windows = self.windows();
        if windows.is_empty() {
            return Err(Error::Config("at least one time window is required".into()));
        }
        windows.iter().try_for_each(TimeWindow::validate)
    }

    /// Time windows in pool order: recency, then same hour of day, then same hour of week.
    pub fn windows(&self) -> Vec<TimeWindow> {
        let recency = self.recency_spans.iter().map(|&s| TimeWindow::Recency(s));
        let days = self.day_spans.iter().map(|&d| TimeWindow::SameHourOfDay(d));
        let weeks = self
            .week_spans
            .iter()
            .map(|&w| TimeWindow::SameHourOfWeek(w));
        recency.chain(days).chain(weeks).collect()
    }

    /// Candidate scale factors, ascending, endpoints included.
    pub fn k_grid(&self) -> Vec<f64> {
        let steps = ((self.k_max - self.k_min) / self.k_step).round() as usize;
        if steps == 0 {
            return vec![self.k_min];
        }
        let span = self.k_max - self.k_min;
        (0..=steps)
            .map(|i| self.k_min + span * i as f64 / steps as f64)
            .collect()
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum FallbackLevel {
    #[default]
    None,
    /// Median of every session in the fallback window.
    PoolExhaustedRecent,
    /// Median of the entire prior history.
    PoolExhaustedGlobal,
}

/// How a prediction was made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedPredictor {
    pub model: PredictionModel,
    pub scale: f64,
    /// `|Agg(model, s)|`.
    pub support: usize,
    pub fallback: FallbackLevel,
    /// `|E(s)|`.
    pub estimation_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Mbit/s.
    pub value: f64,
    pub predictor: LearnedPredictor,
}

/// A configured predictor bound to one feature schema.
#[derive(Clone, Debug)]
pub struct Dda {
    config: DdaConfig,
    pool: ModelPool,
    estimation_mask: FeatureMask,
    k_grid: Vec<f64>,
}

impl Dda {
    pub fn new(schema: &FeatureSchema, config: DdaConfig) -> Result<Self> {
        config.validate()?;
        if schema.arity() > FeatureMask::MAX_FEATURES {
            return Err(Error::Config(format!(
                "model pool supports at most {} features",
                FeatureMask::MAX_FEATURES
            )));
        }
        let estimation_mask = schema.mask_of(&config.estimation_features)?;
        Ok(Self {
            pool: enumerate_models(schema, &config),
            k_grid: config.k_grid(),
            estimation_mask,
            config,
        })
    }

    pub fn config(&self) -> &DdaConfig {
        &self.config
    }

    pub fn pool(&self) -> &ModelPool {
        &self.pool
    }

    fn estimation_model(&self) -> PredictionModel {
        PredictionModel::new(
            self.estimation_mask,
            TimeWindow::Recency(self.config.estimation_window),
        )
    }

    /// Predicts `target` from the records of `index` strictly older than it.
    pub fn predict(&self, index: &HistoryIndex, target: &SessionRecord) -> Result<Prediction> {
        self.predict_cached(index, target, &mut ScoreCache::new())
    }

    /// [`predict`](Self::predict), reusing estimation-session scores held in
    /// `cache` across targets predicted from the same store.
    pub fn predict_cached(
        &self,
        index: &HistoryIndex,
        target: &SessionRecord,
        cache: &mut ScoreCache,
    ) -> Result<Prediction> {
        let ts = target.timestamp();
        if index.timestamps().first().is_none_or(|&first| first >= ts) {
            return Err(Error::NoHistory);
        }
        let codes = index.encode(target.features());
        let estimation = index.aggregate_positions_coded(&self.estimation_model(), &codes, ts);

        let mut selected = None;
        if !estimation.is_empty() {
            let truth: Vec<f64> = estimation.iter().map(|&p| index.throughputs()[p]).collect();
            let rows = cache.rows(index, &self.pool, &estimation);
            let errors = mean_errors(&rows, &truth, self.pool.len());
            let counts = profile::support_counts(index, &self.pool, &codes, ts);
            selected = ranked_models(&errors)
                .into_iter()
                .find(|&i| counts[i] as usize >= self.config.min_support)
                .map(|i| {
                    let medians: Vec<f64> = rows.iter().map(|row| row[i]).collect();
                    (
                        i,
                        counts[i] as usize,
                        best_scale(&medians, &truth, &self.k_grid),
                    )
                });
        }

        match selected {
            Some((position, support, scale)) => {
                let model = self.pool.model(position);
                let mut agg: Vec<f64> = index
                    .aggregate_positions_coded(&model, &codes, ts)
                    .into_iter()
                    .map(|p| index.throughputs()[p])
                    .collect();
                debug_assert_eq!(agg.len(), support);
                let median = median_in_place(&mut agg).expect("supported model");
                Ok(Prediction {
                    value: median * scale,
                    predictor: LearnedPredictor {
                        model,
                        scale,
                        support,
                        fallback: FallbackLevel::None,
                        estimation_size: estimation.len(),
                    },
                })
            }
            None => self.fallback(index, target, estimation.len()),
        }
    }

    fn fallback(
        &self,
        index: &HistoryIndex,
        target: &SessionRecord,
        estimation_size: usize,
    ) -> Result<Prediction> {
        let levels = [
            (
                TimeWindow::Recency(self.config.fallback_window),
                FallbackLevel::PoolExhaustedRecent,
            ),
            (TimeWindow::UNBOUNDED, FallbackLevel::PoolExhaustedGlobal),
        ];
        for (window, level) in levels {
            let model = PredictionModel::new(FeatureMask::EMPTY, window);
            let mut agg = index.aggregate_throughputs(&model, target);
            if let Some(median) = median_in_place(&mut agg) {
                return Ok(Prediction {
                    value: median,
                    predictor: LearnedPredictor {
                        model,
                        scale: 1.0,
                        support: agg.len(),
                        fallback: level,
                        estimation_size,
                    },
                });
            }
        }
        Err(Error::NoHistory)
    }
}

/// Mean normalized absolute error at `k = 1` of every model over the
/// estimation rows; NaN marks a model undefined on some estimation session.
fn mean_errors(rows: &[&[f64]], truth: &[f64], models: usize) -> Vec<f64> {
    let mut sums = vec![0.0f64; models];
    for (row, &w) in rows.iter().zip(truth) {
        for (sum, &median) in sums.iter_mut().zip(row.iter()) {
            *sum += normalized_absolute_error(median, w);
        }
    }
    let n = rows.len() as f64;
    sums.iter_mut().for_each(|s| *s /= n);
    sums
}

/// Pool positions with a defined error, best first; ties keep pool order.
fn ranked_models(errors: &[f64]) -> Vec<usize> {
    let mut ranked: Vec<usize> = (0..errors.len()).filter(|&i| !errors[i].is_nan()).collect();
    ranked.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));
    ranked
}

fn scaled_error(medians: &[f64], truth: &[f64], k: f64) -> f64 {
    let sum = medians.iter().zip(truth).fold(0.0, |acc, (&m, &w)| {
        acc + normalized_absolute_error(m * k, w)
    });
    sum / medians.len() as f64
}

/// Grid argmin of the scaled error. Ties go to the `k` nearest 1, then the
/// smaller one; an undefined objective yields the neutral 1.
fn best_scale(medians: &[f64], truth: &[f64], grid: &[f64]) -> f64 {
    if medians.is_empty() || medians.iter().any(|m| m.is_nan()) {
        return 1.0;
    }
    let mut best: Option<(f64, f64)> = None;
    for &k in grid {
        let err = scaled_error(medians, truth, k);
        let better = match best {
            None => true,
            Some((best_k, best_err)) => {
                err < best_err || (err == best_err && (k - 1.0).abs() < (best_k - 1.0).abs())
            }
        };
        if better {
            best = Some((k, err));
        }
    }
    best.map_or(1.0, |(k, _)| k)
}

fn estimation_truth(est_set: &[&SessionRecord]) -> Vec<f64> {
    est_set.iter().map(|r| r.throughput()).collect()
}

fn medians_for(
    index: &HistoryIndex,
    model: &PredictionModel,
    est_set: &[&SessionRecord],
) -> Vec<f64> {
    est_set
        .iter()
        .map(|s| {
            let mut agg = index.aggregate_throughputs(model, s);
            median_in_place(&mut agg).unwrap_or(f64::NAN)
        })
        .collect()
}

/// Mean over `est_set` of the normalized absolute error of
/// `k * Median(Agg(model, s'))`. `None` when `est_set` is empty or any
/// aggregate is empty.
pub fn empirical_error(
    index: &HistoryIndex,
    model: &PredictionModel,
    est_set: &[&SessionRecord],
    k: f64,
) -> Option<f64> {
    if est_set.is_empty() {
        return None;
    }
    let medians = medians_for(index, model, est_set);
    if medians.iter().any(|m| m.is_nan()) {
        return None;
    }
    Some(scaled_error(&medians, &estimation_truth(est_set), k))
}

/// The estimation set of `target` under `config`, oldest first.
pub fn estimation_set<'a>(
    index: &'a HistoryIndex,
    target: &SessionRecord,
    config: &DdaConfig,
) -> Result<Vec<&'a SessionRecord>> {
    Ok(index
        .estimation_set(
            target,
            &config.estimation_features,
            config.estimation_window,
        )?
        .into_iter()
        .map(|p| index.record(p))
        .collect())
}

/// `argmin` over the pool (minus `excluded` positions) of the empirical error
/// at `k = 1`, ties broken by pool position.
pub fn learn_model_excluding(
    index: &HistoryIndex,
    pool: &ModelPool,
    target: &SessionRecord,
    config: &DdaConfig,
    excluded: &[bool],
) -> Result<PredictionModel> {
    let estimation = index.estimation_set(
        target,
        &config.estimation_features,
        config.estimation_window,
    )?;
    if estimation.is_empty() {
        return Err(Error::NoUsableModel("empty estimation set"));
    }
    let truth: Vec<f64> = estimation.iter().map(|&p| index.throughputs()[p]).collect();
    let mut cache = ScoreCache::new();
    let rows = cache.rows(index, pool, &estimation);
    let errors = mean_errors(&rows, &truth, pool.len());
    ranked_models(&errors)
        .into_iter()
        .find(|&i| !excluded.get(i).copied().unwrap_or(false))
        .map(|i| pool.model(i))
        .ok_or(Error::NoUsableModel("no model has a defined error"))
}

pub fn learn_model(
    index: &HistoryIndex,
    pool: &ModelPool,
    target: &SessionRecord,
    config: &DdaConfig,
) -> Result<PredictionModel> {
    learn_model_excluding(index, pool, target, config, &[])
}

/// Best scale factor for `model` on `est_set` over the configured grid.
pub fn learn_scale(
    index: &HistoryIndex,
    model: &PredictionModel,
    est_set: &[&SessionRecord],
    config: &DdaConfig,
) -> f64 {
    let medians = medians_for(index, model, est_set);
    best_scale(&medians, &estimation_truth(est_set), &config.k_grid())
}

/// One-shot prediction with a fresh predictor; see [`Dda::predict`].
pub fn predict(
    index: &HistoryIndex,
    target: &SessionRecord,
    config: &DdaConfig,
) -> Result<Prediction> {
    Dda::new(index.schema(), config.clone())?.predict(index, target)
}

/// Timestamp below which no future estimation set (for targets at or after
/// `target`) can reach.
pub(crate) fn estimation_horizon(config: &DdaConfig, target: Timestamp) -> Timestamp {
    TimeWindow::Recency(config.estimation_window).lower_bound(target)
}
