//! Chronological replay: every session after warmup is predicted from the
//! sessions strictly older than it, by every enabled predictor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    predict_global, predict_last_mile, predict_last_sample, predict_nearest_neighbor,
    BaselineFeatures, DEFAULT_NEAREST_NEIGHBOR_WINDOW,
};
use crate::bitrate::{evaluate_bitrate, BitrateLadder, BitrateOutcome, IdealMode};
use crate::error::{Error, Result};
use crate::history::HistoryIndex;
use crate::learner::{estimation_horizon, Dda, DdaConfig, FallbackLevel, ScoreCache};
use crate::model::{
    hour_of_day, prediction_error, time_bucket, ErrorKind, FeatureSchema, SessionRecord,
};

use super::report::{ErrorStats, EvaluationReport, IdealReference, PredictorSummary, SessionRow};
use super::sample::random_drop;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Dda,
    LastMile,
    LastSample,
    Global,
    NearestNeighbor,
    /// Predicts the actual throughput; an upper reference, not a predictor.
    Ideal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub predictors: Vec<PredictorKind>,
    /// Sessions within this many seconds of the first one are history only.
    pub warmup: u64,
    pub error_kind: ErrorKind,
    /// Bitrate safety margin.
    pub alpha: f64,
    pub ladder: BitrateLadder,
    pub drop_rate: f64,
    pub seed: u64,
    /// Feature for the per-partition breakdown; empty disables it.
    pub partition_feature: String,
    pub nearest_neighbor_window: u64,
    pub downlink_feature: String,
    pub client_feature: String,
    pub target_feature: String,
    /// Keep one row per scored session in the report.
    pub session_rows: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        let features = BaselineFeatures::default();
        Self {
            predictors: vec![
                PredictorKind::Dda,
                PredictorKind::LastMile,
                PredictorKind::LastSample,
                PredictorKind::Global,
            ],
            warmup: 36_000,
            error_kind: ErrorKind::default(),
            alpha: 0.8,
            ladder: BitrateLadder::default(),
            drop_rate: 0.0,
            seed: 0,
            partition_feature: "ISP".into(),
            nearest_neighbor_window: DEFAULT_NEAREST_NEIGHBOR_WINDOW,
            downlink_feature: features.downlink,
            client_feature: features.client,
            target_feature: features.target,
            session_rows: true,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(Error::Config(format!(
                "drop_rate must be in [0, 1], got {}",
                self.drop_rate
            )));
        }
        if self.predictors.is_empty() {
            return Err(Error::Config("no predictors enabled".into()));
        }
        if self.nearest_neighbor_window == 0 {
            return Err(Error::Config(
                "nearest_neighbor_window must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn baseline_features(&self) -> BaselineFeatures {
        BaselineFeatures {
            downlink: self.downlink_feature.clone(),
            client: self.client_feature.clone(),
            target: self.target_feature.clone(),
        }
    }
}

fn breakdown<K: Ord>(groups: BTreeMap<K, Vec<f64>>) -> BTreeMap<K, ErrorStats> {
    groups
        .into_iter()
        .filter_map(|(k, v)| ErrorStats::from_errors(&v).map(|s| (k, s)))
        .collect()
}

#[derive(Default)]
struct Tally {
    scored: usize,
    fallbacks: usize,
    errors: Vec<f64>,
    by_partition: BTreeMap<String, Vec<f64>>,
    by_hour: BTreeMap<i64, Vec<f64>>,
    outcomes: Vec<BitrateOutcome>,
}

impl Tally {
    fn summary(self) -> Result<PredictorSummary> {
        let predicted = self.errors.len();
        let coverage = if self.scored == 0 {
            0.0
        } else {
            predicted as f64 / self.scored as f64
        };
        Ok(PredictorSummary {
            scored: self.scored,
            predicted,
            coverage,
            no_history_fraction: 1.0 - coverage,
            fallback_fraction: if self.scored == 0 {
                0.0
            } else {
                self.fallbacks as f64 / self.scored as f64
            },
            error: ErrorStats::from_errors(&self.errors),
            bitrate: if self.outcomes.is_empty() {
                None
            } else {
                Some(evaluate_bitrate(&self.outcomes)?)
            },
            by_partition: breakdown(self.by_partition),
            by_hour: breakdown(self.by_hour),
        })
    }
}

fn model_key(schema: &FeatureSchema, predictor: &crate::learner::LearnedPredictor) -> String {
    let names = schema.mask_names(predictor.model.mask);
    let features = if names.is_empty() {
        "*".to_string()
    } else {
        names.join("+")
    };
    format!("{features}@{}", predictor.model.window)
}

/// Replays `records` in timestamp order and scores every enabled predictor.
pub fn replay_evaluate(
    schema: &FeatureSchema,
    records: &[SessionRecord],
    dda_config: &DdaConfig,
    config: &ReplayConfig,
) -> Result<EvaluationReport> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::Domain("no sessions to replay".into()));
    }
    let kept = random_drop(records, config.drop_rate, config.seed)?;
    let index = HistoryIndex::build(schema.clone(), kept)?;

    let enabled = |k| config.predictors.contains(&k);
    let dda = if enabled(PredictorKind::Dda) {
        Some(Dda::new(schema, dda_config.clone())?)
    } else {
        None
    };
    let features = config.baseline_features();
    if enabled(PredictorKind::LastMile) {
        schema.require(&features.downlink)?;
    }
    if enabled(PredictorKind::LastSample) {
        schema.require(&features.client)?;
        schema.require(&features.target)?;
    }
    let partition = match config.partition_feature.as_str() {
        "" => None,
        name => Some(schema.require(name)?),
    };

    let mut kinds = config.predictors.clone();
    kinds.sort();
    kinds.dedup();
    let mut tallies: BTreeMap<PredictorKind, Tally> =
        kinds.iter().map(|&k| (k, Tally::default())).collect();
    let mut rows = Vec::new();
    let mut ideal = (Vec::new(), Vec::new());
    let mut dda_models = BTreeMap::new();
    let mut dda_fallbacks = BTreeMap::new();
    let mut cache = ScoreCache::new();

    let scored_from = index.timestamps().first().map_or(0, |&t| {
        t.saturating_add(config.warmup.min(i64::MAX as u64) as i64)
    });
    for position in 0..index.len() {
        let target = index.record(position);
        let ts = target.timestamp();
        if ts < scored_from {
            continue;
        }
        let history = index.before(ts);
        let actual = target.throughput();
        let part = partition.map(|f| target.feature(f).to_string());
        let hour = hour_of_day(ts);
        let mut row = SessionRow {
            position,
            timestamp: ts,
            time_bucket: time_bucket(ts),
            hour,
            partition: part.clone(),
            actual,
            predictions: BTreeMap::new(),
            dda: None,
        };

        for &kind in &kinds {
            let mut fallback = false;
            let result = match kind {
                PredictorKind::Dda => {
                    let dda = dda.as_ref().expect("enabled");
                    let result = dda.predict_cached(&history, target, &mut cache);
                    let horizon = estimation_horizon(dda.config(), ts);
                    cache.evict_below(index.time_range(horizon, ts).start);
                    result.map(|p| {
                        fallback = p.predictor.fallback != FallbackLevel::None;
                        *dda_fallbacks.entry(p.predictor.fallback).or_insert(0) += 1;
                        if !fallback {
                            *dda_models
                                .entry(model_key(schema, &p.predictor))
                                .or_insert(0) += 1;
                        }
                        let value = p.value;
                        row.dda = Some(p.predictor);
                        value
                    })
                }
                PredictorKind::LastMile => predict_last_mile(&history, target, &features),
                PredictorKind::LastSample => predict_last_sample(&history, target, &features),
                PredictorKind::Global => predict_global(&history, target),
                PredictorKind::NearestNeighbor => {
                    predict_nearest_neighbor(&history, target, config.nearest_neighbor_window)
                }
                PredictorKind::Ideal => Ok(actual),
            };
            let prediction = match result {
                Ok(p) => Some(p),
                Err(Error::NoHistory) => None,
                Err(e) => return Err(e),
            };
            let tally = tallies.get_mut(&kind).expect("tally per kind");
            tally.scored += 1;
            if let Some(p) = prediction {
                let err = prediction_error(p, actual, config.error_kind)?;
                tally.errors.push(err);
                tally.fallbacks += usize::from(fallback);
                if let Some(part) = &part {
                    tally
                        .by_partition
                        .entry(part.clone())
                        .or_default()
                        .push(err);
                }
                tally.by_hour.entry(hour).or_default().push(err);
                tally.outcomes.push(BitrateOutcome::select(
                    position,
                    p,
                    actual,
                    config.alpha,
                    &config.ladder,
                ));
            }
            row.predictions.insert(kind, prediction);
        }
        ideal.0.push(BitrateOutcome::ideal(
            position,
            actual,
            &config.ladder,
            IdealMode::Ladder,
        ));
        ideal.1.push(BitrateOutcome::ideal(
            position,
            actual,
            &config.ladder,
            IdealMode::Exact,
        ));
        if config.session_rows {
            rows.push(row);
        }
    }

    let scored = ideal.0.len();
    let ideal = if scored == 0 {
        None
    } else {
        Some(IdealReference {
            ladder: evaluate_bitrate(&ideal.0)?,
            exact: evaluate_bitrate(&ideal.1)?,
        })
    };
    Ok(EvaluationReport {
        input_sessions: records.len(),
        sessions: index.len(),
        scored,
        error_kind: config.error_kind,
        alpha: config.alpha,
        partition_feature: partition.map(|f| schema.names()[f].clone()),
        predictors: tallies
            .into_iter()
            .map(|(k, t)| Ok((k, t.summary()?)))
            .collect::<Result<_>>()?,
        ideal,
        dda_models,
        dda_fallbacks,
        rows,
    })
}
