//! Replay results and their JSON form.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bitrate::BitrateSummary;
use crate::error::{Error, Result};
use crate::learner::{FallbackLevel, LearnedPredictor};
use crate::model::{ErrorKind, Timestamp};

use super::replay::PredictorKind;

/// Linear-interpolation percentile (`q` in `[0, 1]`) of ascending `sorted`.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    let last = sorted.len().checked_sub(1)?;
    let h = last as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(last);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub p10: f64,
    pub p20: f64,
    pub p50: f64,
    pub p80: f64,
    pub p90: f64,
}

impl ErrorStats {
    /// `None` for an empty sample.
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p = |q| percentile(&sorted, q).expect("non-empty");
        Some(Self {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p10: p(0.1),
            p20: p(0.2),
            p50: p(0.5),
            p80: p(0.8),
            p90: p(0.9),
        })
    }

    pub fn percentiles(&self) -> [f64; 5] {
        [self.p10, self.p20, self.p50, self.p80, self.p90]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorSummary {
    /// Sessions after warmup.
    pub scored: usize,
    /// Scored sessions that got a prediction.
    pub predicted: usize,
    /// `predicted / scored`.
    pub coverage: f64,
    /// `1 - coverage`: scored sessions without any usable history.
    pub no_history_fraction: f64,
    /// Scored sessions answered by a fallback instead of a learned model.
    pub fallback_fraction: f64,
    pub error: Option<ErrorStats>,
    pub bitrate: Option<BitrateSummary>,
    pub by_partition: BTreeMap<String, ErrorStats>,
    /// Keyed by UTC hour of day.
    pub by_hour: BTreeMap<i64, ErrorStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealReference {
    /// Highest ladder rung not above the actual throughput.
    pub ladder: BitrateSummary,
    /// The actual throughput itself.
    pub exact: BitrateSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    /// Position in the timestamp-sorted replayed corpus.
    pub position: usize,
    pub timestamp: Timestamp,
    pub time_bucket: i64,
    pub hour: i64,
    pub partition: Option<String>,
    pub actual: f64,
    pub predictions: BTreeMap<PredictorKind, Option<f64>>,
    pub dda: Option<LearnedPredictor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Sessions given to the replay.
    pub input_sessions: usize,
    /// Sessions left after random dropping.
    pub sessions: usize,
    /// Sessions after warmup.
    pub scored: usize,
    pub error_kind: ErrorKind,
    pub alpha: f64,
    pub partition_feature: Option<String>,
    pub predictors: BTreeMap<PredictorKind, PredictorSummary>,
    pub ideal: Option<IdealReference>,
    /// How often DDA picked each model, keyed `features@window`.
    pub dda_models: BTreeMap<String, usize>,
    pub dda_fallbacks: BTreeMap<FallbackLevel, usize>,
    pub rows: Vec<SessionRow>,
}

impl EvaluationReport {
    pub fn summary(&self, kind: PredictorKind) -> Option<&PredictorSummary> {
        self.predictors.get(&kind)
    }

    /// `(prediction, actual)` for every session `kind` predicted.
    pub fn prediction_pairs(&self, kind: PredictorKind) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| {
                r.predictions
                    .get(&kind)
                    .copied()
                    .flatten()
                    .map(|p| (p, r.actual))
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("report: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }
}

pub fn emit_report(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<EvaluationReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvaluationReport::from_json(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
