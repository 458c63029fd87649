//! Reference predictors and the relative information gain diagnostic.
//!
//! Every predictor only consults records strictly older than the target and
//! reports [`Error::NoHistory`] instead of guessing when nothing qualifies.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::HistoryIndex;
use crate::model::{median_in_place, FeatureMask, PredictionModel, SessionRecord, TimeWindow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LastMile,
    LastSample,
    Global,
    NearestNeighbor,
}

/// Names of the features the baselines key on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineFeatures {
    pub downlink: String,
    pub client: String,
    pub target: String,
}

impl Default for BaselineFeatures {
    fn default() -> Self {
        Self {
            downlink: "Downlink".into(),
            client: "ClientID".into(),
            target: "Target".into(),
        }
    }
}

pub const DEFAULT_NEAREST_NEIGHBOR_WINDOW: u64 = 300;

fn median_of(index: &HistoryIndex, model: &PredictionModel, target: &SessionRecord) -> Result<f64> {
    let mut agg = index.aggregate_throughputs(model, target);
    median_in_place(&mut agg).ok_or(Error::NoHistory)
}

/// Median throughput of every earlier session with the target's downlink speed.
pub fn predict_last_mile(
    index: &HistoryIndex,
    target: &SessionRecord,
    features: &BaselineFeatures,
) -> Result<f64> {
    let downlink = index.schema().require(&features.downlink)?;
    median_of(
        index,
        &PredictionModel::new(FeatureMask::single(downlink), TimeWindow::UNBOUNDED),
        target,
    )
}

/// Throughput of the latest earlier session of the same client and target
/// server; on equal timestamps the one ingested last.
pub fn predict_last_sample(
    index: &HistoryIndex,
    target: &SessionRecord,
    features: &BaselineFeatures,
) -> Result<f64> {
    let schema = index.schema();
    let mask = FeatureMask::single(schema.require(&features.client)?)
        .with(schema.require(&features.target)?);
    let model = PredictionModel::new(mask, TimeWindow::UNBOUNDED);
    index
        .aggregate_positions(&model, target)
        .last()
        .map(|&p| index.throughputs()[p])
        .ok_or(Error::NoHistory)
}

/// Median of all earlier throughputs.
pub fn predict_global(index: &HistoryIndex, target: &SessionRecord) -> Result<f64> {
    median_of(
        index,
        &PredictionModel::new(FeatureMask::EMPTY, TimeWindow::UNBOUNDED),
        target,
    )
}

/// Median of earlier sessions matching every feature within `window_secs`.
pub fn predict_nearest_neighbor(
    index: &HistoryIndex,
    target: &SessionRecord,
    window_secs: u64,
) -> Result<f64> {
    median_of(
        index,
        &PredictionModel::new(
            FeatureMask::full(index.arity()),
            TimeWindow::Recency(window_secs),
        ),
        target,
    )
}

/// Shannon entropy, bits, of a frequency table.
fn entropy<I: IntoIterator<Item = usize>>(counts: I, total: usize) -> f64 {
    let n = total as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// `RIG(Y|X) = 1 - H(Y|X) / H(Y)`, or 0 when `H(Y) = 0`.
pub fn relative_information_gain<Y, X>(labels: &[Y], feature: &[X]) -> Result<f64>
where
    Y: Eq + Hash,
    X: Eq + Hash,
{
    if labels.is_empty() || labels.len() != feature.len() {
        return Err(Error::Domain(format!(
            "RIG needs equal non-empty inputs, got {} labels and {} feature values",
            labels.len(),
            feature.len()
        )));
    }
    let total = labels.len();
    let mut y_counts: HashMap<&Y, usize> = HashMap::new();
    let mut by_x: HashMap<&X, HashMap<&Y, usize>> = HashMap::new();
    for (y, x) in labels.iter().zip(feature) {
        *y_counts.entry(y).or_default() += 1;
        *by_x.entry(x).or_default().entry(y).or_default() += 1;
    }
    let h_y = entropy(y_counts.into_values(), total);
    if h_y <= 0.0 {
        return Ok(0.0);
    }
    let h_y_given_x: f64 = by_x
        .into_values()
        .map(|ys| {
            let n_x: usize = ys.values().sum();
            n_x as f64 / total as f64 * entropy(ys.into_values(), n_x)
        })
        .sum();
    Ok((1.0 - h_y_given_x / h_y).clamp(0.0, 1.0))
}

/// Equal-width bins over `ln(throughput)`, `0..bins`. Non-positive
/// throughputs are a domain error.
pub fn discretize_log_throughput(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::Domain("bin count must be positive".into()));
    }
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!(
            "cannot take log of throughput {bad}"
        )));
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    Ok(logs
        .iter()
        .map(|&l| {
            if width > 0.0 {
                (((l - lo) / width) as usize).min(bins - 1)
            } else {
                0
            }
        })
        .collect())
}
