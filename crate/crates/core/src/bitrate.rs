//! Startup bitrate selection from a throughput prediction and the
//! AvgBitrate / GoodRatio evaluation.
//!
//! A rung is affordable when it is at most the budget (`alpha * prediction`,
//! or the actual throughput for the ideal reference). When no rung is
//! affordable the lowest one is picked anyway.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LADDER: [f64; 8] = [0.016, 0.4, 1.0, 2.5, 5.0, 8.0, 16.0, 35.0];

/// Strictly ascending, positive bitrates in Mbit/s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BitrateLadder(Vec<f64>);

impl BitrateLadder {
    pub fn new(rungs: Vec<f64>) -> Result<Self> {
        if rungs.is_empty() {
            return Err(Error::Config("bitrate ladder must not be empty".into()));
        }
        if rungs.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config(
                "bitrate ladder rungs must be positive".into(),
            ));
        }
        if rungs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "bitrate ladder must be strictly ascending".into(),
            ));
        }
        Ok(Self(rungs))
    }

    pub fn rungs(&self) -> &[f64] {
        &self.0
    }

    pub fn lowest(&self) -> f64 {
        self.0[0]
    }

    /// Highest rung `<= budget`, else the lowest rung.
    pub fn highest_within(&self, budget: f64) -> f64 {
        let affordable = self.0.partition_point(|&r| r <= budget);
        self.0[affordable.saturating_sub(1)]
    }
}

impl Default for BitrateLadder {
    fn default() -> Self {
        Self(DEFAULT_LADDER.to_vec())
    }
}

impl TryFrom<Vec<f64>> for BitrateLadder {
    type Error = Error;

    fn try_from(rungs: Vec<f64>) -> Result<Self> {
        Self::new(rungs)
    }
}

impl From<BitrateLadder> for Vec<f64> {
    fn from(ladder: BitrateLadder) -> Self {
        ladder.0
    }
}

pub fn select_bitrate(prediction: f64, alpha: f64, ladder: &BitrateLadder) -> f64 {
    ladder.highest_within(alpha * prediction)
}

pub fn ideal_bitrate(actual: f64, ladder: &BitrateLadder) -> f64 {
    ladder.highest_within(actual)
}

/// How the ideal reference picks its bitrate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdealMode {
    /// Highest ladder rung not above the actual throughput.
    #[default]
    Ladder,
    /// The actual throughput itself, off the ladder.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitrateOutcome {
    pub session: usize,
    pub predicted: f64,
    pub actual: f64,
    pub chosen: f64,
    /// `chosen <= actual`: the stream plays without rebuffering.
    pub good: bool,
}

impl BitrateOutcome {
    pub fn select(
        session: usize,
        predicted: f64,
        actual: f64,
        alpha: f64,
        ladder: &BitrateLadder,
    ) -> Self {
        Self::with_choice(
            session,
            predicted,
            actual,
            select_bitrate(predicted, alpha, ladder),
        )
    }

    pub fn ideal(session: usize, actual: f64, ladder: &BitrateLadder, mode: IdealMode) -> Self {
        let chosen = match mode {
            IdealMode::Ladder => ideal_bitrate(actual, ladder),
            IdealMode::Exact => actual,
        };
        Self::with_choice(session, actual, actual, chosen)
    }

    fn with_choice(session: usize, predicted: f64, actual: f64, chosen: f64) -> Self {
        Self {
            session,
            predicted,
            actual,
            chosen,
            good: chosen <= actual,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitrateSummary {
    /// Mean chosen bitrate, Mbit/s.
    pub avg_bitrate: f64,
    /// Fraction of sessions whose chosen bitrate does not exceed throughput.
    pub good_ratio: f64,
}

pub fn evaluate_bitrate(outcomes: &[BitrateOutcome]) -> Result<BitrateSummary> {
    if outcomes.is_empty() {
        return Err(Error::Domain("no bitrate outcomes to evaluate".into()));
    }
    let n = outcomes.len() as f64;
    Ok(BitrateSummary {
        avg_bitrate: outcomes.iter().map(|o| o.chosen).sum::<f64>() / n,
        good_ratio: outcomes.iter().filter(|o| o.good).count() as f64 / n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub avg_bitrate: f64,
    pub good_ratio: f64,
}

/// One evaluation row per safety margin over `(predicted, actual)` pairs.
pub fn sweep_alpha(
    predictions: &[(f64, f64)],
    ladder: &BitrateLadder,
    alphas: &[f64],
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::Domain("alpha sweep needs at least one alpha".into()));
    }
    if let Some(a) = alphas.iter().find(|a| a.is_nan() || **a <= 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {a}")));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let outcomes: Vec<_> = predictions
                .iter()
                .enumerate()
                .map(|(i, &(p, q))| BitrateOutcome::select(i, p, q, alpha, ladder))
                .collect();
            let summary = evaluate_bitrate(&outcomes)?;
            Ok(SweepRow {
                alpha,
                avg_bitrate: summary.avg_bitrate,
                good_ratio: summary.good_ratio,
            })
        })
        .collect()
}
