//! Domain types shared by every predictor: the feature schema, session
//! records, time windows, prediction models and the error metrics.
//!
//! Timestamps are integer Unix seconds and all calendar arithmetic is done in
//! UTC. Throughput is always Mbit/s.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unix seconds, UTC.
pub type Timestamp = i64;

pub const SECS_PER_HOUR: i64 = 3_600;
pub const SECS_PER_DAY: i64 = 86_400;
pub const SECS_PER_WEEK: i64 = 604_800;

/// Width of the discrete time feature used by baselines and reports.
pub const TIME_BUCKET_SECS: i64 = 600;

/// Ordered, named categorical features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureSchema {
    names: Vec<String>,
}

impl FeatureSchema {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Config(
                "feature schema must have at least one feature".into(),
            ));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Config("feature names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate feature name `{name}`")));
            }
        }
        Ok(Self { names })
    }

    /// The seven per-session features of the FCC broadband measurements.
    pub fn fcc() -> Self {
        Self::new([
            "ClientID",
            "ISP",
            "State",
            "Technology",
            "Target",
            "Downlink",
            "Uplink",
        ])
        .expect("static schema is valid")
    }

    pub fn arity(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Like [`index_of`](Self::index_of) but a missing feature is a configuration error.
    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Config(format!("feature `{name}` is not in the schema")))
    }

    pub fn mask_of<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMask> {
        names.iter().try_fold(FeatureMask::EMPTY, |mask, name| {
            Ok(mask.with(self.require(name.as_ref())?))
        })
    }

    pub fn mask_names(&self, mask: FeatureMask) -> Vec<String> {
        mask.iter().map(|i| self.names[i].clone()).collect()
    }
}

impl TryFrom<Vec<String>> for FeatureSchema {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<FeatureSchema> for Vec<String> {
    fn from(schema: FeatureSchema) -> Self {
        schema.names
    }
}

/// Categorical feature values, one per schema feature. Values are opaque
/// tokens: advertised speeds such as `"25"` are categories, not numbers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector(Vec<String>);

impl FeatureVector {
    pub fn new<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(values.into_iter().map(Into::into).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> &str {
        &self.0[index]
    }

    pub fn values(&self) -> &[String] {
        &self.0
    }
}

/// One measured session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    features: FeatureVector,
    timestamp: Timestamp,
    throughput: f64,
}

impl SessionRecord {
    /// Fails unless `timestamp >= 0` and `throughput` is finite and positive.
    pub fn new(features: FeatureVector, timestamp: Timestamp, throughput: f64) -> Result<Self> {
        if timestamp < 0 {
            return Err(Error::Domain(format!("negative timestamp {timestamp}")));
        }
        if !(throughput.is_finite() && throughput > 0.0) {
            return Err(Error::Domain(format!(
                "throughput must be positive and finite, got {throughput}"
            )));
        }
        Ok(Self {
            features,
            timestamp,
            throughput,
        })
    }

    pub fn features(&self) -> &FeatureVector {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &str {
        self.features.get(index)
    }

    pub fn timestamp(&self) -> Timestamp {
        self.timestamp
    }

    /// Measured throughput in Mbit/s.
    pub fn throughput(&self) -> f64 {
        self.throughput
    }

    pub fn with_throughput(&self, throughput: f64) -> Result<Self> {
        Self::new(self.features.clone(), self.timestamp, throughput)
    }
}

/// Set of schema feature indices, bit `i` standing for feature `i`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FeatureMask(pub u32);

impl FeatureMask {
    pub const EMPTY: FeatureMask = FeatureMask(0);
    pub const MAX_FEATURES: usize = 16;

    pub fn full(arity: usize) -> Self {
        debug_assert!(arity <= Self::MAX_FEATURES);
        FeatureMask(((1u64 << arity) - 1) as u32)
    }

    pub fn single(index: usize) -> Self {
        FeatureMask(1 << index)
    }

    pub fn with(self, index: usize) -> Self {
        FeatureMask(self.0 | (1 << index))
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 & (1 << index) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset_of(self, other: FeatureMask) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..u32::BITS as usize).filter(move |&i| self.contains(i))
    }
}

/// Which history sessions, by time, a model aggregates. Every window is a
/// half-open interval ending (exclusive) at the target's timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "span", rename_all = "snake_case")]
pub enum TimeWindow {
    /// The last `secs` seconds; `u64::MAX` is unbounded.
    Recency(u64),
    /// Same UTC hour of day within the last `d` days.
    SameHourOfDay(u32),
    /// Same UTC (day of week, hour) within the last `w` weeks.
    SameHourOfWeek(u32),
}

impl TimeWindow {
    pub const UNBOUNDED: TimeWindow = TimeWindow::Recency(u64::MAX);

    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeWindow::Recency(0) => Err(Error::Config("recency span must be positive".into())),
            TimeWindow::SameHourOfDay(d) if !(1..=7).contains(&d) => Err(Error::Config(format!(
                "same-hour-of-day span must be 1..=7 days, got {d}"
            ))),
            TimeWindow::SameHourOfWeek(w) if !(1..=3).contains(&w) => Err(Error::Config(format!(
                "same-hour-of-week span must be 1..=3 weeks, got {w}"
            ))),
            _ => Ok(()),
        }
    }

    /// Inclusive lower bound of the window for a target at `target`.
    pub fn lower_bound(&self, target: Timestamp) -> Timestamp {
        match *self {
            TimeWindow::Recency(secs) => match i64::try_from(secs) {
                Ok(secs) => target.saturating_sub(secs),
                Err(_) => Timestamp::MIN,
            },
            TimeWindow::SameHourOfDay(d) => target - i64::from(d) * SECS_PER_DAY,
            TimeWindow::SameHourOfWeek(w) => target - i64::from(w) * SECS_PER_WEEK,
        }
    }

    /// Whether a session at `t` lies in this window relative to `target`.
    pub fn contains(&self, t: Timestamp, target: Timestamp) -> bool {
        if t >= target || t < self.lower_bound(target) {
            return false;
        }
        match self {
            TimeWindow::Recency(_) => true,
            TimeWindow::SameHourOfDay(_) => hour_of_day(t) == hour_of_day(target),
            TimeWindow::SameHourOfWeek(_) => hour_of_week(t) == hour_of_week(target),
        }
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TimeWindow::Recency(u64::MAX) => write!(f, "all"),
            TimeWindow::Recency(secs) => write!(f, "recency:{secs}s"),
            TimeWindow::SameHourOfDay(d) => write!(f, "hour_of_day:{d}d"),
            TimeWindow::SameHourOfWeek(w) => write!(f, "hour_of_week:{w}w"),
        }
    }
}

/// A (feature subset, time window) pair. An empty mask aggregates every
/// session in the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredictionModel {
    pub mask: FeatureMask,
    pub window: TimeWindow,
}

impl PredictionModel {
    pub fn new(mask: FeatureMask, window: TimeWindow) -> Self {
        Self { mask, window }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// `|p - q|`
    NonNormalizedAbsolute,
    /// `|p - q| / q`
    #[default]
    NormalizedAbsolute,
    /// `p - q`
    NonNormalizedSigned,
    /// `(p - q) / q`
    NormalizedSigned,
}

impl ErrorKind {
    pub fn is_normalized(self) -> bool {
        matches!(
            self,
            ErrorKind::NormalizedAbsolute | ErrorKind::NormalizedSigned
        )
    }
}

/// Error of prediction `p` against actual throughput `q`.
pub fn prediction_error(p: f64, q: f64, kind: ErrorKind) -> Result<f64> {
    if kind.is_normalized() && (q.is_nan() || q <= 0.0) {
        return Err(Error::Domain(format!(
            "normalized error needs positive actual throughput, got {q}"
        )));
    }
    Ok(match kind {
        ErrorKind::NonNormalizedAbsolute => (p - q).abs(),
        ErrorKind::NormalizedAbsolute => normalized_absolute_error(p, q),
        ErrorKind::NonNormalizedSigned => p - q,
        ErrorKind::NormalizedSigned => (p - q) / q,
    })
}

/// `|p - q| / q` without the domain check. The model search uses this in its
/// inner loop, so every path computing this metric goes through here.
#[inline]
pub(crate) fn normalized_absolute_error(p: f64, q: f64) -> f64 {
    (p - q).abs() / q
}

/// Median of an odd/even sample given its two middle order statistics.
#[inline]
pub(crate) fn middle_value(lower: f64, upper: f64, len: usize) -> f64 {
    if len % 2 == 1 {
        lower
    } else {
        (lower + upper) / 2.0
    }
}

/// Median, reordering `values` in place. Even-length samples average the two
/// middle order statistics. `None` when empty.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let len = values.len();
    if len == 0 {
        return None;
    }
    let upper_rank = len / 2;
    let (below, &mut upper, _) = values.select_nth_unstable_by(upper_rank, f64::total_cmp);
    let lower = if len % 2 == 1 {
        upper
    } else {
        below
            .iter()
            .copied()
            .max_by(f64::total_cmp)
            .expect("even length >= 2")
    };
    Some(middle_value(lower, upper, len))
}

/// `median(samples) * k`.
pub fn median_with_factor(samples: &[f64], k: f64) -> Result<f64> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!(
            "scale factor must be finite and >= 0, got {k}"
        )));
    }
    let mut values = samples.to_vec();
    let median = median_in_place(&mut values).ok_or(Error::EmptyAggregate)?;
    Ok(median * k)
}

/// Ten-minute bucket id of a timestamp.
pub fn time_bucket(timestamp: Timestamp) -> i64 {
    timestamp.div_euclid(TIME_BUCKET_SECS)
}

/// UTC hour of day, `0..24`.
pub fn hour_of_day(timestamp: Timestamp) -> i64 {
    timestamp.div_euclid(SECS_PER_HOUR).rem_euclid(24)
}

/// UTC hour of week, `0..168`. The epoch fell on a Thursday at 00:00, so equal
/// values mean equal (day of week, hour) pairs.
pub fn hour_of_week(timestamp: Timestamp) -> i64 {
    timestamp.div_euclid(SECS_PER_HOUR).rem_euclid(168)
}

/// Whether `candidate` belongs to `Agg(model, target)`.
pub fn matches(model: &PredictionModel, candidate: &SessionRecord, target: &SessionRecord) -> bool {
    model.window.contains(candidate.timestamp, target.timestamp)
        && model
            .mask
            .iter()
            .all(|i| candidate.feature(i) == target.feature(i))
}
