//! Time-ordered session store answering `Agg(M, s)` queries.
//!
//! An index is a frozen snapshot. [`HistoryIndex::prefix`] and
//! [`HistoryIndex::before`] give cheap views onto the first records of the
//! same store, which is how replay evaluation hands each target a history
//! that cannot contain its own or later measurements.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{
    FeatureMask, FeatureSchema, FeatureVector, PredictionModel, SessionRecord, TimeWindow,
    Timestamp, SECS_PER_DAY, SECS_PER_HOUR, SECS_PER_WEEK,
};

/// Code of a feature value that never occurred in the store.
pub const UNKNOWN_CODE: u32 = u32::MAX;

pub const DEFAULT_ESTIMATION_FEATURES: [&str; 4] = ["Target", "ISP", "Technology", "Downlink"];
pub const DEFAULT_ESTIMATION_WINDOW: u64 = 4 * 3_600;

#[derive(Debug)]
struct Store {
    schema: FeatureSchema,
    records: Vec<SessionRecord>,
    timestamps: Vec<Timestamp>,
    throughputs: Vec<f64>,
    // Row-major, `arity` codes per record.
    codes: Vec<u32>,
    dictionaries: Vec<HashMap<String, u32>>,
    // postings[feature][code] = ascending record positions.
    postings: Vec<Vec<Vec<u32>>>,
}

#[derive(Clone, Debug)]
pub struct HistoryIndex {
    store: Arc<Store>,
    len: usize,
}

impl HistoryIndex {
    /// Sorts `records` by timestamp (stable, so ingest order survives among
    /// equal timestamps) and builds the inverted maps.
    pub fn build(schema: FeatureSchema, mut records: Vec<SessionRecord>) -> Result<Self> {
        let arity = schema.arity();
        if arity > FeatureMask::MAX_FEATURES {
            return Err(Error::Config(format!(
                "at most {} features are supported, schema has {arity}",
                FeatureMask::MAX_FEATURES
            )));
        }
        if let Some(bad) = records.iter().find(|r| r.features().len() != arity) {
            return Err(Error::Domain(format!(
                "record has {} feature values, schema has {arity}",
                bad.features().len()
            )));
        }
        records.sort_by_key(SessionRecord::timestamp);

        let mut dictionaries: Vec<HashMap<String, u32>> = vec![HashMap::new(); arity];
        let mut postings: Vec<Vec<Vec<u32>>> = vec![Vec::new(); arity];
        let mut codes = Vec::with_capacity(records.len() * arity);
        for (pos, record) in records.iter().enumerate() {
            for (f, value) in record.features().values().iter().enumerate() {
                let next = dictionaries[f].len() as u32;
                let code = *dictionaries[f].entry(value.clone()).or_insert(next);
                if code == next {
                    postings[f].push(Vec::new());
                }
                postings[f][code as usize].push(pos as u32);
                codes.push(code);
            }
        }
        let timestamps = records.iter().map(SessionRecord::timestamp).collect();
        let throughputs = records.iter().map(SessionRecord::throughput).collect();
        let len = records.len();
        Ok(Self {
            store: Arc::new(Store {
                schema,
                records,
                timestamps,
                throughputs,
                codes,
                dictionaries,
                postings,
            }),
            len,
        })
    }

    pub fn empty(schema: FeatureSchema) -> Self {
        Self::build(schema, Vec::new()).expect("empty index")
    }

    /// A new index holding these records plus `more`.
    pub fn extended(&self, more: impl IntoIterator<Item = SessionRecord>) -> Result<Self> {
        let mut records = self.records().to_vec();
        records.extend(more);
        Self::build(self.schema().clone(), records)
    }

    /// View of the first `len` records.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            store: Arc::clone(&self.store),
            len: len.min(self.len),
        }
    }

    /// View of the records strictly before `t`.
    pub fn before(&self, t: Timestamp) -> Self {
        self.prefix(self.timestamps().partition_point(|&ts| ts < t))
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.store.schema
    }

    pub fn arity(&self) -> usize {
        self.store.schema.arity()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn records(&self) -> &[SessionRecord] {
        &self.store.records[..self.len]
    }

    pub fn record(&self, pos: usize) -> &SessionRecord {
        &self.records()[pos]
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.store.timestamps[..self.len]
    }

    pub fn throughputs(&self) -> &[f64] {
        &self.store.throughputs[..self.len]
    }

    pub(crate) fn same_store(&self, other: &HistoryIndex) -> bool {
        Arc::ptr_eq(&self.store, &other.store)
    }

    pub(crate) fn codes_at(&self, pos: usize) -> &[u32] {
        let arity = self.arity();
        &self.store.codes[pos * arity..(pos + 1) * arity]
    }

    /// Dictionary codes for a feature vector; unseen values map to [`UNKNOWN_CODE`].
    pub fn encode(&self, features: &FeatureVector) -> Vec<u32> {
        features
            .values()
            .iter()
            .zip(&self.store.dictionaries)
            .map(|(value, dict)| dict.get(value).copied().unwrap_or(UNKNOWN_CODE))
            .collect()
    }

    /// Positions in this view of records with `feature == code`.
    pub fn postings(&self, feature: usize, code: u32) -> &[u32] {
        match self.store.postings[feature].get(code as usize) {
            Some(list) => {
                let end = list.partition_point(|&p| (p as usize) < self.len);
                &list[..end]
            }
            None => &[],
        }
    }

    /// Positions with `lo <= timestamp < hi`.
    pub fn time_range(&self, lo: Timestamp, hi: Timestamp) -> Range<usize> {
        let ts = self.timestamps();
        let start = ts.partition_point(|&t| t < lo);
        let end = ts.partition_point(|&t| t < hi).max(start);
        start..end
    }

    /// Ascending, disjoint position ranges covering `window` for a target at `target`.
    pub fn window_ranges(&self, window: TimeWindow, target: Timestamp) -> Vec<Range<usize>> {
        window_slots(window, target)
            .into_iter()
            .map(|(lo, hi)| self.time_range(lo, hi))
            .filter(|r| !r.is_empty())
            .collect()
    }

    /// Positions of `Agg(model, target)` in ascending (time) order.
    pub fn aggregate_positions(
        &self,
        model: &PredictionModel,
        target: &SessionRecord,
    ) -> Vec<usize> {
        let codes = self.encode(target.features());
        self.aggregate_positions_coded(model, &codes, target.timestamp())
    }

    pub(crate) fn aggregate_positions_coded(
        &self,
        model: &PredictionModel,
        target_codes: &[u32],
        target_ts: Timestamp,
    ) -> Vec<usize> {
        let ranges = self.window_ranges(model.window, target_ts);
        let mut out = Vec::new();
        if model.mask.is_empty() {
            for r in ranges {
                out.extend(r);
            }
            return out;
        }
        if model.mask.iter().any(|f| target_codes[f] == UNKNOWN_CODE) {
            return out;
        }
        // Drive the scan from the shortest posting list and probe the rest.
        let driver = model
            .mask
            .iter()
            .min_by_key(|&f| self.postings(f, target_codes[f]).len())
            .expect("non-empty mask");
        let list = self.postings(driver, target_codes[driver]);
        let others: Vec<usize> = model.mask.iter().filter(|&f| f != driver).collect();
        for r in ranges {
            let lo = list.partition_point(|&p| (p as usize) < r.start);
            let hi = list.partition_point(|&p| (p as usize) < r.end);
            for &p in &list[lo..hi] {
                let codes = self.codes_at(p as usize);
                if others.iter().all(|&f| codes[f] == target_codes[f]) {
                    out.push(p as usize);
                }
            }
        }
        out
    }

    /// The records of `Agg(model, target)`, oldest first.
    pub fn aggregate(
        &self,
        model: &PredictionModel,
        target: &SessionRecord,
    ) -> Vec<&SessionRecord> {
        self.aggregate_positions(model, target)
            .into_iter()
            .map(|p| self.record(p))
            .collect()
    }

    pub fn aggregate_throughputs(
        &self,
        model: &PredictionModel,
        target: &SessionRecord,
    ) -> Vec<f64> {
        let tp = self.throughputs();
        self.aggregate_positions(model, target)
            .into_iter()
            .map(|p| tp[p])
            .collect()
    }

    /// Estimation set: sessions matching `target` on `features` within the
    /// last `window_secs` seconds.
    pub fn estimation_set<S: AsRef<str>>(
        &self,
        target: &SessionRecord,
        features: &[S],
        window_secs: u64,
    ) -> Result<Vec<usize>> {
        let mask = self.schema().mask_of(features)?;
        Ok(self.aggregate_positions(
            &PredictionModel::new(mask, TimeWindow::Recency(window_secs)),
            target,
        ))
    }

    /// [`estimation_set`](Self::estimation_set) with the default features and window.
    pub fn default_estimation_set(&self, target: &SessionRecord) -> Result<Vec<usize>> {
        self.estimation_set(
            target,
            &DEFAULT_ESTIMATION_FEATURES,
            DEFAULT_ESTIMATION_WINDOW,
        )
    }
}

/// Half-open timestamp intervals making up a window, ascending.
pub(crate) fn window_slots(window: TimeWindow, target: Timestamp) -> Vec<(Timestamp, Timestamp)> {
    let lower = window.lower_bound(target);
    let (periods, period) = match window {
        TimeWindow::Recency(_) => return vec![(lower, target)],
        TimeWindow::SameHourOfDay(d) => (i64::from(d), SECS_PER_DAY),
        TimeWindow::SameHourOfWeek(w) => (i64::from(w), SECS_PER_WEEK),
    };
    let hour_start = target.div_euclid(SECS_PER_HOUR) * SECS_PER_HOUR;
    (0..=periods)
        .rev()
        .filter_map(|j| {
            let start = (hour_start - j * period).max(lower);
            let end = (hour_start - j * period + SECS_PER_HOUR).min(target);
            (start < end).then_some((start, end))
        })
        .collect()
}
