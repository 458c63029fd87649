//! Cross-session throughput prediction.
//!
//! [`learner::Dda`] picks, per target session, the (feature subset, time
//! window) aggregation of earlier sessions that best predicted recent similar
//! sessions, rescales its median and predicts. [`baselines`] holds the
//! reference predictors, [`bitrate`] turns predictions into startup bitrates
//! and [`harness`] replays session logs chronologically to score them.

mod error;

pub mod baselines;
pub mod bitrate;
pub mod harness;
pub mod history;
pub mod learner;
pub mod model;

pub use error::{Error, Result};
pub use history::HistoryIndex;
pub use learner::{Dda, DdaConfig, FallbackLevel, LearnedPredictor, Prediction};
pub use model::{
    ErrorKind, FeatureMask, FeatureSchema, FeatureVector, PredictionModel, SessionRecord,
    TimeWindow, Timestamp,
};
