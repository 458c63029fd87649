//! File formats, corpus generation and chronological replay.
//!
//! Seeded randomness (synthetic corpora, random dropping) uses ChaCha8 from
//! `rand_chacha`, so outputs are identical across platforms for a given seed.

mod config;
mod csv_io;
mod replay;
mod report;
mod sample;
mod synth;

pub use config::EvaluateConfig;
pub use csv_io::{
    ingest_csv, read_csv, write_csv, write_csv_to, CsvOptions, Ingested, THROUGHPUT_COLUMN,
    TIMESTAMP_COLUMN,
};
pub use replay::{replay_evaluate, PredictorKind, ReplayConfig};
pub use report::{
    emit_report, percentile, read_report, ErrorStats, EvaluationReport, IdealReference,
    PredictorSummary, SessionRow,
};
pub use sample::random_drop;
pub use synth::{generate_synthetic, FeatureSpec, Rule, SyntheticSpec, TimePattern};
