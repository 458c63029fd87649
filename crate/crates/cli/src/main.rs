use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dda_core::bitrate::sweep_alpha;
use dda_core::harness::{
    emit_report, generate_synthetic, ingest_csv, random_drop, replay_evaluate, write_csv,
    CsvOptions, EvaluateConfig, EvaluationReport, PredictorKind, SyntheticSpec,
};
use dda_core::model::median_in_place;
use serde_json::json;

/// Cross-session throughput prediction over session logs.
#[derive(Parser)]
#[command(name = "dda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a session CSV and print summary statistics as JSON.
    Ingest {
        input: PathBuf,
        /// Comma-separated feature columns to keep.
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
    },
    /// Generate a synthetic session CSV from a TOML spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomly drop sessions from a CSV.
    Drop {
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Replay a session CSV chronologically and write the evaluation report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `input` from the config.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Overrides `report` from the config; without either the report goes to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Replay once, then print AvgBitrate and GoodRatio for each safety margin.
    SweepAlpha {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0,1.1,1.2,1.3,1.4,1.5"
        )]
        alphas: Vec<f64>,
        #[arg(long, value_enum, default_value = "dda")]
        predictor: Predictor,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Predictor {
    Dda,
    LastMile,
    LastSample,
    Global,
    NearestNeighbor,
}

impl From<Predictor> for PredictorKind {
    fn from(p: Predictor) -> Self {
        match p {
            Predictor::Dda => PredictorKind::Dda,
            Predictor::LastMile => PredictorKind::LastMile,
            Predictor::LastSample => PredictorKind::LastSample,
            Predictor::Global => PredictorKind::Global,
            Predictor::NearestNeighbor => PredictorKind::NearestNeighbor,
        }
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ingest(input: PathBuf, features: Option<Vec<String>>) -> Result<()> {
    let data = ingest_csv(&input, &CsvOptions { features })?;
    let mut throughputs: Vec<f64> = data.records.iter().map(|r| r.throughput()).collect();
    let distinct: serde_json::Map<_, _> = data
        .schema
        .names()
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let values: BTreeSet<&str> = data.records.iter().map(|r| r.feature(i)).collect();
            (name.clone(), json!(values.len()))
        })
        .collect();
    print_json(&json!({
        "records": data.records.len(),
        "skipped": data.skipped,
        "features": data.schema.names(),
        "distinct_values": distinct,
        "first_timestamp": data.records.iter().map(|r| r.timestamp()).min(),
        "last_timestamp": data.records.iter().map(|r| r.timestamp()).max(),
        "median_throughput_mbps": median_in_place(&mut throughputs),
    }))
}

fn run_replay(config: &EvaluateConfig, input: Option<PathBuf>) -> Result<EvaluationReport> {
    let Some(input) = input.or_else(|| config.input.clone()) else {
        bail!("no input CSV: set `input` in the config or pass --input");
    };
    let data = ingest_csv(
        &input,
        &CsvOptions {
            features: config.features.clone(),
        },
    )?;
    if data.skipped > 0 {
        eprintln!(
            "dda: skipped {} malformed rows in {}",
            data.skipped,
            input.display()
        );
    }
    Ok(replay_evaluate(
        &data.schema,
        &data.records,
        &config.dda,
        &config.replay,
    )?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, features } => ingest(input, features),
        Command::Synth { spec, out } => {
            let text = fs::read_to_string(&spec).with_context(|| spec.display().to_string())?;
            let spec = SyntheticSpec::from_toml(&text)?;
            let (schema, records) = generate_synthetic(&spec)?;
            write_csv(&out, &schema, &records)?;
            eprintln!("dda: wrote {} sessions to {}", records.len(), out.display());
            Ok(())
        }
        Command::Drop {
            rate,
            seed,
            input,
            output,
        } => {
            let data = ingest_csv(&input, &CsvOptions::default())?;
            let kept = random_drop(&data.records, rate, seed)?;
            write_csv(&output, &data.schema, &kept)?;
            eprintln!(
                "dda: kept {} of {} sessions",
                kept.len(),
                data.records.len()
            );
            Ok(())
        }
        Command::Evaluate {
            config,
            input,
            output,
        } => {
            let config = EvaluateConfig::load(&config)?;
            let report = run_replay(&config, input)?;
            match output.or(config.report) {
                Some(path) => emit_report(&report, &path)?,
                None => print!("{}", report.to_json()?),
            }
            Ok(())
        }
        Command::SweepAlpha {
            config,
            input,
            alphas,
            predictor,
        } => {
            let mut config = EvaluateConfig::load(&config)?;
            let kind = PredictorKind::from(predictor);
            if !config.replay.predictors.contains(&kind) {
                config.replay.predictors.push(kind);
            }
            config.replay.session_rows = true;
            let report = run_replay(&config, input)?;
            let pairs = report.prediction_pairs(kind);
            if pairs.is_empty() {
                bail!("the predictor made no predictions to sweep");
            }
            let rows = sweep_alpha(&pairs, &config.replay.ladder, &alphas)?;
            print_json(&serde_json::to_value(rows)?)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dda: {e:#}");
            ExitCode::FAILURE
        }
    }
}
