//! Session CSV files.
//!
//! A header row names the columns. `timestamp` (integer Unix seconds, UTC)
//! and `throughput_kbps` (decimal) are mandatory; every other column is a
//! categorical feature named by its header. Fields are never quoted, so a
//! value cannot contain a comma.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{FeatureSchema, FeatureVector, SessionRecord};

pub const TIMESTAMP_COLUMN: &str = "timestamp";
pub const THROUGHPUT_COLUMN: &str = "throughput_kbps";

#[derive(Clone, Debug, Default)]
pub struct CsvOptions {
    /// Feature columns to keep, in schema order. `None` keeps every
    /// non-mandatory column in header order.
    pub features: Option<Vec<String>>,
}

#[derive(Clone, Debug)]
pub struct Ingested {
    pub schema: FeatureSchema,
    pub records: Vec<SessionRecord>,
    /// Rows dropped for a malformed field count, empty feature value,
    /// unparseable or negative timestamp, or missing/non-positive throughput.
    pub skipped: usize,
}

pub fn ingest_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Ingested> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .flexible(true)
        .from_reader(reader);
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing mandatory column `{name}`")))
    };
    let ts_col = column(TIMESTAMP_COLUMN)?;
    let tp_col = column(THROUGHPUT_COLUMN)?;
    let feature_cols: Vec<usize> = match &options.features {
        Some(names) => names.iter().map(|n| column(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| i != ts_col && i != tp_col)
            .collect(),
    };
    let schema = FeatureSchema::new(feature_cols.iter().map(|&i| header[i].to_string()))
        .map_err(|e| Error::Format(format!("bad feature columns: {e}")))?;

    let mut records = Vec::new();
    let mut skipped = 0;
    for row in reader.records() {
        let row = row.map_err(|e| Error::Format(format!("unreadable row: {e}")))?;
        let parsed = (row.len() == header.len())
            .then(|| {
                let ts: i64 = row[ts_col].trim().parse().ok()?;
                let kbps: f64 = row[tp_col].trim().parse().ok()?;
                let values: Vec<&str> = feature_cols.iter().map(|&i| &row[i]).collect();
                if values.iter().any(|v| v.is_empty()) {
                    return None;
                }
                SessionRecord::new(FeatureVector::new(values), ts, kbps / 1000.0).ok()
            })
            .flatten();
        match parsed {
            Some(record) => records.push(record),
            None => skipped += 1,
        }
    }
    Ok(Ingested {
        schema,
        records,
        skipped,
    })
}

pub fn write_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    records: &[SessionRecord],
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(file, schema, records).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_csv_to<W: Write>(
    mut out: W,
    schema: &FeatureSchema,
    records: &[SessionRecord],
) -> Result<()> {
    let io = |e| Error::io("<csv output>", e);
    let mut line = String::from(TIMESTAMP_COLUMN);
    for name in schema.names() {
        line.push(',');
        line.push_str(name);
    }
    line.push(',');
    line.push_str(THROUGHPUT_COLUMN);
    writeln!(out, "{line}").map_err(io)?;
    for r in records {
        line.clear();
        line.push_str(&r.timestamp().to_string());
        for v in r.features().values() {
            if v.contains([',', '\n', '\r']) {
                return Err(Error::Format(format!(
                    "feature value `{v}` cannot be written unquoted"
                )));
            }
            line.push(',');
            line.push_str(v);
        }
        line.push(',');
        line.push_str(&(r.throughput() * 1000.0).to_string());
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}
