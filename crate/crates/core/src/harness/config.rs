//! The `evaluate` configuration: one flat TOML table holding the file paths
//! plus every [`ReplayConfig`] and [`DdaConfig`] field.
//!
//! ```toml
//! input = "sessions.csv"
//! report = "report.json"
//! predictors = ["dda", "last_mile", "last_sample", "global"]
//! alpha = 0.8
//! min_support = 20
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::DdaConfig;

use super::replay::ReplayConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    /// Session CSV; relative paths resolve against the config file.
    pub input: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// CSV columns to use as features; all non-mandatory columns when absent.
    pub features: Option<Vec<String>>,
    #[serde(flatten)]
    pub replay: ReplayConfig,
    #[serde(flatten)]
    pub dda: DdaConfig,
}

fn known_keys() -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = ["input", "report", "features"].map(String::from).into();
    let tables = [
        toml::Table::try_from(ReplayConfig::default()),
        toml::Table::try_from(DdaConfig::default()),
    ];
    for table in tables {
        keys.extend(
            table
                .expect("defaults serialize")
                .into_iter()
                .map(|(k, _)| k),
        );
    }
    keys
}

impl EvaluateConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let known = known_keys();
        if let Some(key) = table.keys().find(|k| !known.contains(*k)) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        let config: Self = table
            .try_into()
            .map_err(|e| Error::Config(format!("{e}")))?;
        config.replay.validate()?;
        config.dda.validate()?;
        Ok(config)
    }

    /// Reads `path`, resolving relative file paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.input, &mut config.report]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}
