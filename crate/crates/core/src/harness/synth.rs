//! Synthetic session corpora with planted throughput structure.
//!
//! Sessions get uniformly random feature values and timestamps. Throughput is
//! `base * pattern(t) * noise`, taken from the first rule whose predicate
//! matches (or `default_base` when none does), with multiplicative log-normal
//! noise. All randomness comes from ChaCha8 seeded with `seed`: stream 0
//! drives sessions and stream `i + 1` draws the multiplier table of rule `i`,
//! so a corpus is reproducible on every platform.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hour_of_day, FeatureSchema, FeatureVector, SessionRecord, Timestamp};

/// A feature and its value set, written `Name:N` (values `Name0..Name{N-1}`)
/// or `Name=a|b|c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FeatureSpec {
    pub name: String,
    pub values: Vec<String>,
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad feature spec `{s}`, want Name:N or Name=a|b"));
        let (name, values) = if let Some((name, n)) = s.split_once(':') {
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            let name = name.trim();
            (
                name,
                (0..n).map(|i| format!("{name}{i}")).collect::<Vec<_>>(),
            )
        } else if let Some((name, list)) = s.split_once('=') {
            (
                name.trim(),
                list.split('|').map(|v| v.trim().to_string()).collect(),
            )
        } else {
            return Err(bad());
        };
        if name.is_empty() || values.is_empty() || values.iter().any(|v| v.is_empty()) {
            return Err(bad());
        }
        Ok(Self {
            name: name.to_string(),
            values,
        })
    }
}

impl TryFrom<String> for FeatureSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureSpec> for String {
    fn from(spec: FeatureSpec) -> Self {
        format!("{}={}", spec.name, spec.values.join("|"))
    }
}

/// Time dependence of a rule's throughput, written as a short string.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TimePattern {
    /// `constant`
    Constant,
    /// `diurnal:START:END:FACTOR`, multiply by FACTOR for UTC hours in `[START, END)`.
    Diurnal {
        start_hour: u32,
        end_hour: u32,
        factor: f64,
    },
    /// `hourly:LO:HI`, one log-uniform multiplier in `[LO, HI]` per UTC hour of day.
    Hourly { lo: f64, hi: f64 },
    /// `epochs:SECS:LO:HI`, a fresh log-uniform multiplier every SECS seconds.
    Epochs { secs: u64, lo: f64, hi: f64 },
}

impl FromStr for TimePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad time pattern `{s}`"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |i: usize| parts[i].parse::<f64>().map_err(|_| bad());
        let pattern = match (parts[0], parts.len()) {
            ("constant", 1) => TimePattern::Constant,
            ("diurnal", 4) => TimePattern::Diurnal {
                start_hour: parts[1].parse().map_err(|_| bad())?,
                end_hour: parts[2].parse().map_err(|_| bad())?,
                factor: num(3)?,
            },
            ("hourly", 3) => TimePattern::Hourly {
                lo: num(1)?,
                hi: num(2)?,
            },
            ("epochs", 4) => TimePattern::Epochs {
                secs: parts[1].parse().map_err(|_| bad())?,
                lo: num(2)?,
                hi: num(3)?,
            },
            _ => return Err(bad()),
        };
        let valid = match pattern {
            TimePattern::Constant => true,
            TimePattern::Diurnal {
                start_hour,
                end_hour,
                factor,
            } => start_hour < end_hour && end_hour <= 24 && factor > 0.0,
            TimePattern::Hourly { lo, hi } => lo > 0.0 && hi >= lo,
            TimePattern::Epochs { secs, lo, hi } => secs > 0 && lo > 0.0 && hi >= lo,
        };
        if valid {
            Ok(pattern)
        } else {
            Err(bad())
        }
    }
}

impl TryFrom<String> for TimePattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for TimePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TimePattern::Constant => write!(f, "constant"),
            TimePattern::Diurnal {
                start_hour,
                end_hour,
                factor,
            } => {
                write!(f, "diurnal:{start_hour}:{end_hour}:{factor}")
            }
            TimePattern::Hourly { lo, hi } => write!(f, "hourly:{lo}:{hi}"),
            TimePattern::Epochs { secs, lo, hi } => write!(f, "epochs:{secs}:{lo}:{hi}"),
        }
    }
}

impl From<TimePattern> for String {
    fn from(p: TimePattern) -> Self {
        p.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    /// Feature name to required value; all must hold.
    #[serde(default)]
    pub when: BTreeMap<String, String>,
    /// Mbit/s.
    pub base: f64,
    #[serde(default = "constant_pattern")]
    pub pattern: TimePattern,
    /// Overrides the corpus-wide noise sigma for this rule.
    #[serde(default)]
    pub noise: Option<f64>,
}

fn constant_pattern() -> TimePattern {
    TimePattern::Constant
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub sessions: usize,
    /// First possible timestamp.
    pub start: Timestamp,
    /// Timestamps are drawn from `[start, start + span)`.
    pub span: u64,
    pub features: Vec<FeatureSpec>,
    /// Priority order: the first matching rule applies.
    #[serde(default)]
    pub rules: Vec<Rule>,
    /// Mbit/s for sessions no rule matches.
    pub default_base: f64,
    /// Sigma of the log-normal noise factor; 0 disables noise.
    #[serde(default)]
    pub noise_sigma: f64,
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synthetic spec: {e}")))
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::new(self.features.iter().map(|f| f.name.clone()))
    }

    fn validate(&self) -> Result<()> {
        let schema = self.schema()?;
        if self.span == 0 || self.start < 0 {
            return Err(Error::Config(
                "span must be positive and start non-negative".into(),
            ));
        }
        let sigma_ok = |s: f64| s.is_finite() && s >= 0.0;
        if !sigma_ok(self.noise_sigma) || self.default_base.is_nan() || self.default_base <= 0.0 {
            return Err(Error::Config(
                "noise_sigma must be >= 0 and default_base > 0".into(),
            ));
        }
        for rule in &self.rules {
            if rule.base.is_nan() || rule.base <= 0.0 || !rule.noise.is_none_or(sigma_ok) {
                return Err(Error::Config(format!(
                    "rule base must be > 0, got {}",
                    rule.base
                )));
            }
            for (name, value) in &rule.when {
                let f = schema.require(name)?;
                if !self.features[f].values.contains(value) {
                    return Err(Error::Config(format!(
                        "rule value `{value}` never occurs for `{name}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

struct CompiledRule {
    when: Vec<(usize, usize)>,
    base: f64,
    sigma: f64,
    pattern: TimePattern,
    table: Vec<f64>,
}

impl CompiledRule {
    fn multiplier(&self, t: Timestamp, start: Timestamp) -> f64 {
        match self.pattern {
            TimePattern::Constant => 1.0,
            TimePattern::Diurnal {
                start_hour,
                end_hour,
                factor,
            } => {
                let h = hour_of_day(t);
                if (i64::from(start_hour)..i64::from(end_hour)).contains(&h) {
                    factor
                } else {
                    1.0
                }
            }
            TimePattern::Hourly { .. } => self.table[hour_of_day(t) as usize],
            TimePattern::Epochs { secs, .. } => self.table[((t - start) as u64 / secs) as usize],
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn noise_factor(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    LogNormal::new(0.0, sigma)
        .expect("validated sigma")
        .sample(rng)
}

/// Generates the corpus described by `spec`, sorted by timestamp.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(FeatureSchema, Vec<SessionRecord>)> {
    spec.validate()?;
    let schema = spec.schema()?;
    let rules: Vec<CompiledRule> = spec
        .rules
        .iter()
        .enumerate()
        .map(|(i, rule)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            let table = match rule.pattern {
                TimePattern::Hourly { lo, hi } => {
                    (0..24).map(|_| log_uniform(&mut rng, lo, hi)).collect()
                }
                TimePattern::Epochs { secs, lo, hi } => (0..=spec.span / secs)
                    .map(|_| log_uniform(&mut rng, lo, hi))
                    .collect(),
                _ => Vec::new(),
            };
            let when = rule
                .when
                .iter()
                .map(|(name, value)| {
                    let f = schema.index_of(name).expect("validated");
                    (
                        f,
                        spec.features[f]
                            .values
                            .iter()
                            .position(|v| v == value)
                            .expect("validated"),
                    )
                })
                .collect();
            CompiledRule {
                when,
                base: rule.base,
                sigma: rule.noise.unwrap_or(spec.noise_sigma),
                pattern: rule.pattern,
                table,
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.sessions);
    let mut picks = vec![0usize; spec.features.len()];
    for _ in 0..spec.sessions {
        let t = spec.start + rng.random_range(0..spec.span) as Timestamp;
        for (pick, feature) in picks.iter_mut().zip(&spec.features) {
            *pick = rng.random_range(0..feature.values.len());
        }
        let rule = rules
            .iter()
            .find(|r| r.when.iter().all(|&(f, v)| picks[f] == v));
        let (base, sigma, pattern) = match rule {
            Some(r) => (r.base, r.sigma, r.multiplier(t, spec.start)),
            None => (spec.default_base, spec.noise_sigma, 1.0),
        };
        let throughput = base * pattern * noise_factor(&mut rng, sigma);
        let values = picks
            .iter()
            .zip(&spec.features)
            .map(|(&i, f)| f.values[i].clone());
        records.push(SessionRecord::new(
            FeatureVector::new(values),
            t,
            throughput,
        )?);
    }
    records.sort_by_key(SessionRecord::timestamp);
    Ok((schema, records))
}
