//! Experiment specification: defaults, a key=value config file, and flags
//! layered on top in that order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ccc_dht::churn::{ChurnConfig, RateChange};
use ccc_dht::{ResizePolicy, SessionDistribution};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpecError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("`{key}` conflicts with the scenario: {reason}")]
    Conflict { key: String, reason: String },
}

/// Every recognised key with its default (`None` means required or unset).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("n", None),
    ("lambda", Some("10")),
    ("session", Some("weibull:0.59")),
    ("horizon_multiple", Some("30")),
    ("seed", Some("1")),
    ("sample_interval", None),
    ("scenario", Some("steady")),
    ("tau", None),
    ("n_prime", None),
    ("sweep", None),
    ("out", Some("out")),
    ("per_cycle_mode", Some("false")),
    ("dim", None),
    ("resize", None),
    ("resize_start", None),
    ("stable_degree", Some("100")),
    ("buffer", Some("65")),
    ("inspect_interval", Some("250")),
    ("suggestion_threshold", Some("5")),
    ("sample_size", Some("8")),
    ("boundary", Some("spread")),
    ("warmup_multiple", Some("5")),
    ("data_ops", Some("0")),
    ("track_tree", Some("false")),
    ("self_check", None),
];

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Steady,
    RateChange { tau: f64, n_prime: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub n: f64,
    pub lambda: f64,
    pub session: SessionDistribution,
    pub horizon_multiple: f64,
    pub seed: u64,
    pub sample_interval: Option<f64>,
    pub scenario: Scenario,
    pub sweep: Option<Vec<f64>>,
    pub out: PathBuf,
    pub per_cycle: bool,
    pub dim: Option<u8>,
    pub resize: Option<ResizePolicy>,
    pub resize_start: Option<f64>,
    pub warmup_multiple: f64,
    pub data_ops: usize,
    pub track_tree: bool,
    pub self_check_every: Option<u64>,
    /// The merged key=value map the spec was resolved from.
    pub resolved: BTreeMap<String, String>,
}

/// Parses a key=value file body. `#` starts a comment; blank lines are skipped.
pub fn parse_file(text: &str) -> Result<BTreeMap<String, String>, SpecError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| SpecError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let key = normalize(k.trim());
        check_known(&key)?;
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn normalize(key: &str) -> String {
    key.replace('-', "_")
}

fn check_known(key: &str) -> Result<(), SpecError> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(SpecError::UnknownKey(key.to_string()))
    }
}

fn parse<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, SpecError>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(v) => v.parse::<T>().map(Some).map_err(|e| SpecError::BadValue {
            key: key.into(),
            value: v.clone(),
            reason: e.to_string(),
        }),
    }
}

fn required<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, SpecError>
where
    T::Err: std::fmt::Display,
{
    parse(map, key)?.ok_or_else(|| SpecError::Missing(key.into()))
}

fn bad(key: &str, value: &str, reason: &str) -> SpecError {
    SpecError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

impl ExperimentSpec {
    /// Resolves a spec from the file map with `overrides` (from flags) on top.
    pub fn resolve(
        file: BTreeMap<String, String>,
        overrides: BTreeMap<String, String>,
    ) -> Result<Self, SpecError> {
        let mut map = BTreeMap::new();
        for (k, default) in KEYS {
            if let Some(d) = default {
                map.insert(k.to_string(), d.to_string());
            }
        }
        for (k, v) in file.into_iter().chain(overrides) {
            let k = normalize(&k);
            check_known(&k)?;
            map.insert(k, v);
        }

        let n: f64 = required(&map, "n")?;
        if !(n >= 16.0 && n.is_finite()) {
            return Err(bad("n", &map["n"], "stable size must be at least 16"));
        }
        let lambda: f64 = required(&map, "lambda")?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(bad("lambda", &map["lambda"], "must be positive"));
        }
        let session: SessionDistribution = required(&map, "session")?;
        let horizon_multiple: f64 = required(&map, "horizon_multiple")?;
        if !(horizon_multiple >= 0.0 && horizon_multiple.is_finite()) {
            return Err(bad(
                "horizon_multiple",
                &map["horizon_multiple"],
                "must be non-negative",
            ));
        }
        let seed: u64 = required(&map, "seed")?;
        let sample_interval: Option<f64> = parse(&map, "sample_interval")?;
        if let Some(s) = sample_interval {
            if !(s > 0.0) {
                return Err(bad(
                    "sample_interval",
                    &map["sample_interval"],
                    "must be positive",
                ));
            }
        }
        let tau: Option<f64> = parse(&map, "tau")?;
        let n_prime: Option<f64> = parse(&map, "n_prime")?;
        let scenario = match map["scenario"].as_str() {
            "steady" => {
                for key in ["tau", "n_prime"] {
                    if map.contains_key(key) {
                        return Err(SpecError::Conflict {
                            key: key.into(),
                            reason: "only meaningful with scenario=rate_change".into(),
                        });
                    }
                }
                Scenario::Steady
            }
            "rate_change" => {
                let tau = tau.ok_or_else(|| SpecError::Missing("tau".into()))?;
                let n_prime = n_prime.ok_or_else(|| SpecError::Missing("n_prime".into()))?;
                let horizon = horizon_multiple * n;
                if !(tau > 0.0 && tau < horizon) {
                    return Err(SpecError::Conflict {
                        key: "tau".into(),
                        reason: format!("must lie inside (0, horizon = {horizon})"),
                    });
                }
                if !(n_prime > 0.0 && n_prime.is_finite()) {
                    return Err(bad("n_prime", &map["n_prime"], "must be positive"));
                }
                Scenario::RateChange { tau, n_prime }
            }
            other => return Err(bad("scenario", other, "expected steady or rate_change")),
        };
        let sweep = match map.get("sweep") {
            None => None,
            Some(v) => {
                let values: Result<Vec<f64>, _> =
                    v.split(',').map(|s| s.trim().parse::<f64>()).collect();
                let values = values.map_err(|e| bad("sweep", v, &e.to_string()))?;
                if values.is_empty() || values.iter().any(|x| !(*x >= 16.0)) {
                    return Err(bad(
                        "sweep",
                        v,
                        "expected a comma-separated list of sizes >= 16",
                    ));
                }
                if matches!(scenario, Scenario::RateChange { .. }) {
                    return Err(SpecError::Conflict {
                        key: "sweep".into(),
                        reason: "sweeps run the steady scenario only".into(),
                    });
                }
                Some(values)
            }
        };
        let resize_on = match parse::<bool>(&map, "resize")? {
            Some(b) => b,
            None => matches!(scenario, Scenario::RateChange { .. }),
        };
        let resize = if resize_on {
            let policy = ResizePolicy {
                stable_degree: required(&map, "stable_degree")?,
                buffer: required(&map, "buffer")?,
                inspect_interval: required(&map, "inspect_interval")?,
                suggestion_threshold: required(&map, "suggestion_threshold")?,
                sample_size: required(&map, "sample_size")?,
                boundary: required(&map, "boundary")?,
            };
            policy
                .validate()
                .map_err(|e| bad("buffer", &map["buffer"], &e.to_string()))?;
            Some(policy)
        } else {
            None
        };
        let self_check_every: Option<u64> = parse(&map, "self_check")?;
        if self_check_every == Some(0) {
            return Err(bad("self_check", "0", "must be at least 1"));
        }
        let spec = ExperimentSpec {
            n,
            lambda,
            session,
            horizon_multiple,
            seed,
            sample_interval,
            scenario,
            sweep,
            out: PathBuf::from(&map["out"]),
            per_cycle: required(&map, "per_cycle_mode")?,
            dim: parse(&map, "dim")?,
            resize,
            resize_start: parse(&map, "resize_start")?,
            warmup_multiple: required(&map, "warmup_multiple")?,
            data_ops: required(&map, "data_ops")?,
            track_tree: required(&map, "track_tree")?,
            self_check_every,
            resolved: map,
        };
        spec.churn_config(spec.n)
            .validate()
            .map_err(|e| bad("n", &spec.n.to_string(), &e.to_string()))?;
        Ok(spec)
    }

    pub fn horizon(&self, n: f64) -> f64 {
        self.horizon_multiple * n
    }

    /// Churn configuration for stable size `n` (the spec's own N, or a sweep entry).
    pub fn churn_config(&self, n: f64) -> ChurnConfig {
        let mean_session = n / self.lambda;
        let rate_change = match self.scenario {
            Scenario::Steady => None,
            // Session lengths keep their mean; the arrival rate scales.
            Scenario::RateChange { tau, n_prime } => Some(RateChange {
                at: tau,
                lambda: n_prime / mean_session,
                mean_session,
            }),
        };
        ChurnConfig {
            lambda: self.lambda,
            session: self.session,
            mean_session,
            horizon: self.horizon(n),
            seed: self.seed,
            sample_interval: self.sample_interval.unwrap_or((n / 10.0).max(1.0)),
            per_cycle: self.per_cycle,
            rate_change,
            dim: self.dim,
            resize: self.resize.clone(),
            resize_start: self.resize_start,
            data_ops_per_sample: self.data_ops,
            warmup_multiple: self.warmup_multiple,
            track_tree: self.track_tree,
            self_check_every: self.self_check_every,
        }
    }

    /// The resolved key=value map, readable back as a config file.
    pub fn render(&self) -> String {
        let mut s = String::from("# resolved experiment specification\n");
        for (k, v) in &self.resolved {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "# derived: horizon={}", self.horizon(self.n));
        let _ = writeln!(s, "# derived: mean_session={}", self.n / self.lambda);
        if let Ok(d) = self.churn_config(self.n).dimension() {
            let _ = writeln!(s, "# derived: dimension={d}");
        }
        s
    }
}
