//! Experiment configuration: flat `key = value` text, `#` comments.
//!
//! Required keys: `dataset_path`, `protocol`, `n_nodes`, `cycles`, `seed`.
//! Every other key has a default. Unknown or repeated keys are errors.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::peer_sampling::SamplerKind;
use crate::protocol::{Learner, Variant};
use crate::sim::{ChurnMode, OfflineDelivery};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{0}` given twice")]
    Duplicate(String),
    #[error("missing required config key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Baseline {
    #[default]
    None,
    Seq,
    Wb1,
    Wb2,
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Baseline::None),
            "seq" => Ok(Baseline::Seq),
            "wb1" => Ok(Baseline::Wb1),
            "wb2" => Ok(Baseline::Wb2),
            other => Err(format!("expected none|seq|wb1|wb2, got `{other}`")),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::None => "none",
            Baseline::Seq => "seq",
            Baseline::Wb1 => "wb1",
            Baseline::Wb2 => "wb2",
        })
    }
}

pub const REQUIRED_KEYS: [&str; 5] = ["dataset_path", "protocol", "n_nodes", "cycles", "seed"];

pub const KNOWN_KEYS: [&str; 34] = [
    "dataset_path",
    "test_path",
    "protocol",
    "learner",
    "baseline",
    "n_nodes",
    "cycles",
    "delta_ticks",
    "lambda",
    "eta_adaline",
    "cache_size",
    "voted",
    "peer_sampling",
    "drop_prob",
    "delay_min_factor",
    "delay_max_factor",
    "churn",
    "churn_mu",
    "churn_sigma",
    "online_target",
    "offline_delivery",
    "feature_select_k",
    "standardize",
    "append_bias",
    "train_size",
    "test_size",
    "eval_peers",
    "eval_every",
    "max_cosine_pairs",
    "instrument_regret",
    "w_star_iterations",
    "record_lineage",
    "seed",
    "run_id",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_path: PathBuf,
    /// Separate test file; when absent the dataset is split.
    pub test_path: Option<PathBuf>,
    pub protocol: Variant,
    pub learner: Learner,
    pub baseline: Baseline,
    pub n_nodes: usize,
    pub cycles: u64,
    pub delta_ticks: u64,
    pub lambda: f64,
    pub eta_adaline: f64,
    pub cache_size: usize,
    /// Which error the summary line leads with; both are always in the CSV.
    pub voted: bool,
    pub peer_sampling: SamplerKind,
    pub drop_prob: f64,
    pub delay_min_factor: f64,
    pub delay_max_factor: f64,
    pub churn: ChurnMode,
    /// Defaults to `ln(100 delta_ticks)`.
    pub churn_mu: Option<f64>,
    pub churn_sigma: f64,
    pub online_target: f64,
    pub offline_delivery: OfflineDelivery,
    pub feature_select_k: Option<usize>,
    pub standardize: bool,
    pub append_bias: bool,
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    /// Defaults to `min(100, n_nodes)`.
    pub eval_peers: Option<usize>,
    pub eval_every: u64,
    pub max_cosine_pairs: usize,
    pub instrument_regret: bool,
    pub w_star_iterations: u64,
    pub record_lineage: bool,
    pub seed: u64,
    pub run_id: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset_path: PathBuf::new(),
            test_path: None,
            protocol: Variant::Mu,
            learner: Learner::Pegasos,
            baseline: Baseline::None,
            n_nodes: 0,
            cycles: 0,
            delta_ticks: 1000,
            lambda: 1e-4,
            eta_adaline: 0.01,
            cache_size: 10,
            voted: false,
            peer_sampling: SamplerKind::Uniform,
            drop_prob: 0.0,
            delay_min_factor: 0.0,
            delay_max_factor: 0.0,
            churn: ChurnMode::None,
            churn_mu: None,
            churn_sigma: 0.5,
            online_target: 0.9,
            offline_delivery: OfflineDelivery::Drop,
            feature_select_k: None,
            standardize: false,
            append_bias: false,
            train_size: None,
            test_size: None,
            eval_peers: None,
            eval_every: 1,
            max_cosine_pairs: 10_000,
            instrument_regret: false,
            w_star_iterations: 1_000_000,
            record_lineage: false,
            seed: 0,
            run_id: "run".into(),
        }
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V, ConfigError>
where
    V::Err: fmt::Display,
{
    value.parse::<V>().map_err(|e| ConfigError::Invalid {
        key: key.to_string(),
        msg: format!("`{value}`: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(ConfigError::Invalid {
            key: key.to_string(),
            msg: format!("expected true|false, got `{other}`"),
        }),
    }
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// Splits config text into `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.trim().to_string(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.trim().to_string(),
            });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parses and validates config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        Self::parse_with_overrides(text, base, &[])
    }

    /// Like [`parse`](Self::parse), then applies `key=value` overrides (which
    /// may repeat file keys).
    pub fn parse_with_overrides(
        text: &str,
        base: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = BTreeSet::new();
        for (k, v) in parse_pairs(text)? {
            if !seen.insert(k.clone()) && KNOWN_KEYS.contains(&k.as_str()) {
                return Err(ConfigError::Duplicate(k));
            }
            cfg.set(&k, &v, base)?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| invalid(o, "override must look like key=value"))?;
            let (k, v) = (k.trim(), v.trim());
            cfg.set(k, v, base)?;
            seen.insert(k.to_string());
        }
        for key in REQUIRED_KEYS {
            if !seen.contains(key) {
                return Err(ConfigError::Missing(key));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_with_overrides(&text, path.parent(), overrides)
    }

    /// Assigns one key without validating cross-key constraints.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        match key {
            "dataset_path" => self.dataset_path = resolve(base, value),
            "test_path" => self.test_path = Some(resolve(base, value)),
            "protocol" => self.protocol = parse_value(key, value)?,
            "learner" => self.learner = parse_value(key, value)?,
            "baseline" => self.baseline = parse_value(key, value)?,
            "n_nodes" => self.n_nodes = parse_value(key, value)?,
            "cycles" => self.cycles = parse_value(key, value)?,
            "delta_ticks" => self.delta_ticks = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "eta_adaline" => self.eta_adaline = parse_value(key, value)?,
            "cache_size" => self.cache_size = parse_value(key, value)?,
            "voted" => self.voted = parse_bool(key, value)?,
            "peer_sampling" => self.peer_sampling = parse_value(key, value)?,
            "drop_prob" => self.drop_prob = parse_value(key, value)?,
            "delay_min_factor" => self.delay_min_factor = parse_value(key, value)?,
            "delay_max_factor" => self.delay_max_factor = parse_value(key, value)?,
            "churn" => self.churn = parse_value(key, value)?,
            "churn_mu" => self.churn_mu = Some(parse_value(key, value)?),
            "churn_sigma" => self.churn_sigma = parse_value(key, value)?,
            "online_target" => self.online_target = parse_value(key, value)?,
            "offline_delivery" => self.offline_delivery = parse_value(key, value)?,
            "feature_select_k" => self.feature_select_k = Some(parse_value(key, value)?),
            "standardize" => self.standardize = parse_bool(key, value)?,
            "append_bias" => self.append_bias = parse_bool(key, value)?,
            "train_size" => self.train_size = Some(parse_value(key, value)?),
            "test_size" => self.test_size = Some(parse_value(key, value)?),
            "eval_peers" => self.eval_peers = Some(parse_value(key, value)?),
            "eval_every" => self.eval_every = parse_value(key, value)?,
            "max_cosine_pairs" => self.max_cosine_pairs = parse_value(key, value)?,
            "instrument_regret" => self.instrument_regret = parse_bool(key, value)?,
            "w_star_iterations" => self.w_star_iterations = parse_value(key, value)?,
            "record_lineage" => self.record_lineage = parse_bool(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "run_id" => {
                if value.is_empty() || value.contains([',', '\n', '"']) {
                    return Err(invalid(key, "run_id must be non-empty and free of commas and quotes"));
                }
                self.run_id = value.to_string()
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn churn_mu(&self) -> f64 {
        self.churn_mu
            .unwrap_or_else(|| (100.0 * self.delta_ticks as f64).ln())
    }

    pub fn eval_peers(&self) -> usize {
        self.eval_peers.unwrap_or(self.n_nodes.min(100))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dataset_path.as_os_str().is_empty() {
            return Err(invalid("dataset_path", "must not be empty"));
        }
        if self.n_nodes < 1 {
            return Err(invalid("n_nodes", "must be >= 1"));
        }
        if self.cycles < 1 {
            return Err(invalid("cycles", "must be >= 1"));
        }
        if self.delta_ticks < 1 {
            return Err(invalid("delta_ticks", "must be >= 1"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be finite and > 0, got {}", self.lambda)));
        }
        if !(self.eta_adaline > 0.0 && self.eta_adaline.is_finite()) {
            return Err(invalid(
                "eta_adaline",
                format!("must be finite and > 0, got {}", self.eta_adaline),
            ));
        }
        if self.cache_size < 1 {
            return Err(invalid("cache_size", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(invalid("drop_prob", format!("must lie in [0, 1], got {}", self.drop_prob)));
        }
        if !(self.delay_min_factor >= 0.0 && self.delay_min_factor.is_finite()) {
            return Err(invalid("delay_min_factor", "must be finite and >= 0"));
        }
        if !(self.delay_max_factor >= self.delay_min_factor && self.delay_max_factor.is_finite()) {
            return Err(invalid("delay_max_factor", "must be finite and >= delay_min_factor"));
        }
        if !self.churn_mu().is_finite() {
            return Err(invalid("churn_mu", "must be finite"));
        }
        if !(self.churn_sigma > 0.0 && self.churn_sigma.is_finite()) {
            return Err(invalid("churn_sigma", "must be finite and > 0"));
        }
        if !(self.online_target > 0.0 && self.online_target <= 1.0) {
            return Err(invalid(
                "online_target",
                format!("must lie in (0, 1], got {}", self.online_target),
            ));
        }
        if self.feature_select_k == Some(0) {
            return Err(invalid("feature_select_k", "must be >= 1"));
        }
        if let Some(train) = self.train_size {
            if train < self.n_nodes {
                return Err(invalid(
                    "train_size",
                    format!("{train} training examples cannot cover {} nodes", self.n_nodes),
                ));
            }
        }
        if self.test_size == Some(0) {
            return Err(invalid("test_size", "must be >= 1"));
        }
        if self.test_path.is_some() && self.test_size.is_some() {
            return Err(invalid("test_size", "cannot be combined with test_path"));
        }
        let k = self.eval_peers();
        if k < 1 || k > self.n_nodes {
            return Err(invalid(
                "eval_peers",
                format!("must lie in [1, n_nodes = {}], got {k}", self.n_nodes),
            ));
        }
        if self.eval_every < 1 {
            return Err(invalid("eval_every", "must be >= 1"));
        }
        if self.max_cosine_pairs < 1 {
            return Err(invalid("max_cosine_pairs", "must be >= 1"));
        }
        if self.instrument_regret {
            if self.protocol != Variant::Mu || self.learner != Learner::Pegasos {
                return Err(invalid(
                    "instrument_regret",
                    "regret probes require protocol = mu and learner = pegasos",
                ));
            }
            if self.baseline != Baseline::None {
                return Err(invalid("instrument_regret", "not available for baselines"));
            }
            if self.w_star_iterations < 1 {
                return Err(invalid("w_star_iterations", "must be >= 1"));
            }
        }
        if self.baseline != Baseline::None && self.learner != Learner::Pegasos {
            return Err(invalid("baseline", "baselines are Pegasos-only"));
        }
        Ok(())
    }
}
