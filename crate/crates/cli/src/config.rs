//! Run configuration: command-line flag > environment variable > config
//! file > built-in default.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use serde::Deserialize;
use sgr_core::bench::Paradigm;
use sgr_core::client::{SamplingConfig, DEFAULT_CONCURRENCY, DEFAULT_K, DEFAULT_MAX_ATTEMPTS, DEFAULT_TEMPERATURE};
use sgr_core::merge::MergeMode;
use sgr_core::pipeline::dataset::DEFAULT_SPLIT_SEED;
use sgr_core::reward::RewardWeights;

pub const DEFAULT_CREDENTIAL_ENV: &str = "SGR_API_KEY";
pub const DEFAULT_MODEL: &str = "gpt-4o";

/// A configuration problem; reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("configuration error in `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

fn config_error(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field,
        message: message.into(),
    }
}

/// Flags shared by every subcommand. Each can also come from an `SGR_*`
/// environment variable or the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file
    #[arg(long, env = "SGR_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Chat-completion endpoint URL
    #[arg(long, env = "SGR_ENDPOINT", global = true)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API credential
    #[arg(long, env = "SGR_CREDENTIAL_ENV", global = true)]
    pub credential_env: Option<String>,
    /// Teacher / evaluated model name
    #[arg(long, env = "SGR_MODEL", global = true)]
    pub model: Option<String>,
    /// Trajectories sampled per question
    #[arg(long, env = "SGR_K", global = true)]
    pub k: Option<usize>,
    /// Sampling temperature for trajectories
    #[arg(long, env = "SGR_TEMPERATURE", global = true)]
    pub temperature: Option<f64>,
    /// Base sampling seed; sample i uses seed + i
    #[arg(long, env = "SGR_SEED", global = true)]
    pub seed: Option<u64>,
    /// Maximum concurrent model requests
    #[arg(long, env = "SGR_CONCURRENCY", global = true)]
    pub concurrency: Option<usize>,
    /// Attempts per request, including the first
    #[arg(long, env = "SGR_RETRY_CAP", global = true)]
    pub retry_cap: Option<u32>,
    /// Response cache directory
    #[arg(long, env = "SGR_CACHE_DIR", global = true)]
    pub cache_dir: Option<PathBuf>,
    /// deterministic, llm or llm-with-fallback
    #[arg(long, env = "SGR_MERGE_MODE", global = true)]
    pub merge_mode: Option<String>,
    /// Seed of the train/validation split
    #[arg(long, env = "SGR_SPLIT_SEED", global = true)]
    pub split_seed: Option<u64>,
    /// direct, linear or self-graph
    #[arg(long, env = "SGR_PARADIGM", global = true)]
    pub paradigm: Option<String>,
    /// Reward weights as FORMAT,ANSWER
    #[arg(long, env = "SGR_WEIGHTS", global = true)]
    pub weights: Option<String>,
    /// Per-request timeout in seconds
    #[arg(long, env = "SGR_TIMEOUT_SECS", global = true)]
    pub timeout_secs: Option<u64>,
    /// Use a scripted mock backend (JSON script) instead of the endpoint
    #[arg(long, env = "SGR_MOCK", global = true)]
    pub mock: Option<PathBuf>,
}

/// Config file contents. Keys mirror the long flags with underscores.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: Option<String>,
    pub credential_env: Option<String>,
    pub model: Option<String>,
    pub k: Option<usize>,
    pub temperature: Option<f64>,
    pub seed: Option<u64>,
    pub concurrency: Option<usize>,
    pub retry_cap: Option<u32>,
    pub cache_dir: Option<PathBuf>,
    pub merge_mode: Option<String>,
    pub split_seed: Option<u64>,
    pub paradigm: Option<String>,
    pub weights: Option<[f64; 2]>,
    pub timeout_secs: Option<u64>,
    pub mock: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("config", format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_error("config", format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub endpoint: Option<String>,
    pub credential_env: String,
    pub model: String,
    pub k: usize,
    pub temperature: f64,
    pub seed: u64,
    pub concurrency: usize,
    pub retry_cap: u32,
    pub cache_dir: Option<PathBuf>,
    pub merge_mode: MergeMode,
    pub split_seed: u64,
    pub paradigm: Paradigm,
    pub weights: RewardWeights,
    pub timeout: Duration,
    pub mock: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            credential_env: DEFAULT_CREDENTIAL_ENV.into(),
            model: DEFAULT_MODEL.into(),
            k: DEFAULT_K,
            temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            concurrency: DEFAULT_CONCURRENCY,
            retry_cap: DEFAULT_MAX_ATTEMPTS,
            cache_dir: None,
            merge_mode: MergeMode::default(),
            split_seed: DEFAULT_SPLIT_SEED,
            paradigm: Paradigm::default(),
            weights: RewardWeights::default(),
            timeout: Duration::from_secs(120),
            mock: None,
        }
    }
}

fn parse_weights(text: &str) -> Result<[f64; 2], ConfigError> {
    let parts: Vec<_> = text.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [f, a] => match (f.parse(), a.parse()) {
            (Ok(f), Ok(a)) => Ok([f, a]),
            _ => Err(config_error("weights", format!("{text:?} is not FORMAT,ANSWER"))),
        },
        _ => Err(config_error("weights", format!("{text:?} is not FORMAT,ANSWER"))),
    }
}

impl RunConfig {
    /// Layers flags (which clap already merged with the environment) over
    /// the config file over defaults, then checks ranges.
    pub fn resolve(args: &GlobalArgs) -> Result<Self, ConfigError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let d = RunConfig::default();
        let merge_mode = match args.merge_mode.clone().or(file.merge_mode) {
            Some(m) => m.parse().map_err(|e: String| config_error("merge_mode", e))?,
            None => d.merge_mode,
        };
        let paradigm = match args.paradigm.clone().or(file.paradigm) {
            Some(p) => p.parse().map_err(|e: String| config_error("paradigm", e))?,
            None => d.paradigm,
        };
        let weights = match &args.weights {
            Some(w) => Some(parse_weights(w)?),
            None => file.weights,
        };
        let weights = match weights {
            Some([f, a]) => RewardWeights::new(f, a).map_err(|e| config_error("weights", e.to_string()))?,
            None => d.weights,
        };
        let config = RunConfig {
            endpoint: args.endpoint.clone().or(file.endpoint),
            credential_env: args.credential_env.clone().or(file.credential_env).unwrap_or(d.credential_env),
            model: args.model.clone().or(file.model).unwrap_or(d.model),
            k: args.k.or(file.k).unwrap_or(d.k),
            temperature: args.temperature.or(file.temperature).unwrap_or(d.temperature),
            seed: args.seed.or(file.seed).unwrap_or(d.seed),
            concurrency: args.concurrency.or(file.concurrency).unwrap_or(d.concurrency),
            retry_cap: args.retry_cap.or(file.retry_cap).unwrap_or(d.retry_cap),
            cache_dir: args.cache_dir.clone().or(file.cache_dir),
            merge_mode,
            split_seed: args.split_seed.or(file.split_seed).unwrap_or(d.split_seed),
            paradigm,
            weights,
            timeout: args
                .timeout_secs
                .or(file.timeout_secs)
                .map(Duration::from_secs)
                .unwrap_or(d.timeout),
            mock: args.mock.clone().or(file.mock),
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if !(1..=64).contains(&self.k) {
            return Err(config_error("k", format!("{} outside 1..=64", self.k)));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(config_error("temperature", format!("{} outside [0, 2]", self.temperature)));
        }
        if !(1..=256).contains(&self.concurrency) {
            return Err(config_error("concurrency", format!("{} outside 1..=256", self.concurrency)));
        }
        if !(1..=20).contains(&self.retry_cap) {
            return Err(config_error("retry_cap", format!("{} outside 1..=20", self.retry_cap)));
        }
        if self.model.trim().is_empty() {
            return Err(config_error("model", "empty"));
        }
        if self.credential_env.trim().is_empty() {
            return Err(config_error("credential_env", "empty"));
        }
        if self.timeout.is_zero() {
            return Err(config_error("timeout_secs", "must be positive"));
        }
        Ok(())
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig {
            temperature: self.temperature,
            k: self.k,
            model_name: self.model.clone(),
            seed: Some(self.seed),
            ..SamplingConfig::default()
        }
    }
}
