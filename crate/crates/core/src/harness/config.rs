//! Run configuration, read from TOML or JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::gp::GpConfig;
use crate::kernel::KernelConfig;
use crate::learner::DEFAULT_HIDDEN_UNITS;
use crate::ranking::{DEFAULT_INTERVAL, DEFAULT_THRESHOLD};

/// Value of `embeddings` that selects the generator's own class embeddings.
pub const SYNTHETIC_EMBEDDINGS: &str = "synthetic";

/// How each round's class is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    Bandit,
    Uniform,
    /// Round-robin over the `N` classes with the most training instances.
    FrequencyTopN(usize),
}

impl Strategy {
    pub fn is_bandit(self) -> bool {
        self == Strategy::Bandit
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Bandit => f.write_str("bandit"),
            Strategy::Uniform => f.write_str("uniform"),
            Strategy::FrequencyTopN(n) => write!(f, "freq:{n}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bandit" => Ok(Strategy::Bandit),
            "uniform" => Ok(Strategy::Uniform),
            _ => match s.strip_prefix("freq:").map(str::parse::<usize>) {
                Some(Ok(n)) if n > 0 => Ok(Strategy::FrequencyTopN(n)),
                _ => Err(Error::Config(format!(
                    "unknown strategy `{s}` (expected bandit, uniform or freq:<N> with N >= 1)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// JSON-lines dataset on disk.
    Dataset(PathBuf),
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    Perceptron,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub learning_rate: f64,
    /// Perceptron only.
    pub hidden_units: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            kind: LearnerKind::Logistic,
            learning_rate: 0.1,
            hidden_units: DEFAULT_HIDDEN_UNITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    /// Path to a word2vec-style text file, or `"synthetic"`.
    pub embeddings: String,
    pub kernel: KernelConfig,
    pub beta: f64,
    pub epsilon: f64,
    pub sigma_f: f64,
    pub window_cap: usize,
    pub learner: LearnerConfig,
    pub train_batch_size: usize,
    pub val_batch_size: usize,
    pub ranking_interval: u64,
    pub convergence_threshold: f64,
    /// Halt a bandit run as soon as its ranking converges. Baselines and
    /// runs with this off execute exactly `max_rounds` updates.
    pub stop_on_convergence: bool,
    pub max_rounds: u64,
    pub seed: u64,
    pub strategy: Strategy,
    pub prediction_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let gp = GpConfig::default();
        RunConfig {
            data: DataSource::Synthetic(SyntheticConfig::default()),
            embeddings: SYNTHETIC_EMBEDDINGS.to_owned(),
            kernel: gp.kernel,
            beta: 2.0,
            epsilon: gp.epsilon,
            sigma_f: gp.noise_sigma_f,
            window_cap: gp.window_cap,
            learner: LearnerConfig::default(),
            train_batch_size: 32,
            val_batch_size: 64,
            ranking_interval: DEFAULT_INTERVAL,
            convergence_threshold: DEFAULT_THRESHOLD,
            stop_on_convergence: true,
            max_rounds: 4000,
            seed: 0,
            strategy: Strategy::Bandit,
            prediction_threshold: 0.5,
        }
    }
}

impl RunConfig {
    /// Parse by extension: `.json` as JSON, anything else as TOML.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        // Relative dataset and embedding paths are taken from the config's directory.
        Ok(config.resolve_paths(path.parent().unwrap_or(Path::new(""))))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    fn resolve_paths(mut self, base: &Path) -> Self {
        if let DataSource::Dataset(p) = &mut self.data {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.embeddings != SYNTHETIC_EMBEDDINGS && Path::new(&self.embeddings).is_relative() {
            self.embeddings = base.join(&self.embeddings).to_string_lossy().into_owned();
        }
        self
    }

    pub fn gp_config(&self) -> GpConfig {
        GpConfig {
            kernel: self.kernel,
            epsilon: self.epsilon,
            noise_sigma_f: self.sigma_f,
            window_cap: self.window_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.gp_config().validate().map_err(cfg)?;
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(cfg)?;
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be nonnegative, got {}", self.beta)));
        }
        let lr = self.learner.learning_rate;
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be nonnegative, got {lr}")));
        }
        if self.learner.kind == LearnerKind::Perceptron && self.learner.hidden_units == 0 {
            return Err(Error::Config("hidden_units must be at least 1".into()));
        }
        if self.train_batch_size == 0 || self.val_batch_size == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if self.ranking_interval == 0 {
            return Err(Error::Config("ranking_interval must be at least 1".into()));
        }
        if self.max_rounds < self.ranking_interval {
            return Err(Error::Config(format!(
                "max_rounds {} is smaller than ranking_interval {}",
                self.max_rounds, self.ranking_interval
            )));
        }
        if !(0.0..=1.0).contains(&self.convergence_threshold) {
            return Err(Error::Config(format!(
                "convergence_threshold must lie in [0, 1], got {}",
                self.convergence_threshold
            )));
        }
        if !(self.prediction_threshold > 0.0 && self.prediction_threshold < 1.0) {
            return Err(Error::Config(format!(
                "prediction_threshold must lie in (0, 1), got {}",
                self.prediction_threshold
            )));
        }
        if self.embeddings == SYNTHETIC_EMBEDDINGS && matches!(self.data, DataSource::Dataset(_)) {
            return Err(Error::Config(
                "embeddings = \"synthetic\" needs a synthetic data source".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_strings() {
        for (s, v) in [
            ("bandit", Strategy::Bandit),
            ("uniform", Strategy::Uniform),
            ("freq:7", Strategy::FrequencyTopN(7)),
        ] {
            assert_eq!(s.parse::<Strategy>().unwrap(), v);
            assert_eq!(v.to_string(), s);
        }
        for bad in ["freq:0", "freq:", "freq:x", "greedy", ""] {
            assert!(matches!(bad.parse::<Strategy>(), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn defaults_round_trip_through_toml_and_json() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&json).unwrap(), c);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = RunConfig::from_toml(
            r#"
            beta = 0.5
            strategy = "freq:10"
            max_rounds = 100

            [data.synthetic]
            num_clean_classes = 4
            num_noise_classes = 2

            [kernel]
            family = "matern"
            nu = "3/2"
            lengthscale = 0.7

            [learner]
            kind = "perceptron"
            learning_rate = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(c.beta, 0.5);
        assert_eq!(c.strategy, Strategy::FrequencyTopN(10));
        assert_eq!(c.learner.kind, LearnerKind::Perceptron);
        assert_eq!(c.learner.hidden_units, DEFAULT_HIDDEN_UNITS);
        assert_eq!(c.kernel.lengthscale, 0.7);
        assert_eq!(c.train_batch_size, 32);
        assert_eq!(c.val_batch_size, 64);
        match c.data {
            DataSource::Synthetic(s) => assert_eq!(s.num_clean_classes, 4),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "max_rounds = 5",
            "beta = -1.0",
            "epsilon = 1.5",
            "sigma_f = 0.0",
            "strategy = \"best\"",
            "unknown_key = 1",
            "prediction_threshold = 1.0",
            "data = { dataset = \"x.jsonl\" }",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn max_rounds_may_equal_interval() {
        assert!(RunConfig::from_toml("max_rounds = 1\nranking_interval = 1").is_ok());
    }
}
