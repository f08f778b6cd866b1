//! Run configuration: data locations, network, meta-training, episodes,
//! evaluation and seeds, read from a TOML file.
//!
//! ```toml
//! seed = 7
//! precision = "f32"
//!
//! [data]
//! root = "data"
//! train_areas = ["A", "B"]
//! test_areas = ["C"]
//!
//! [model]
//! points_per_block = 128
//!
//! [meta]
//! alpha = 1e-3
//! beta = 1e-3
//! [meta.schedule]
//! epochs = 2
//! steps_per_epoch = 100
//! betas = [1e-2, 1e-3, 1e-4]
//!
//! [episode]
//! n = 2
//! k = 6
//!
//! [eval]
//! episodes = 20
//! inner_steps = 5
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meta::{EvalConfig, MetaConfig};
use crate::model::PointNetConfig;
use crate::sampler::EpisodeSpec;
use crate::seed::derive_seed;
use crate::tensor::Precision;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn default_block_size() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    /// Dataset root holding `classes.txt` and one directory per area;
    /// relative paths are resolved against the config file's directory.
    pub root: PathBuf,
    #[serde(default)]
    pub train_areas: Vec<String>,
    #[serde(default)]
    pub test_areas: Vec<String>,
    #[serde(default = "default_block_size")]
    pub block_size: f64,
}

fn default_eval_episodes() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    #[serde(default = "default_eval_episodes")]
    pub episodes: usize,
    /// Falls back to `meta.beta`.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Falls back to `meta.inner_steps`.
    #[serde(default)]
    pub inner_steps: Option<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            episodes: default_eval_episodes(),
            beta: None,
            inner_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    pub data: DataSection,
    #[serde(default = "default_model")]
    pub model: PointNetConfig,
    #[serde(default)]
    pub meta: MetaConfig,
    #[serde(default)]
    pub episode: EpisodeSpec,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_model() -> PointNetConfig {
    PointNetConfig::new(0)
}

/// Independent seeds derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub init: u64,
    pub episodes: u64,
    pub eval: u64,
    pub export: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            init: derive_seed(master, 0),
            episodes: derive_seed(master, 1),
            eval: derive_seed(master, 2),
            export: derive_seed(master, 3),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a config file and resolves `data.root` against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        if cfg.data.root.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.root = dir.join(&cfg.data.root);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.data.block_size > 0.0 && self.data.block_size.is_finite()) {
            return bad(format!("data.block_size must be positive, got {}", self.data.block_size));
        }
        self.meta.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.episode.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.eval.episodes == 0 {
            return bad("eval.episodes must be at least 1".into());
        }
        if self.eval.inner_steps == Some(0) {
            return bad("eval.inner_steps must be at least 1".into());
        }
        if let Some(b) = self.eval.beta {
            if !(b.is_finite() && b >= 0.0) {
                return bad(format!("eval.beta must be finite and non-negative, got {b}"));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_master(self.seed)
    }

    /// The network configuration with the class count taken from the
    /// vocabulary when left at 0.
    pub fn model_for(&self, classes: usize) -> Result<PointNetConfig, ConfigError> {
        let mut model = self.model.clone();
        if model.num_classes == 0 {
            model.num_classes = classes;
        } else if model.num_classes != classes {
            return Err(ConfigError::Invalid(format!(
                "model.num_classes is {} but the vocabulary has {classes} classes",
                model.num_classes
            )));
        }
        model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(model)
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            spec: self.episode,
            episodes: self.eval.episodes,
            beta: self.eval.beta.unwrap_or(self.meta.beta),
            inner_steps: self.eval.inner_steps.unwrap_or(self.meta.inner_steps),
            points: self.model.points_per_block,
            seed: self.seeds().eval,
        }
    }
}
