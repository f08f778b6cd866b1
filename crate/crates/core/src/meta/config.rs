use serde::{Deserialize, Serialize};

use super::MetaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// The adapted parameters' dependence on θ is treated as identity.
    #[default]
    FirstOrder,
    /// Differentiates through every inner step.
    SecondOrder,
}

/// How `Schedule::betas` is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPolicy {
    /// One independent run per listed β.
    #[default]
    Sweep,
    /// A single run whose epochs are split into equal phases, one per β.
    Phased,
}

fn default_epochs() -> usize {
    50
}
fn default_steps_per_epoch() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_steps_per_epoch")]
    pub steps_per_epoch: usize,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub policy: BetaPolicy,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            steps_per_epoch: default_steps_per_epoch(),
            betas: Vec::new(),
            policy: BetaPolicy::Sweep,
        }
    }
}

impl Schedule {
    pub fn total_steps(&self) -> usize {
        self.epochs * self.steps_per_epoch
    }
}

fn default_alpha() -> f64 {
    1e-3
}
fn default_beta() -> f64 {
    1e-3
}
fn default_one() -> usize {
    1
}
fn default_tasks_per_batch() -> usize {
    4
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    /// Outer (meta) step size.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Inner-loop learning rate.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub inner_steps: usize,
    #[serde(default = "default_tasks_per_batch")]
    pub tasks_per_batch: usize,
    #[serde(default)]
    pub gradient_mode: GradientMode,
    /// Averaged update over the batch when true; one outer update per task,
    /// in batch order, when false.
    #[serde(default = "default_true")]
    pub collaborative: bool,
    #[serde(default)]
    pub schedule: Schedule,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            inner_steps: 1,
            tasks_per_batch: default_tasks_per_batch(),
            gradient_mode: GradientMode::FirstOrder,
            collaborative: true,
            schedule: Schedule::default(),
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<(), MetaError> {
        let bad = |m: String| Err(MetaError::Config(m));
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return bad(format!("alpha must be finite and non-negative, got {}", self.alpha));
        }
        for &b in std::iter::once(&self.beta).chain(&self.schedule.betas) {
            if !(b.is_finite() && b >= 0.0) {
                return bad(format!("beta must be finite and non-negative, got {b}"));
            }
        }
        if self.inner_steps == 0 {
            return bad("inner_steps must be at least 1".into());
        }
        if self.tasks_per_batch == 0 {
            return bad("tasks_per_batch must be at least 1".into());
        }
        if self.schedule.policy == BetaPolicy::Phased
            && !self.schedule.betas.is_empty()
            && self.schedule.epochs < self.schedule.betas.len()
        {
            return bad("phased schedule needs at least one epoch per beta".into());
        }
        Ok(())
    }

    /// One configuration per run: each β of a sweep, otherwise just `self`.
    pub fn runs(&self) -> Vec<MetaConfig> {
        match self.schedule.policy {
            BetaPolicy::Sweep if !self.schedule.betas.is_empty() => self
                .schedule
                .betas
                .iter()
                .map(|&beta| MetaConfig {
                    beta,
                    schedule: Schedule {
                        betas: Vec::new(),
                        ..self.schedule.clone()
                    },
                    ..self.clone()
                })
                .collect(),
            _ => vec![self.clone()],
        }
    }

    /// Inner rate in effect during `epoch`.
    pub fn beta_at(&self, epoch: usize) -> f64 {
        let betas = &self.schedule.betas;
        match self.schedule.policy {
            BetaPolicy::Phased if !betas.is_empty() => {
                let phase = epoch * betas.len() / self.schedule.epochs.max(1);
                betas[phase.min(betas.len() - 1)]
            }
            _ => self.beta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_expands_to_one_run_per_beta() {
        let mut cfg = MetaConfig::default();
        cfg.schedule.betas = vec![1e-2, 1e-3, 1e-4];
        let runs = cfg.runs();
        assert_eq!(runs.iter().map(|r| r.beta).collect::<Vec<_>>(), vec![1e-2, 1e-3, 1e-4]);
        assert!(runs.iter().all(|r| r.schedule.betas.is_empty()));
    }

    #[test]
    fn phased_splits_epochs() {
        let mut cfg = MetaConfig::default();
        cfg.schedule = Schedule {
            epochs: 6,
            steps_per_epoch: 1,
            betas: vec![1e-2, 1e-3, 1e-4],
            policy: BetaPolicy::Phased,
        };
        let betas: Vec<f64> = (0..6).map(|e| cfg.beta_at(e)).collect();
        assert_eq!(betas, vec![1e-2, 1e-2, 1e-3, 1e-3, 1e-4, 1e-4]);
        assert_eq!(cfg.runs().len(), 1);
    }

    #[test]
    fn validation() {
        let mut cfg = MetaConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.inner_steps = 0;
        assert!(cfg.validate().is_err());
        cfg.inner_steps = 1;
        cfg.beta = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_defaults() {
        let cfg: MetaConfig = toml::from_str("alpha = 0.01\n[schedule]\nepochs = 2\n").unwrap();
        assert_eq!(cfg.alpha, 0.01);
        assert_eq!(cfg.schedule.epochs, 2);
        assert_eq!(cfg.schedule.steps_per_epoch, 500);
        assert!(cfg.collaborative);
    }
}
