//! Proximal policy optimization with per-bus actors and one shared critic.

mod buffer;
mod checkpoint;
mod eval;
mod loss;
mod policy;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError};
use crate::nn::{AdamConfig, NnError};

pub use buffer::{compute_gae, normalize, ExperienceBuffer};
pub use checkpoint::{Checkpoint, ParameterCounts, RngRecord, CHECKPOINT_VERSION};
pub use eval::{evaluate, evaluate_mppt, evaluation_scenarios, EvalSummary};
pub use loss::{ppo_loss, Batch, LossOutput, LossWeights};
pub use policy::{PolicyMode, PolicySet, PolicyTape};
pub use trainer::{episode_rng, train, write_metrics, IterationMetrics, TrainOutcome, Trainer, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum PpoError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("experience buffer: {0}")]
    Buffer(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub mode: PolicyMode,
    /// Environment steps collected per update; rounded up to whole episodes.
    pub steps_per_update: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub normalize_advantages: bool,
    /// Hidden widths of each per-bus actor.
    pub actor_hidden: Vec<usize>,
    /// Hidden widths of the centralized actor.
    pub centralized_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub actor_adam: AdamConfig,
    pub critic_adam: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            mode: PolicyMode::Decentralized,
            steps_per_update: 2048,
            batch_size: 16,
            epochs: 10,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.0,
            value_coef: 0.5,
            normalize_advantages: true,
            actor_hidden: vec![4, 4],
            centralized_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            init_log_std: 0.5f64.ln(),
            actor_adam: AdamConfig::default(),
            critic_adam: AdamConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.steps_per_update == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err("steps_per_update, batch_size and epochs must be positive".into());
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(format!("clip must be in (0, 1), got {}", self.clip));
        }
        for (name, x) in [("gamma", self.gamma), ("lambda", self.lambda)] {
            if !(0.0..=1.0).contains(&x) {
                return Err(format!("{name} must be in [0, 1], got {x}"));
            }
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return Err("loss coefficients must be non-negative".into());
        }
        for (name, h) in [
            ("actor_hidden", &self.actor_hidden),
            ("centralized_hidden", &self.centralized_hidden),
            ("critic_hidden", &self.critic_hidden),
        ] {
            if h.contains(&0) {
                return Err(format!("{name} has a zero-width layer"));
            }
        }
        for adam in [self.actor_adam, self.critic_adam] {
            if !(adam.lr > 0.0 && (0.0..1.0).contains(&adam.beta1) && (0.0..1.0).contains(&adam.beta2) && adam.eps > 0.0) {
                return Err(format!("invalid Adam settings {adam:?}"));
            }
        }
        if !self.init_log_std.is_finite() {
            return Err("init_log_std must be finite".into());
        }
        Ok(())
    }

    pub fn hidden_for_mode(&self) -> &[usize] {
        match self.mode {
            PolicyMode::Decentralized => &self.actor_hidden,
            PolicyMode::Centralized => &self.centralized_hidden,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            clip: self.clip,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
        }
    }
}

/// Everything a training run depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    /// PPO iterations to run.
    pub iterations: usize,
    /// Concurrent rollout threads; results do not depend on it.
    pub workers: usize,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            iterations: 50,
            workers: 1,
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, agents: usize) -> Result<(), PpoError> {
        self.env.validate(agents).map_err(PpoError::Config)?;
        self.ppo.validate().map_err(PpoError::Config)?;
        if self.workers == 0 {
            return Err(PpoError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    /// Whole episodes collected per update.
    pub fn episodes_per_update(&self) -> usize {
        self.ppo.steps_per_update.div_ceil(self.env.horizon)
    }
}
