use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::NetworkModel;
use crate::nn::{AdamRecord, AdamState, Mlp, NetworkRecord};

use super::policy::PolicySet;
use super::trainer::Trainer;
use super::{PpoError, TrainConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCounts {
    /// Weights and biases of all actor networks.
    pub actors: usize,
    pub log_std: usize,
    pub critic: usize,
}

/// ChaCha stream position; `word_pos` is a decimal string because it is 128 bits wide.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngRecord {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngRecord {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngRecord {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, PpoError> {
        let bad = || PpoError::Checkpoint(format!("malformed rng state {self:?}"));
        if self.seed.len() != 64 || !self.seed.is_ascii() {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let word_pos: u128 = self.word_pos.parse().map_err(|_| bad())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

/// Complete training state: networks, optimizer moments, RNG position,
/// counters and the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub num_agents: usize,
    pub parameter_counts: ParameterCounts,
    pub actors: Vec<NetworkRecord>,
    pub log_std: Vec<f64>,
    pub critic: NetworkRecord,
    pub actor_optimizers: Vec<AdamRecord>,
    pub critic_optimizer: AdamRecord,
    pub rng: RngRecord,
    pub iterations_done: usize,
    pub episodes_done: u64,
    pub env_steps: u64,
    pub constraint_violations: u64,
}

pub(crate) struct Restored {
    pub policy: PolicySet,
    pub critic: Mlp,
    pub actor_opts: Vec<AdamState>,
    pub critic_opt: AdamState,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub(crate) fn from_trainer(t: &Trainer<'_>) -> Self {
        let policy = t.policy();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: t.config().clone(),
            num_agents: policy.num_agents(),
            parameter_counts: ParameterCounts {
                actors: policy.actor_parameter_count(),
                log_std: policy.log_std().len(),
                critic: t.critic().num_parameters(),
            },
            actors: policy.actors().iter().map(Mlp::to_record).collect(),
            log_std: policy.log_std().to_vec(),
            critic: t.critic().to_record(),
            actor_optimizers: t.actor_optimizers().iter().map(AdamState::to_record).collect(),
            critic_optimizer: t.critic_optimizer().to_record(),
            rng: RngRecord::capture(t.rng()),
            iterations_done: t.iterations_done(),
            episodes_done: t.episodes_done(),
            env_steps: t.env_steps(),
            constraint_violations: t.constraint_violations(),
        }
    }

    /// The stored actors, ready to act.
    pub fn policy(&self) -> Result<PolicySet, PpoError> {
        let actors = self.actors.iter().map(Mlp::from_record).collect::<Result<_, _>>()?;
        Ok(PolicySet::from_parts(
            self.config.ppo.mode,
            self.num_agents,
            actors,
            self.log_std.clone(),
        )?)
    }

    pub fn critic(&self) -> Result<Mlp, PpoError> {
        Ok(Mlp::from_record(&self.critic)?)
    }

    /// Fails unless the checkpoint was trained for `model`'s agent count.
    pub fn check_model(&self, model: &NetworkModel) -> Result<(), PpoError> {
        if self.num_agents != model.num_agents() {
            return Err(PpoError::Checkpoint(format!(
                "checkpoint controls {} buses but the feeder has {}",
                self.num_agents,
                model.num_agents()
            )));
        }
        Ok(())
    }

    pub(crate) fn restore(&self, model: &NetworkModel) -> Result<Restored, PpoError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(PpoError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        self.check_model(model)?;
        self.config.validate(model.num_agents())?;
        let policy = self.policy()?;
        let critic = self.critic()?;
        if critic.input_size() != 2 * self.num_agents || critic.output_size() != 1 {
            return Err(PpoError::Checkpoint("critic shape does not match the agent count".into()));
        }
        let actor_opts: Vec<AdamState> = self
            .actor_optimizers
            .iter()
            .map(AdamState::from_record)
            .collect::<Result<_, _>>()?;
        let sizes_ok = actor_opts.len() == policy.actors().len()
            && actor_opts
                .iter()
                .enumerate()
                .all(|(g, o)| o.len() == policy.actors()[g].num_parameters() + policy.slice(g).len());
        let critic_opt = AdamState::from_record(&self.critic_optimizer)?;
        if !sizes_ok || critic_opt.len() != critic.num_parameters() {
            return Err(PpoError::Checkpoint("optimizer state does not match the networks".into()));
        }
        Ok(Restored {
            policy,
            critic,
            actor_opts,
            critic_opt,
            rng: self.rng.restore()?,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PpoError> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| PpoError::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(PpoError::Checkpoint(format!("unsupported version {}", ckpt.version)));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), PpoError> {
        std::fs::write(path, self.to_json()).map_err(|source| PpoError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PpoError> {
        let text = std::fs::read_to_string(path).map_err(|source| PpoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Checkpoint::from_json(&text)
    }
}
