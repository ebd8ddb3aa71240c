use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{run_episode, EpisodeStats, Environment};
use crate::grid::NetworkModel;
use crate::nn::{AdamState, Mlp};

use super::buffer::{compute_gae, normalize, ExperienceBuffer};
use super::checkpoint::Checkpoint;
use super::loss::{ppo_loss, Batch};
use super::policy::PolicySet;
use super::{PpoError, TrainConfig};

pub const METRICS_HEADER: &str =
    "iteration,env_steps,mean_episode_reward,policy_loss,value_loss,clip_fraction,mean_kl,max_voltage_deviation";

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Environment steps collected so far, this iteration included.
    pub env_steps: u64,
    /// Mean over this iteration's episodes of the summed system reward.
    pub mean_episode_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub mean_kl: f64,
    /// Largest `|1 - V|` at any controllable bus in any step of the iteration.
    pub max_voltage_deviation: f64,
}

pub fn write_metrics<W: Write>(rows: &[IterationMetrics], mut out: W) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.iteration,
            m.env_steps,
            m.mean_episode_reward,
            m.policy_loss,
            m.value_loss,
            m.clip_fraction,
            m.mean_kl,
            m.max_voltage_deviation
        )?;
    }
    Ok(())
}

/// RNG of the `index`-th training episode: its own stream under the run
/// seed, so rollouts do not depend on how episodes are spread over workers.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Networks, optimizers and counters of a training run.
#[derive(Clone, Debug)]
pub struct Trainer<'m> {
    model: &'m NetworkModel,
    config: TrainConfig,
    policy: PolicySet,
    critic: Mlp,
    actor_opts: Vec<AdamState>,
    critic_opt: AdamState,
    /// Initialization, then minibatch shuffling.
    rng: ChaCha8Rng,
    iterations_done: usize,
    episodes_done: u64,
    env_steps: u64,
    violations: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<IterationMetrics>,
    /// Capability violations over every step of the run.
    pub constraint_violations: u64,
}

/// Runs `config.iterations` PPO iterations from a fresh initialization.
pub fn train(model: &NetworkModel, config: &TrainConfig) -> Result<TrainOutcome, PpoError> {
    let mut trainer = Trainer::new(model, config.clone())?;
    let metrics = trainer.run(config.iterations, |_| {})?;
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        metrics,
        constraint_violations: trainer.constraint_violations(),
    })
}

impl<'m> Trainer<'m> {
    pub fn new(model: &'m NetworkModel, config: TrainConfig) -> Result<Self, PpoError> {
        let n = model.num_agents();
        config.validate(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let ppo = &config.ppo;
        let policy = PolicySet::new(ppo.mode, n, ppo.hidden_for_mode(), ppo.init_log_std, &mut rng)?;
        let mut critic_sizes = vec![2 * n];
        critic_sizes.extend_from_slice(&ppo.critic_hidden);
        critic_sizes.push(1);
        let critic = Mlp::orthogonal(&critic_sizes, 2f64.sqrt(), 1.0, &mut rng)?;
        let actor_opts = (0..policy.actors().len())
            .map(|g| AdamState::new(policy.actors()[g].num_parameters() + policy.slice(g).len(), ppo.actor_adam))
            .collect();
        let critic_opt = AdamState::new(critic.num_parameters(), ppo.critic_adam);
        Ok(Trainer {
            model,
            config,
            policy,
            critic,
            actor_opts,
            critic_opt,
            rng,
            iterations_done: 0,
            episodes_done: 0,
            env_steps: 0,
            violations: 0,
        })
    }

    /// Resumes from a checkpoint; continuing gives the same result as an
    /// uninterrupted run.
    pub fn from_checkpoint(model: &'m NetworkModel, ckpt: &Checkpoint) -> Result<Self, PpoError> {
        let parts = ckpt.restore(model)?;
        Ok(Trainer {
            model,
            config: ckpt.config.clone(),
            policy: parts.policy,
            critic: parts.critic,
            actor_opts: parts.actor_opts,
            critic_opt: parts.critic_opt,
            rng: parts.rng,
            iterations_done: ckpt.iterations_done,
            episodes_done: ckpt.episodes_done,
            env_steps: ckpt.env_steps,
            violations: ckpt.constraint_violations,
        })
    }

    pub fn model(&self) -> &'m NetworkModel {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &PolicySet {
        &self.policy
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn actor_optimizers(&self) -> &[AdamState] {
        &self.actor_opts
    }

    pub fn critic_optimizer(&self) -> &AdamState {
        &self.critic_opt
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn iterations_done(&self) -> usize {
        self.iterations_done
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn constraint_violations(&self) -> u64 {
        self.violations
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_trainer(self)
    }

    /// Runs `iterations` more iterations, calling `on_iteration` after each.
    pub fn run(
        &mut self,
        iterations: usize,
        mut on_iteration: impl FnMut(&IterationMetrics),
    ) -> Result<Vec<IterationMetrics>, PpoError> {
        let mut rows = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let m = self.iterate()?;
            on_iteration(&m);
            rows.push(m);
        }
        Ok(rows)
    }

    /// Collects a batch of episodes with the current policy and updates on it.
    pub fn iterate(&mut self) -> Result<IterationMetrics, PpoError> {
        let (mut buffer, stats) = self.collect()?;
        let update = self.update(&mut buffer)?;
        self.iterations_done += 1;
        let mean_episode_reward = stats.iter().map(|s| s.total_reward).sum::<f64>() / stats.len() as f64;
        Ok(IterationMetrics {
            iteration: self.iterations_done,
            env_steps: self.env_steps,
            mean_episode_reward,
            policy_loss: update.policy_loss,
            value_loss: update.value_loss,
            clip_fraction: update.clip_fraction,
            mean_kl: update.mean_kl,
            max_voltage_deviation: stats.iter().map(|s| s.max_deviation).fold(0.0, f64::max),
        })
    }

    /// Runs the next batch of training episodes, spread over the configured
    /// number of worker threads.
    pub fn collect(&mut self) -> Result<(ExperienceBuffer, Vec<EpisodeStats>), PpoError> {
        let count = self.config.episodes_per_update() as u64;
        let first = self.episodes_done;
        let workers = (self.config.workers as u64).clamp(1, count);
        let per = count.div_ceil(workers);
        let (model, policy, env_cfg, seed) = (self.model, &self.policy, &self.config.env, self.config.seed);

        let rollout = |range: std::ops::Range<u64>| -> Result<(ExperienceBuffer, Vec<EpisodeStats>), PpoError> {
            let mut env = Environment::new(model, env_cfg.clone())?;
            let mut buffer = ExperienceBuffer::default();
            let mut stats = Vec::with_capacity((range.end - range.start) as usize);
            for e in range {
                let mut rng = episode_rng(seed, e);
                stats.push(run_episode(&mut env, policy, true, Some(&mut buffer), &mut rng)?);
            }
            Ok((buffer, stats))
        };

        let ranges: Vec<_> = (0..workers)
            .map(|w| first + (w * per).min(count)..first + ((w + 1) * per).min(count))
            .filter(|r| !r.is_empty())
            .collect();
        let parts: Vec<Result<_, PpoError>> = if ranges.len() == 1 {
            vec![rollout(ranges[0].clone())]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = ranges.iter().map(|r| s.spawn(|| rollout(r.clone()))).collect();
                handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
            })
        };

        let mut buffer = ExperienceBuffer::default();
        let mut stats = Vec::with_capacity(count as usize);
        for part in parts {
            let (b, s) = part?;
            buffer.append(b);
            stats.extend(s);
        }
        self.episodes_done += count;
        self.env_steps += buffer.len() as u64;
        self.violations += stats.iter().map(|s| s.constraint_violations as u64).sum::<u64>();
        Ok((buffer, stats))
    }

    /// PPO update on a buffer of complete episodes; the buffer is cleared.
    pub fn update(&mut self, buffer: &mut ExperienceBuffer) -> Result<UpdateStats, PpoError> {
        if buffer.is_empty() {
            return Err(PpoError::Buffer("no transitions to learn from".into()));
        }
        let ppo = self.config.ppo.clone();
        buffer.fill_values(&self.critic)?;
        let (mut advantages, returns) = compute_gae(&buffer.rewards, &buffer.values, &buffer.dones, ppo.gamma, ppo.lambda)?;
        if ppo.normalize_advantages {
            normalize(&mut advantages);
        }
        let old_log_probs = (0..buffer.len()).map(|t| buffer.joint_log_prob(t)).collect();
        let data = std::mem::take(buffer);
        let batch = Batch {
            observations: data.observations,
            raw_actions: data.raw_actions,
            old_log_probs,
            advantages,
            returns,
        };

        let weights = ppo.loss_weights();
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut totals = UpdateStats::default();
        let mut minibatches = 0usize;
        for _ in 0..ppo.epochs {
            order.shuffle(&mut self.rng);
            for idx in order.chunks(ppo.batch_size) {
                let out = ppo_loss(&self.policy, &self.critic, &batch.select(idx), &weights)?;
                self.apply(&out.actor_grads, &out.log_std_grad, &out.critic_grad)?;
                totals.policy_loss += out.policy_loss;
                totals.value_loss += out.value_loss;
                totals.clip_fraction += out.clip_fraction;
                totals.mean_kl += out.approx_kl;
                minibatches += 1;
            }
        }
        let k = minibatches as f64;
        Ok(UpdateStats {
            policy_loss: totals.policy_loss / k,
            value_loss: totals.value_loss / k,
            clip_fraction: totals.clip_fraction / k,
            mean_kl: totals.mean_kl / k,
        })
    }

    /// One Adam step per actor (covering its log-stds) and one for the critic.
    fn apply(&mut self, actor_grads: &[Vec<f64>], log_std_grad: &[f64], critic_grad: &[f64]) -> Result<(), PpoError> {
        for (g, grads) in actor_grads.iter().enumerate() {
            let range = self.policy.slice(g);
            let mut params = self.policy.actors()[g].params().to_vec();
            let split = params.len();
            params.extend_from_slice(&self.policy.log_std()[range.clone()]);
            let mut full_grad = grads.clone();
            full_grad.extend_from_slice(&log_std_grad[range.clone()]);
            self.actor_opts[g].step(&mut params, &full_grad)?;
            self.policy.actor_mut(g).params_mut().copy_from_slice(&params[..split]);
            self.policy.log_std_mut()[range].copy_from_slice(&params[split..]);
        }
        self.critic_opt.step(self.critic.params_mut(), critic_grad)?;
        Ok(())
    }
}

/// Averages over the minibatches of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub mean_kl: f64,
}
