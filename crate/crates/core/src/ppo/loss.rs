use crate::nn::Mlp;

use super::policy::PolicySet;
use super::PpoError;

/// Samples the loss is evaluated on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub observations: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    /// Joint log-probability under the behaviour policy.
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            observations: idx.iter().map(|&i| self.observations[i].clone()).collect(),
            raw_actions: idx.iter().map(|&i| self.raw_actions[i].clone()).collect(),
            old_log_probs: idx.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// Loss value, diagnostics and gradients of the total loss.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Negated clipped surrogate.
    pub policy_loss: f64,
    /// Mean squared error of the critic against the returns.
    pub value_loss: f64,
    pub entropy: f64,
    /// Share of samples whose ratio left `[1 - clip, 1 + clip]`.
    pub clip_fraction: f64,
    /// Estimate of KL(old || new), `mean((r - 1) - ln r)`.
    pub approx_kl: f64,
    /// One gradient per actor network.
    pub actor_grads: Vec<Vec<f64>>,
    pub log_std_grad: Vec<f64>,
    pub critic_grad: Vec<f64>,
}

/// Clipped-surrogate PPO loss over the joint action plus the weighted
/// value and entropy terms, with exact gradients.
pub fn ppo_loss(policy: &PolicySet, critic: &Mlp, batch: &Batch, w: &LossWeights) -> Result<LossOutput, PpoError> {
    let b = batch.len();
    if b == 0 {
        return Err(PpoError::Buffer("empty minibatch".into()));
    }
    let inv_b = 1.0 / b as f64;
    let log_std = policy.log_std();
    let inv_var: Vec<f64> = log_std.iter().map(|ls| (-2.0 * ls).exp()).collect();

    let mut actor_grads: Vec<Vec<f64>> = policy.actors().iter().map(|a| vec![0.0; a.num_parameters()]).collect();
    let mut log_std_grad = vec![0.0; log_std.len()];
    let mut critic_grad = vec![0.0; critic.num_parameters()];
    let (mut policy_loss, mut value_loss, mut clipped, mut kl) = (0.0, 0.0, 0usize, 0.0);

    for s in 0..b {
        let obs = &batch.observations[s];
        let raw = &batch.raw_actions[s];
        let adv = batch.advantages[s];

        let tape = policy.mean_tape(obs)?;
        let mean = tape.mean();
        let new_lp: f64 = policy.log_probs(mean, raw).iter().sum();
        let log_ratio = new_lp - batch.old_log_probs[s];
        let ratio = log_ratio.exp();
        let clipped_ratio = ratio.clamp(1.0 - w.clip, 1.0 + w.clip);
        let unclipped = ratio * adv;
        let surrogate = unclipped.min(clipped_ratio * adv);
        policy_loss -= surrogate * inv_b;
        if (ratio - 1.0).abs() > w.clip {
            clipped += 1;
        }
        kl += (ratio - 1.0 - log_ratio) * inv_b;

        // The min picks the unclipped branch unless the ratio has moved past
        // the clip edge in the direction the advantage rewards.
        let active = !((adv > 0.0 && ratio > 1.0 + w.clip) || (adv < 0.0 && ratio < 1.0 - w.clip));
        if active {
            let d_log_ratio = -unclipped * inv_b;
            let mut mean_grad = vec![0.0; mean.len()];
            for d in 0..mean.len() {
                let diff = raw[d] - mean[d];
                mean_grad[d] = d_log_ratio * diff * inv_var[d];
                log_std_grad[d] += d_log_ratio * (diff * diff * inv_var[d] - 1.0);
            }
            policy.backward(&tape, &mean_grad, &mut actor_grads)?;
        }

        let (v, vtape) = critic.forward_tape(obs)?;
        let err = v[0] - batch.returns[s];
        value_loss += err * err * inv_b;
        critic.backward(&vtape, &[2.0 * w.value_coef * err * inv_b], &mut critic_grad)?;
    }

    let entropy = policy.entropy();
    for g in log_std_grad.iter_mut() {
        *g -= w.entropy_coef;
    }
    Ok(LossOutput {
        loss: policy_loss + w.value_coef * value_loss - w.entropy_coef * entropy,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 * inv_b,
        approx_kl: kl,
        actor_grads,
        log_std_grad,
        critic_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::PolicyMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const W: LossWeights = LossWeights {
        clip: 0.2,
        value_coef: 0.5,
        entropy_coef: 0.0,
    };

    fn setup(seed: u64) -> (PolicySet, Mlp, Batch) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = PolicySet::new(PolicyMode::Decentralized, 2, &[4, 4], -0.5, &mut rng).unwrap();
        let critic = Mlp::orthogonal(&[4, 8, 1], 1.0, 1.0, &mut rng).unwrap();
        let observations = vec![vec![0.1, -0.3, 0.5, 0.2], vec![-0.4, 0.0, 0.3, -0.1]];
        let raw_actions = vec![vec![0.2, -0.1, 0.0, 0.3], vec![-0.2, 0.4, 0.1, -0.5]];
        let old_log_probs = observations
            .iter()
            .zip(&raw_actions)
            .map(|(o, a)| policy.log_probs(&policy.mean(o).unwrap(), a).iter().sum())
            .collect();
        let batch = Batch {
            observations,
            raw_actions,
            old_log_probs,
            advantages: vec![1.0, -0.5],
            returns: vec![0.3, -0.2],
        };
        (policy, critic, batch)
    }

    #[test]
    fn unit_ratio_gives_negative_mean_advantage() {
        let (policy, critic, batch) = setup(1);
        let out = ppo_loss(&policy, &critic, &batch, &W).unwrap();
        assert!((out.policy_loss + 0.25).abs() < 1e-12);
        assert_eq!(out.clip_fraction, 0.0);
        assert!(out.approx_kl.abs() < 1e-15);
    }

    #[test]
    fn clip_caps_positive_advantage() {
        let (policy, critic, mut batch) = setup(2);
        batch.advantages = vec![1.0];
        batch.returns = vec![0.0];
        batch.observations.truncate(1);
        batch.raw_actions.truncate(1);
        // Old log-prob lowered by ln 1.5 makes the ratio 1.5.
        batch.old_log_probs = vec![batch.old_log_probs[0] - 1.5f64.ln()];
        let out = ppo_loss(&policy, &critic, &batch, &W).unwrap();
        assert!((out.policy_loss + 1.2).abs() < 1e-12);
        assert_eq!(out.clip_fraction, 1.0);
        assert!(out.actor_grads.iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_advantage_zero_policy_gradient() {
        let (policy, critic, mut batch) = setup(3);
        batch.advantages = vec![0.0, 0.0];
        let out = ppo_loss(&policy, &critic, &batch, &W).unwrap();
        assert!(out.actor_grads.iter().flatten().all(|g| *g == 0.0));
        assert!(out.log_std_grad.iter().all(|g| *g == 0.0));
    }
}
