use crate::env::{Transition, TransitionSink};
use crate::nn::Mlp;

use super::PpoError;

/// Rollout storage between updates. Values are filled in from the critic
/// once collection is over.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperienceBuffer {
    pub observations: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    /// Per-agent log-probabilities under the behaviour policy.
    pub log_probs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
}

impl TransitionSink for ExperienceBuffer {
    fn record(&mut self, t: Transition) {
        self.observations.push(t.observation);
        self.raw_actions.push(t.raw_action);
        self.log_probs.push(t.log_probs);
        self.rewards.push(t.reward);
        self.dones.push(t.done);
    }
}

impl ExperienceBuffer {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        *self = ExperienceBuffer::default();
    }

    pub fn append(&mut self, other: ExperienceBuffer) {
        self.observations.extend(other.observations);
        self.raw_actions.extend(other.raw_actions);
        self.log_probs.extend(other.log_probs);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.dones.extend(other.dones);
    }

    /// Joint log-probability of step `t` under the behaviour policy.
    pub fn joint_log_prob(&self, t: usize) -> f64 {
        self.log_probs[t].iter().sum()
    }

    /// Evaluates the critic on every stored observation.
    pub fn fill_values(&mut self, critic: &Mlp) -> Result<(), PpoError> {
        self.values = self
            .observations
            .iter()
            .map(|o| critic.forward(o).map(|v| v[0]))
            .collect::<Result<_, _>>()?;
        Ok(())
    }
}

/// Generalized advantage estimates and the matching value targets.
///
/// Every episode must end with `done`; the value after a terminal step is
/// taken as 0.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(PpoError::Buffer(format!(
            "{n} rewards, {} values, {} done flags",
            values.len(),
            dones.len()
        )));
    }
    if n > 0 && !dones[n - 1] {
        return Err(PpoError::Buffer("buffer ends in the middle of an episode".into()));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        if dones[t] {
            next_adv = 0.0;
            next_value = 0.0;
        }
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to zero mean and unit variance; leaves constant input at zero.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = if std > 1e-12 { (*x - mean) / std } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_episode() {
        let (a, r) = compute_gae(&[2.0], &[0.5], &[true], 0.99, 0.3).unwrap();
        assert_eq!(a, vec![1.5]);
        assert_eq!(r, vec![2.0]);
    }

    #[test]
    fn monte_carlo_limit() {
        let rewards = [1.0, -2.0, 0.5, 3.0];
        let values = [0.1, 0.2, -0.3, 0.4];
        let (a, _) = compute_gae(&rewards, &values, &[false, false, false, true], 1.0, 1.0).unwrap();
        for t in 0..4 {
            let g: f64 = rewards[t..].iter().sum();
            assert!((a[t] - (g - values[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn three_step_hand_recursion() {
        // gamma = 0.9, lambda = 0.5
        // d2 = 1 - 0.5 = 0.5;          A2 = 0.5
        // d1 = 0 + 0.9*0.5 - 1 = -0.55; A1 = -0.55 + 0.45*0.5 = -0.325
        // d0 = 2 + 0.9*1 - 0 = 2.9;     A0 = 2.9 + 0.45*(-0.325) = 2.75375
        let (a, r) = compute_gae(&[2.0, 0.0, 1.0], &[0.0, 1.0, 0.5], &[false, false, true], 0.9, 0.5).unwrap();
        let want = [2.75375, -0.325, 0.5];
        for t in 0..3 {
            assert!((a[t] - want[t]).abs() < 1e-12, "{a:?}");
        }
        assert!((r[1] - 0.675).abs() < 1e-12);
    }

    #[test]
    fn episodes_do_not_leak() {
        let (a, _) = compute_gae(&[1.0, 5.0], &[0.0, 0.0], &[true, true], 0.99, 0.95).unwrap();
        assert_eq!(a, vec![1.0, 5.0]);
    }

    #[test]
    fn incomplete_episode_rejected() {
        assert!(compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 0.99, 0.95).is_err());
    }

    #[test]
    fn normalization() {
        let mut xs = vec![1.0, 2.0, 3.0, 4.0];
        normalize(&mut xs);
        let mean: f64 = xs.iter().sum::<f64>() / 4.0;
        let var: f64 = xs.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
        let mut flat = vec![2.0; 3];
        normalize(&mut flat);
        assert_eq!(flat, vec![0.0; 3]);
    }
}
