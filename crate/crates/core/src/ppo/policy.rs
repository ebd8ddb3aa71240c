use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{AgentAction, AgentObservation, Controller, Decision};
use crate::nn::{Mlp, NnError, Tape};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// How the actor networks are wired to the buses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// One small network per bus, fed only that bus's observation.
    #[default]
    Decentralized,
    /// One network mapping every observation to every action.
    Centralized,
}

impl std::fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyMode::Decentralized => "decentralized",
            PolicyMode::Centralized => "centralized",
        })
    }
}

impl std::str::FromStr for PolicyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decentralized" => Ok(PolicyMode::Decentralized),
            "centralized" => Ok(PolicyMode::Centralized),
            other => Err(format!("unknown policy mode '{other}'")),
        }
    }
}

/// Gaussian actors with state-independent standard deviations.
///
/// Actions are laid out as `(a_P, a_Q)` per agent. Each actor network owns
/// a contiguous slice of that layout and reads the same slice of the
/// flattened observation: two entries per actor when decentralized, all
/// `2n` for the single centralized actor.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySet {
    mode: PolicyMode,
    num_agents: usize,
    actors: Vec<Mlp>,
    log_std: Vec<f64>,
}

/// Per-actor intermediates for a gradient pass.
#[derive(Clone, Debug)]
pub struct PolicyTape {
    tapes: Vec<Tape>,
    mean: Vec<f64>,
}

impl PolicyTape {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }
}

impl PolicySet {
    /// Actors with orthogonal hidden layers (gain `sqrt 2`), a near-zero
    /// output layer (gain 0.01) and every log-std at `init_log_std`.
    pub fn new<R: Rng + ?Sized>(
        mode: PolicyMode,
        num_agents: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if num_agents == 0 {
            return Err(NnError::Shape("a policy set needs at least one agent".into()));
        }
        let width = match mode {
            PolicyMode::Decentralized => 2,
            PolicyMode::Centralized => 2 * num_agents,
        };
        let mut sizes = vec![width];
        sizes.extend_from_slice(hidden);
        sizes.push(width);
        let count = 2 * num_agents / width;
        let actors = (0..count)
            .map(|_| Mlp::orthogonal(&sizes, 2f64.sqrt(), 0.01, rng))
            .collect::<Result<_, _>>()?;
        Ok(PolicySet {
            mode,
            num_agents,
            actors,
            log_std: vec![init_log_std; 2 * num_agents],
        })
    }

    pub fn from_parts(mode: PolicyMode, num_agents: usize, actors: Vec<Mlp>, log_std: Vec<f64>) -> Result<Self, NnError> {
        let width = match mode {
            PolicyMode::Decentralized => 2,
            PolicyMode::Centralized => 2 * num_agents,
        };
        if num_agents == 0 || actors.len() * width != 2 * num_agents || log_std.len() != 2 * num_agents {
            return Err(NnError::Shape(format!(
                "{} actors and {} log-stds do not fit {num_agents} {mode} agents",
                actors.len(),
                log_std.len()
            )));
        }
        if let Some(a) = actors.iter().find(|a| a.input_size() != width || a.output_size() != width) {
            return Err(NnError::Shape(format!(
                "actor maps {} -> {}, expected {width} -> {width}",
                a.input_size(),
                a.output_size()
            )));
        }
        Ok(PolicySet {
            mode,
            num_agents,
            actors,
            log_std,
        })
    }

    pub fn mode(&self) -> PolicyMode {
        self.mode
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn actors(&self) -> &[Mlp] {
        &self.actors
    }

    pub fn actor_mut(&mut self, g: usize) -> &mut Mlp {
        &mut self.actors[g]
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        &mut self.log_std
    }

    /// Action (and observation) indices handled by actor `g`.
    pub fn slice(&self, g: usize) -> std::ops::Range<usize> {
        let w = self.actors[g].input_size();
        g * w..(g + 1) * w
    }

    /// Network weights and biases over all actors; log-stds are not included.
    pub fn actor_parameter_count(&self) -> usize {
        self.actors.iter().map(Mlp::num_parameters).sum()
    }

    fn check_obs(&self, obs: &[f64]) -> Result<(), NnError> {
        if obs.len() != 2 * self.num_agents {
            return Err(NnError::Shape(format!(
                "joint observation has {} entries, expected {}",
                obs.len(),
                2 * self.num_agents
            )));
        }
        Ok(())
    }

    /// Joint action mean for a flattened observation.
    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_obs(obs)?;
        let mut out = Vec::with_capacity(obs.len());
        for (g, actor) in self.actors.iter().enumerate() {
            out.extend(actor.forward(&obs[self.slice(g)])?);
        }
        Ok(out)
    }

    pub fn mean_tape(&self, obs: &[f64]) -> Result<PolicyTape, NnError> {
        self.check_obs(obs)?;
        let mut mean = Vec::with_capacity(obs.len());
        let mut tapes = Vec::with_capacity(self.actors.len());
        for (g, actor) in self.actors.iter().enumerate() {
            let (out, tape) = actor.forward_tape(&obs[self.slice(g)])?;
            mean.extend(out);
            tapes.push(tape);
        }
        Ok(PolicyTape { tapes, mean })
    }

    /// Accumulates `d loss / d mean` into per-actor gradient buffers.
    pub fn backward(&self, tape: &PolicyTape, mean_grad: &[f64], actor_grads: &mut [Vec<f64>]) -> Result<(), NnError> {
        for (g, actor) in self.actors.iter().enumerate() {
            actor.backward(&tape.tapes[g], &mean_grad[self.slice(g)], &mut actor_grads[g])?;
        }
        Ok(())
    }

    /// Per-agent log-density of a raw joint action.
    pub fn log_probs(&self, mean: &[f64], raw: &[f64]) -> Vec<f64> {
        (0..self.num_agents)
            .map(|i| (2 * i..2 * i + 2).map(|d| gaussian_log_density(raw[d], mean[d], self.log_std[d])).sum())
            .collect()
    }

    /// Entropy of the joint Gaussian; independent of the state.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
    }

    /// Samples (or, deterministically, takes the mean of) the joint action.
    /// Returns the clipped actions, the raw joint action and per-agent
    /// log-probabilities of the raw action.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        stochastic: bool,
        rng: &mut R,
    ) -> Result<(Vec<AgentAction>, Vec<f64>, Vec<f64>), NnError> {
        let mean = self.mean(obs)?;
        let raw: Vec<f64> = if stochastic {
            mean.iter()
                .zip(&self.log_std)
                .map(|(m, ls)| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + ls.exp() * z
                })
                .collect()
        } else {
            mean.clone()
        };
        let log_probs = if stochastic { self.log_probs(&mean, &raw) } else { Vec::new() };
        let actions = raw
            .chunks_exact(2)
            .map(|c| AgentAction::new(c[0], c[1]).clipped())
            .collect();
        Ok((actions, raw, log_probs))
    }
}

pub(crate) fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - 0.5 * LN_2PI
}

impl Controller for PolicySet {
    fn decide(&self, obs: &[AgentObservation], stochastic: bool, rng: &mut dyn RngCore) -> Decision {
        let flat = crate::env::flatten_observations(obs);
        let (actions, raw, log_probs) = self
            .act(&flat, stochastic, rng)
            .expect("environment and policy agree on the agent count");
        Decision {
            actions,
            raw,
            log_probs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_init_gives_near_zero_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PolicySet::new(PolicyMode::Decentralized, 5, &[4, 4], 0.5f64.ln(), &mut rng).unwrap();
        let obs: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let (actions, _, lp) = p.act(&obs, false, &mut rng).unwrap();
        assert!(lp.is_empty());
        for a in actions {
            assert!(a.a_p.abs() < 0.05 && a.a_q.abs() < 0.05);
        }
    }

    #[test]
    fn parameter_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = PolicySet::new(PolicyMode::Decentralized, 16, &[4, 4], 0.0, &mut rng).unwrap();
        let c = PolicySet::new(PolicyMode::Centralized, 16, &[64, 64], 0.0, &mut rng).unwrap();
        assert_eq!(d.actor_parameter_count(), 672);
        assert_eq!(c.actor_parameter_count(), 8352);
        assert_eq!(d.actors().len(), 16);
        assert_eq!(c.actors().len(), 1);
    }

    #[test]
    fn collapsed_std_returns_clipped_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = PolicySet::new(PolicyMode::Decentralized, 2, &[4, 4], -60.0, &mut rng).unwrap();
        p.actor_mut(0).params_mut().iter_mut().for_each(|w| *w = 3.0);
        let obs = [0.5, -0.5, 0.1, 0.2];
        let (det, _, _) = p.act(&obs, false, &mut rng).unwrap();
        let (sto, _, _) = p.act(&obs, true, &mut rng).unwrap();
        assert_eq!(det[0], AgentAction::new(1.0, 1.0));
        for (a, b) in det.iter().zip(&sto) {
            assert!((a.a_p - b.a_p).abs() < 1e-20 && (a.a_q - b.a_q).abs() < 1e-20);
        }
    }

    #[test]
    fn log_density_matches_closed_form() {
        let lp = gaussian_log_density(1.0, 0.0, 0.0);
        assert!((lp - (-0.5 - 0.5 * LN_2PI)).abs() < 1e-15);
        assert!((LN_2PI - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn mode_round_trips_through_strings() {
        for m in [PolicyMode::Decentralized, PolicyMode::Centralized] {
            assert_eq!(m.to_string().parse::<PolicyMode>().unwrap(), m);
        }
        assert!("mixed".parse::<PolicyMode>().is_err());
    }
}
