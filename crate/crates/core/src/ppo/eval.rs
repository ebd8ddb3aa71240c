use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{mppt_baseline, run_scenario, Controller, EnvConfig, Environment, EpisodeStats};
use crate::grid::{NetworkModel, Scenario, ScenarioSampler};

use super::PpoError;

/// Aggregate of a set of evaluation episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    /// Mean over episodes of the summed system reward.
    pub mean_episode_reward: f64,
    /// Largest `|1 - V|` over controllable buses after the final step.
    pub max_deviation: f64,
    /// Largest `|1 - V|` over every step, including the settling transient.
    pub max_deviation_any_step: f64,
    pub max_voltage: f64,
    /// Mean of the final `P^c / p_env` over all buses and episodes.
    pub mean_power_ratio: f64,
    pub median_power_ratio: f64,
    pub constraint_violations: usize,
}

impl EvalSummary {
    pub fn from_episodes(stats: &[EpisodeStats]) -> Self {
        assert!(!stats.is_empty(), "summary of zero episodes");
        let ratios: Vec<f64> = stats.iter().flat_map(EpisodeStats::power_ratios).collect();
        EvalSummary {
            episodes: stats.len(),
            mean_episode_reward: stats.iter().map(|s| s.total_reward).sum::<f64>() / stats.len() as f64,
            max_deviation: stats.iter().map(|s| s.final_max_deviation).fold(0.0, f64::max),
            max_deviation_any_step: stats.iter().map(|s| s.max_deviation).fold(0.0, f64::max),
            max_voltage: stats.iter().map(EpisodeStats::max_voltage).fold(f64::NEG_INFINITY, f64::max),
            mean_power_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
            median_power_ratio: crate::env::median_of(ratios),
            constraint_violations: stats.iter().map(|s| s.constraint_violations).sum(),
        }
    }
}

/// `count` scenarios seeded `seed, seed + 1, ...`.
pub fn evaluation_scenarios(model: &NetworkModel, sampler: &ScenarioSampler, seed: u64, count: usize) -> Vec<Scenario> {
    (0..count as u64)
        .map(|i| sampler.sample_seeded(model, seed.wrapping_add(i)))
        .collect()
}

/// Deterministic episodes of `controller` over the given scenarios.
pub fn evaluate<C: Controller + ?Sized>(
    model: &NetworkModel,
    config: &EnvConfig,
    controller: &C,
    scenarios: &[Scenario],
    record_trace: bool,
) -> Result<(EvalSummary, Vec<EpisodeStats>), PpoError> {
    let mut env = Environment::new(model, config.clone())?;
    // Deterministic controllers never draw from it.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stats = scenarios
        .iter()
        .map(|sc| run_scenario(&mut env, controller, sc.clone(), false, None, &mut rng, record_trace))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((EvalSummary::from_episodes(&stats), stats))
}

/// The MPPT baseline over the given scenarios.
pub fn evaluate_mppt(
    model: &NetworkModel,
    config: &EnvConfig,
    scenarios: &[Scenario],
    record_trace: bool,
) -> Result<(EvalSummary, Vec<EpisodeStats>), PpoError> {
    let mut env = Environment::new(model, config.clone())?;
    let stats = scenarios
        .iter()
        .map(|sc| mppt_baseline(&mut env, sc.clone(), record_trace))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((EvalSummary::from_episodes(&stats), stats))
}
