use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetworkModel;

/// Loads and available solar power for one episode; constant over the episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Per-bus, per-phase load in kW + j kvar (same layout as [`super::Bus::load`]).
    pub loads: Vec<Vec<Complex64>>,
    /// Available solar power per controllable bus (kW), in agent order.
    pub p_env: Vec<f64>,
    /// Seed the scenario was drawn from, when it was drawn from one.
    pub seed: Option<u64>,
}

/// Distribution that scenarios are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSampler {
    /// Each bus's base load is scaled by a factor drawn uniformly from this range.
    pub load_scale: (f64, f64),
    /// `p_env` is uniform on `[0, pv_multiple * x]` for net load `x`,
    /// further capped at 0.9 S.
    pub pv_multiple: f64,
}

impl Default for ScenarioSampler {
    fn default() -> Self {
        ScenarioSampler {
            load_scale: (0.5, 1.5),
            pv_multiple: 2.0,
        }
    }
}

impl ScenarioSampler {
    pub fn sample<R: Rng + ?Sized>(&self, model: &NetworkModel, rng: &mut R) -> Scenario {
        let (lo, hi) = self.load_scale;
        let loads: Vec<Vec<Complex64>> = model
            .buses()
            .iter()
            .map(|bus| {
                if bus.load.iter().all(|s| s.norm() == 0.0) {
                    return bus.load.clone();
                }
                let k = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                bus.load.iter().map(|s| s * k).collect()
            })
            .collect();
        let p_env = model
            .controllable()
            .iter()
            .map(|&k| {
                let x: f64 = loads[k].iter().map(|s| s.re).sum();
                let bound = (self.pv_multiple * x).min(model.inverter(k).p_cap());
                if bound > 0.0 {
                    rng.random_range(0.0..=bound)
                } else {
                    0.0
                }
            })
            .collect();
        Scenario {
            loads,
            p_env,
            seed: None,
        }
    }

    pub fn sample_seeded(&self, model: &NetworkModel, seed: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Scenario {
            seed: Some(seed),
            ..self.sample(model, &mut rng)
        }
    }
}

/// Draws one scenario with the default sampler.
pub fn sample_scenario<R: Rng + ?Sized>(model: &NetworkModel, rng: &mut R) -> Scenario {
    ScenarioSampler::default().sample(model, rng)
}

impl Scenario {
    /// Base loads with the given `p_env` per agent.
    pub fn with_pv(model: &NetworkModel, p_env: Vec<f64>) -> Scenario {
        assert_eq!(p_env.len(), model.num_agents());
        Scenario {
            loads: model.buses().iter().map(|b| b.load.clone()).collect(),
            p_env,
            seed: None,
        }
    }

    /// Base loads and no sunshine.
    pub fn no_pv(model: &NetworkModel) -> Scenario {
        Scenario::with_pv(model, vec![0.0; model.num_agents()])
    }

    /// Base loads with every panel at the top of the sampling range,
    /// `min(2x, 0.9 S)`: the deep-penetration operating point.
    pub fn peak_pv(model: &NetworkModel) -> Scenario {
        let p_env = model
            .controllable()
            .iter()
            .map(|&k| (2.0 * model.buses()[k].load_kw()).min(model.inverter(k).p_cap()))
            .collect();
        Scenario::with_pv(model, p_env)
    }

    /// Net real load at each controllable bus, kW.
    pub fn agent_load(&self, model: &NetworkModel) -> Vec<Complex64> {
        model
            .controllable()
            .iter()
            .map(|&k| self.loads[k].iter().sum())
            .collect()
    }
}
