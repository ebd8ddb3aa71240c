use serde::{Deserialize, Serialize};

use super::control::VOLTAGE_SCALE;

/// Weights of the voltage and solar terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Half-width of the accepted voltage band around 1.0 p.u.
    pub delta: f64,
    /// Weight of the solar term, shared by every bus unless `bus_mu` is set.
    pub mu: f64,
    /// Optional per-agent weights overriding `mu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus_mu: Option<Vec<f64>>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            delta: 0.05,
            mu: 0.1,
            bus_mu: None,
        }
    }
}

impl RewardConfig {
    pub fn mu_for(&self, agent: usize) -> f64 {
        self.bus_mu.as_ref().map_or(self.mu, |m| m[agent])
    }

    pub fn validate(&self, agents: usize) -> Result<(), String> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(format!("mu must be non-negative, got {}", self.mu));
        }
        if let Some(m) = &self.bus_mu {
            if m.len() != agents {
                return Err(format!("{} per-bus mu values for {agents} agents", m.len()));
            }
            if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err("per-bus mu values must be non-negative".into());
            }
        }
        Ok(())
    }
}

/// Reward terms of one bus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BusReward {
    /// Non-positive penalty for leaving the `1 +- delta` band.
    pub r_v: f64,
    /// Solar term `P^c / (0.9 S)`, in `[0, 1]`.
    pub r_p: f64,
}

pub fn voltage_reward(v: f64, delta: f64) -> f64 {
    (delta - (1.0 - v).abs()).min(0.0) / VOLTAGE_SCALE
}

pub fn power_reward(p_kw: f64, s_kva: f64) -> f64 {
    p_kw / (0.9 * s_kva)
}

/// Per-bus terms and the system reward, the mean over agents of
/// `r_v + mu_i r_p`.
pub fn reward(voltages: &[f64], p_kw: &[f64], s_kva: &[f64], config: &RewardConfig) -> (Vec<BusReward>, f64) {
    let n = voltages.len();
    assert!(n > 0 && p_kw.len() == n && s_kva.len() == n);
    let terms: Vec<BusReward> = (0..n)
        .map(|i| BusReward {
            r_v: voltage_reward(voltages[i], config.delta),
            r_p: power_reward(p_kw[i], s_kva[i]),
        })
        .collect();
    let total = terms
        .iter()
        .enumerate()
        .map(|(i, t)| t.r_v + config.mu_for(i) * t.r_p)
        .sum::<f64>()
        / n as f64;
    (terms, total)
}
