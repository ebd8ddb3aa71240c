//! Local measurement scaling, the incremental setpoint controller and the
//! inverter capability projection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::InverterSpec;

/// Voltage scale of the observation and reward terms, p.u.
pub const VOLTAGE_SCALE: f64 = 0.05;

/// Scaled local state of one controllable bus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentObservation {
    /// `P^c / (0.9 S) - 1`; zero when drawing the maximum allowed power.
    pub s_p: f64,
    /// `(1 - V) / 0.05`; zero at nominal voltage.
    pub s_v: f64,
}

impl AgentObservation {
    pub fn new(p_kw: f64, inverter: InverterSpec, v_posseq: f64) -> Self {
        AgentObservation {
            s_p: p_kw / inverter.p_cap() - 1.0,
            s_v: (1.0 - v_posseq) / VOLTAGE_SCALE,
        }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.s_p, self.s_v]
    }
}

/// Flattens observations into `(s_p, s_v)` pairs in agent order.
pub fn flatten_observations(obs: &[AgentObservation]) -> Vec<f64> {
    obs.iter().flat_map(|o| o.to_array()).collect()
}

/// Scaled setpoint increments for one bus, each in `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AgentAction {
    pub a_p: f64,
    pub a_q: f64,
}

impl AgentAction {
    pub fn new(a_p: f64, a_q: f64) -> Self {
        AgentAction { a_p, a_q }
    }

    /// Both components clipped to `[-1, 1]`; NaN maps to 0.
    pub fn clipped(self) -> Self {
        let clip = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
        AgentAction {
            a_p: clip(self.a_p),
            a_q: clip(self.a_q),
        }
    }
}

/// Inverter real/reactive output, kW and kvar.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Setpoint {
    pub p: f64,
    pub q: f64,
}

impl Setpoint {
    pub fn as_complex(self) -> Complex64 {
        Complex64::new(self.p, self.q)
    }
}

/// Step bounds of the incremental controller as fractions of S.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncrementLimits {
    pub p_ratio: f64,
    pub q_ratio: f64,
}

impl Default for IncrementLimits {
    fn default() -> Self {
        // One tenth of the largest possible jump in each setpoint.
        IncrementLimits {
            p_ratio: 0.09,
            q_ratio: 0.2,
        }
    }
}

/// Clamp a requested setpoint into the inverter's capability: real power
/// first into `[0, min(p_env, 0.9 S)]`, then reactive power into what is
/// left of the apparent-power circle.
pub fn project_setpoint(p_req: f64, q_req: f64, inverter: InverterSpec, p_env: f64) -> Setpoint {
    let s = inverter.s_kva;
    let p_hi = p_env.min(inverter.p_cap()).max(0.0);
    let p = if p_req.is_nan() { 0.0 } else { p_req.clamp(0.0, p_hi) };
    let q_max = circle_headroom(s, p);
    let q = if q_req.is_nan() { 0.0 } else { q_req.clamp(-q_max, q_max) };
    Setpoint { p, q }
}

/// Largest `q >= 0` with `p^2 + q^2 <= s^2` holding in floating point.
fn circle_headroom(s: f64, p: f64) -> f64 {
    let mut q = (s * s - p * p).max(0.0).sqrt();
    while q > 0.0 && p * p + q * q > s * s {
        q = q.next_down();
    }
    q
}

/// Whether a setpoint satisfies the capability constraints exactly.
pub fn is_feasible(sp: Setpoint, inverter: InverterSpec, p_env: f64) -> bool {
    let s = inverter.s_kva;
    sp.p >= 0.0 && sp.p <= p_env.min(inverter.p_cap()) && sp.p * sp.p + sp.q * sp.q <= s * s
}

/// Integral controller: add `limit * action + load change` to the current
/// setpoint, then project.
pub fn apply_action(
    current: Setpoint,
    action: AgentAction,
    load_delta: Complex64,
    inverter: InverterSpec,
    p_env: f64,
    limits: IncrementLimits,
) -> Setpoint {
    let a = action.clipped();
    let dp = limits.p_ratio * inverter.s_kva * a.a_p + load_delta.re;
    let dq = limits.q_ratio * inverter.s_kva * a.a_q + load_delta.im;
    project_setpoint(current.p + dp, current.q + dq, inverter, p_env)
}
