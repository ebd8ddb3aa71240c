//! Episode runner, the MPPT baseline and trace export.

use std::io::{self, Write};

use rand::RngCore;

use super::{AgentAction, AgentObservation, EnvError, Environment, Setpoint, StepResult};
use crate::grid::Scenario;

/// What a controller decided for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    /// Actions handed to the environment (clipped there).
    pub actions: Vec<AgentAction>,
    /// Pre-clip joint action `(a_P, a_Q)` per agent, as used for the log-probability.
    pub raw: Vec<f64>,
    /// Per-agent log-probability of `raw`; empty for deterministic decisions.
    pub log_probs: Vec<f64>,
}

pub trait Controller {
    /// Maps the current observations to actions. `stochastic` selects
    /// exploration; deterministic controllers may ignore it and `rng`.
    fn decide(&self, obs: &[AgentObservation], stochastic: bool, rng: &mut dyn RngCore) -> Decision;
}

/// Always requests zero increments, freezing the initial setpoints.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn decide(&self, obs: &[AgentObservation], _: bool, _: &mut dyn RngCore) -> Decision {
        Decision {
            actions: vec![AgentAction::default(); obs.len()],
            raw: vec![0.0; 2 * obs.len()],
            log_probs: Vec::new(),
        }
    }
}

/// One recorded training step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Flattened observation the decision was made on.
    pub observation: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub reward: f64,
    /// Last step of the episode.
    pub done: bool,
}

pub trait TransitionSink {
    fn record(&mut self, transition: Transition);
}

impl TransitionSink for Vec<Transition> {
    fn record(&mut self, transition: Transition) {
        self.push(transition);
    }
}

/// One row of an episode trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub bus: u32,
    pub v: f64,
    pub p: f64,
    pub q: f64,
    pub p_env: f64,
    pub r_v: f64,
    pub r_p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStats {
    pub steps: usize,
    /// Sum of the system reward over the episode.
    pub total_reward: f64,
    /// Largest `|1 - V|` seen at any controllable bus after any step.
    pub max_deviation: f64,
    /// Largest `|1 - V|` after the final step.
    pub final_max_deviation: f64,
    pub final_voltages: Vec<f64>,
    pub final_setpoints: Vec<Setpoint>,
    pub p_env: Vec<f64>,
    /// Capability violations found during this episode.
    pub constraint_violations: usize,
    /// Per-step, per-bus rows; empty unless requested.
    pub trace: Vec<StepRecord>,
}

impl EpisodeStats {
    pub fn mean_reward(&self) -> f64 {
        self.total_reward / self.steps as f64
    }

    /// Final `P^c / p_env` per agent; 1 where no solar power is available.
    pub fn power_ratios(&self) -> Vec<f64> {
        self.final_setpoints
            .iter()
            .zip(&self.p_env)
            .map(|(sp, &pe)| if pe > 0.0 { sp.p / pe } else { 1.0 })
            .collect()
    }

    pub fn median_power_ratio(&self) -> f64 {
        median_of(self.power_ratios())
    }

    pub fn max_voltage(&self) -> f64 {
        self.final_voltages.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn median_of(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Samples a scenario from the environment's sampler and runs one episode.
/// Actions are sampled and transitions recorded only when `in_training`.
pub fn run_episode<C: Controller + ?Sized>(
    env: &mut Environment<'_>,
    controller: &C,
    in_training: bool,
    sink: Option<&mut dyn TransitionSink>,
    rng: &mut dyn RngCore,
) -> Result<EpisodeStats, EnvError> {
    let scenario = env.sampler().sample(env.model(), rng);
    let sink = if in_training { sink } else { None };
    run_scenario(env, controller, scenario, in_training, sink, rng, false)
}

/// Runs one full episode on a fixed scenario.
pub fn run_scenario<C: Controller + ?Sized>(
    env: &mut Environment<'_>,
    controller: &C,
    scenario: Scenario,
    stochastic: bool,
    mut sink: Option<&mut dyn TransitionSink>,
    rng: &mut dyn RngCore,
    record_trace: bool,
) -> Result<EpisodeStats, EnvError> {
    let mut obs = env.reset(scenario)?;
    drive(env, record_trace, |env| {
        let decision = controller.decide(&obs, stochastic, rng);
        let flat = super::flatten_observations(&obs);
        let result = env.step(&decision.actions)?;
        if let Some(sink) = sink.as_deref_mut() {
            sink.record(Transition {
                observation: flat,
                raw_action: decision.raw,
                log_probs: decision.log_probs,
                reward: result.reward,
                done: result.done,
            });
        }
        obs = result.observations.clone();
        Ok(result)
    })
}

/// Every inverter injects all the solar power it may, with no reactive power.
pub fn mppt_baseline(env: &mut Environment<'_>, scenario: Scenario, record_trace: bool) -> Result<EpisodeStats, EnvError> {
    let requested: Vec<Setpoint> = scenario.p_env.iter().map(|&p| Setpoint { p, q: 0.0 }).collect();
    env.reset(scenario)?;
    drive(env, record_trace, |env| env.step_setpoints(&requested))
}

fn drive(
    env: &mut Environment<'_>,
    record_trace: bool,
    mut step: impl FnMut(&mut Environment<'_>) -> Result<StepResult, EnvError>,
) -> Result<EpisodeStats, EnvError> {
    let violations_before = env.constraint_violations();
    let mut stats = EpisodeStats {
        steps: 0,
        total_reward: 0.0,
        max_deviation: 0.0,
        final_max_deviation: 0.0,
        final_voltages: Vec::new(),
        final_setpoints: Vec::new(),
        p_env: env.scenario().p_env.clone(),
        constraint_violations: 0,
        trace: Vec::new(),
    };
    loop {
        let result = step(env)?;
        stats.steps += 1;
        stats.total_reward += result.reward;
        stats.max_deviation = stats.max_deviation.max(result.diagnostics.max_deviation);
        stats.final_max_deviation = result.diagnostics.max_deviation;
        if record_trace {
            let model = env.model();
            for (i, &k) in model.controllable().iter().enumerate() {
                let sp = env.setpoints()[i];
                stats.trace.push(StepRecord {
                    step: stats.steps,
                    bus: model.buses()[k].id,
                    v: env.voltages()[i],
                    p: sp.p,
                    q: sp.q,
                    p_env: stats.p_env[i],
                    r_v: result.bus_rewards[i].r_v,
                    r_p: result.bus_rewards[i].r_p,
                });
            }
        }
        if result.done {
            break;
        }
    }
    stats.final_voltages = env.voltages().to_vec();
    stats.final_setpoints = env.setpoints().to_vec();
    stats.constraint_violations = env.constraint_violations() - violations_before;
    Ok(stats)
}

/// Writes trace rows as CSV with a header.
pub fn write_trace<W: Write>(records: &[StepRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "step,bus,v_posseq,p_c,q_c,p_env,r_v,r_p")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step, r.bus, r.v, r.p, r.q, r.p_env, r.r_v, r.r_p
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::feeders;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evaluation_leaves_sink_untouched() {
        let model = feeders::two_bus();
        let mut env = Environment::new(&model, EnvConfig::default()).unwrap();
        let mut buf: Vec<Transition> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        run_episode(&mut env, &ZeroController, false, Some(&mut buf), &mut rng).unwrap();
        assert!(buf.is_empty());
        run_episode(&mut env, &ZeroController, true, Some(&mut buf), &mut rng).unwrap();
        assert_eq!(buf.len(), 100);
        assert!(buf[99].done && !buf[98].done);
    }

    #[test]
    fn zero_action_is_a_fixpoint() {
        let model = feeders::thirteen_bus();
        let mut env = Environment::new(&model, EnvConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scenario = env.sampler().sample(&model, &mut rng);
        env.reset(scenario).unwrap();
        let v0 = env.voltages().to_vec();
        let zero = vec![AgentAction::default(); env.num_agents()];
        let first = env.step(&zero).unwrap();
        for _ in 0..5 {
            let next = env.step(&zero).unwrap();
            assert!((next.reward - first.reward).abs() < 1e-9);
        }
        for (a, b) in v0.iter().zip(env.voltages()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn mppt_without_sun_matches_plain_load_flow() {
        let model = feeders::thirteen_bus();
        let mut env = Environment::new(&model, EnvConfig::default()).unwrap();
        let v_no_pv = env.voltages().to_vec();
        let stats = mppt_baseline(&mut env, Scenario::no_pv(&model), false).unwrap();
        for (a, b) in v_no_pv.iter().zip(&stats.final_voltages) {
            assert!((a - b).abs() < 1e-8);
        }
        assert_eq!(stats.power_ratios(), vec![1.0; model.num_agents()]);
    }

    #[test]
    fn mppt_power_term_is_available_power() {
        let model = feeders::thirteen_bus();
        let mut env = Environment::new(&model, EnvConfig::default()).unwrap();
        let scenario = env.sampler().sample_seeded(&model, 8);
        let p_env = scenario.p_env.clone();
        let stats = mppt_baseline(&mut env, scenario, true).unwrap();
        assert_eq!(stats.trace.len(), 100 * model.num_agents());
        for row in &stats.trace {
            let i = model.controllable().iter().position(|&k| model.buses()[k].id == row.bus).unwrap();
            let s = model.inverter(model.controllable()[i]).s_kva;
            assert!((row.r_p - p_env[i] / (0.9 * s)).abs() < 1e-15);
        }
    }

    #[test]
    fn raising_q_does_not_lower_voltage() {
        let model = feeders::two_bus();
        let mut env = Environment::new(&model, EnvConfig::default()).unwrap();
        env.reset(Scenario::with_pv(&model, vec![300.0])).unwrap();
        let before = env.voltages()[0];
        env.step(&[AgentAction::new(0.0, 1.0)]).unwrap();
        assert!(env.voltages()[0] >= before);
    }

    #[test]
    fn horizon_ends_the_episode() {
        let model = feeders::two_bus();
        let cfg = EnvConfig {
            horizon: 3,
            ..Default::default()
        };
        let mut env = Environment::new(&model, cfg).unwrap();
        let a = [AgentAction::default()];
        assert!(!env.step(&a).unwrap().done);
        assert!(!env.step(&a).unwrap().done);
        assert!(env.step(&a).unwrap().done);
        assert!(matches!(env.step(&a), Err(EnvError::EpisodeOver(3))));
    }

    #[test]
    fn trace_has_header_and_rows() {
        let rows = [StepRecord {
            step: 1,
            bus: 4,
            v: 1.01,
            p: 2.0,
            q: -0.5,
            p_env: 3.0,
            r_v: 0.0,
            r_p: 0.5,
        }];
        let mut out = Vec::new();
        write_trace(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "step,bus,v_posseq,p_c,q_c,p_env,r_v,r_p\n1,4,1.01,2,-0.5,3,0,0.5\n");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median_of(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
