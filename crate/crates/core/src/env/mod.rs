//! Quasi-steady-state control environment.
//!
//! Each step applies the agents' scaled increments to the inverter
//! setpoints, solves one power flow with the new injections and scores the
//! resulting voltages. Loads and available solar power are held fixed for the
//! whole episode.

mod control;
mod episode;
mod reward;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{NetworkModel, Scenario, ScenarioSampler};
use crate::powerflow::{self, Injection, PowerFlowError, VoltageSolution};

pub use control::{
    apply_action, flatten_observations, is_feasible, project_setpoint, AgentAction, AgentObservation,
    IncrementLimits, Setpoint, VOLTAGE_SCALE,
};
pub use episode::{
    median_of, mppt_baseline, run_episode, run_scenario, write_trace, Controller, Decision, EpisodeStats, StepRecord,
    Transition, TransitionSink, ZeroController,
};
pub use reward::{power_reward, reward, voltage_reward, BusReward, RewardConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    /// The operating point has no power-flow solution; the episode is aborted.
    #[error("episode aborted at step {step}")]
    Diverged {
        step: usize,
        #[source]
        source: PowerFlowError,
    },
    #[error("episode is over after {0} steps; reset first")]
    EpisodeOver(usize),
    #[error("expected {expected} agent actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("invalid environment config: {0}")]
    Config(String),
}

/// Where inverters start at the beginning of an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSetpoint {
    /// All available real power, no reactive power.
    #[default]
    Mppt,
    /// Inverters idle.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub reward: RewardConfig,
    /// Steps per episode.
    pub horizon: usize,
    /// Wall-clock length of one step; informational only.
    pub step_seconds: f64,
    pub increments: IncrementLimits,
    pub initial: InitialSetpoint,
    pub sampler: ScenarioSampler,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            reward: RewardConfig::default(),
            horizon: 100,
            step_seconds: 0.01,
            increments: IncrementLimits::default(),
            initial: InitialSetpoint::Mppt,
            sampler: ScenarioSampler::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, agents: usize) -> Result<(), String> {
        self.reward.validate(agents)?;
        if self.horizon == 0 {
            return Err("horizon must be at least 1".into());
        }
        let IncrementLimits { p_ratio, q_ratio } = self.increments;
        if !(p_ratio > 0.0 && q_ratio > 0.0) {
            return Err("increment limits must be positive".into());
        }
        let (lo, hi) = self.sampler.load_scale;
        if !(lo >= 0.0 && hi >= lo && self.sampler.pv_multiple >= 0.0) {
            return Err("scenario sampler ranges are invalid".into());
        }
        Ok(())
    }
}

/// Diagnostics reported with every step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// Largest `|1 - V|` over controllable buses.
    pub max_deviation: f64,
    /// `sum P^c / sum p_env`, or 1 when no solar power is available.
    pub power_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observations: Vec<AgentObservation>,
    pub bus_rewards: Vec<BusReward>,
    pub reward: f64,
    pub done: bool,
    pub diagnostics: StepDiagnostics,
}

/// Stateful episode simulator over a borrowed feeder.
#[derive(Clone, Debug)]
pub struct Environment<'a> {
    model: &'a NetworkModel,
    config: EnvConfig,
    scenario: Scenario,
    load_injection: Injection,
    setpoints: Vec<Setpoint>,
    solution: VoltageSolution,
    voltages: Vec<f64>,
    step: usize,
    pending_load_delta: Vec<Complex64>,
    violations: usize,
}

impl<'a> Environment<'a> {
    /// Builds the environment with base loads and no solar power.
    pub fn new(model: &'a NetworkModel, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate(model.num_agents()).map_err(EnvError::Config)?;
        let n = model.num_agents();
        let mut env = Environment {
            model,
            config,
            scenario: Scenario::no_pv(model),
            load_injection: Injection::zeros(model),
            setpoints: vec![Setpoint::default(); n],
            solution: VoltageSolution::flat(model),
            voltages: vec![1.0; n],
            step: 0,
            pending_load_delta: vec![Complex64::new(0.0, 0.0); n],
            violations: 0,
        };
        env.reset(Scenario::no_pv(model))?;
        Ok(env)
    }

    pub fn model(&self) -> &'a NetworkModel {
        self.model
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn setpoints(&self) -> &[Setpoint] {
        &self.setpoints
    }

    /// Positive-sequence voltage magnitude at each controllable bus.
    pub fn voltages(&self) -> &[f64] {
        &self.voltages
    }

    pub fn solution(&self) -> &VoltageSolution {
        &self.solution
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Setpoints found outside the capability region since construction.
    pub fn constraint_violations(&self) -> usize {
        self.violations
    }

    pub fn num_agents(&self) -> usize {
        self.model.num_agents()
    }

    pub fn sampler(&self) -> ScenarioSampler {
        self.config.sampler
    }

    /// Starts an episode: installs the scenario, puts inverters at their
    /// initial setpoints and solves the starting state.
    pub fn reset(&mut self, scenario: Scenario) -> Result<Vec<AgentObservation>, EnvError> {
        self.install_loads(scenario);
        self.setpoints = self
            .model
            .controllable()
            .iter()
            .zip(&self.scenario.p_env)
            .map(|(&k, &p_env)| {
                let inv = self.model.inverter(k);
                match self.config.initial {
                    InitialSetpoint::Mppt => project_setpoint(p_env, 0.0, inv, p_env),
                    InitialSetpoint::Zero => Setpoint::default(),
                }
            })
            .collect();
        self.pending_load_delta.fill(Complex64::new(0.0, 0.0));
        self.step = 0;
        self.solve_current(None).map_err(|source| EnvError::Diverged { step: 0, source })?;
        Ok(self.observations())
    }

    /// Swaps loads and solar availability but keeps the inverter setpoints;
    /// the change in each controllable bus's load feeds the next step's
    /// increments.
    pub fn switch_scenario(&mut self, scenario: Scenario) {
        let before = self.scenario.agent_load(self.model);
        let after = scenario.agent_load(self.model);
        for ((d, b), a) in self.pending_load_delta.iter_mut().zip(&before).zip(&after) {
            *d += a - b;
        }
        self.install_loads(scenario);
        self.step = 0;
    }

    fn install_loads(&mut self, scenario: Scenario) {
        assert_eq!(scenario.p_env.len(), self.model.num_agents(), "scenario agent count");
        assert_eq!(scenario.loads.len(), self.model.buses().len(), "scenario bus count");
        let mut inj = Injection::zeros(self.model);
        for (k, load) in scenario.loads.iter().enumerate().skip(1) {
            inj.add_load_kva(self.model, k, load);
        }
        self.load_injection = inj;
        self.scenario = scenario;
    }

    pub fn observations(&self) -> Vec<AgentObservation> {
        self.model
            .controllable()
            .iter()
            .zip(self.setpoints.iter().zip(&self.voltages))
            .map(|(&k, (sp, &v))| AgentObservation::new(sp.p, self.model.inverter(k), v))
            .collect()
    }

    /// Advances one control step with the given scaled increments.
    pub fn step(&mut self, actions: &[AgentAction]) -> Result<StepResult, EnvError> {
        self.check_step(actions.len())?;
        let limits = self.config.increments;
        let next: Vec<Setpoint> = (0..self.num_agents())
            .map(|i| {
                let inv = self.model.inverter(self.model.controllable()[i]);
                apply_action(
                    self.setpoints[i],
                    actions[i],
                    self.pending_load_delta[i],
                    inv,
                    self.scenario.p_env[i],
                    limits,
                )
            })
            .collect();
        self.pending_load_delta.fill(Complex64::new(0.0, 0.0));
        self.transition(next)
    }

    /// Advances one step with explicit setpoints (projected first); used by
    /// fixed-rule controllers.
    pub fn step_setpoints(&mut self, requested: &[Setpoint]) -> Result<StepResult, EnvError> {
        self.check_step(requested.len())?;
        let next = (0..self.num_agents())
            .map(|i| {
                let inv = self.model.inverter(self.model.controllable()[i]);
                project_setpoint(requested[i].p, requested[i].q, inv, self.scenario.p_env[i])
            })
            .collect();
        self.transition(next)
    }

    fn check_step(&self, got: usize) -> Result<(), EnvError> {
        if self.step >= self.config.horizon {
            return Err(EnvError::EpisodeOver(self.step));
        }
        if got != self.num_agents() {
            return Err(EnvError::ActionCount {
                expected: self.num_agents(),
                got,
            });
        }
        Ok(())
    }

    fn transition(&mut self, next: Vec<Setpoint>) -> Result<StepResult, EnvError> {
        for (i, sp) in next.iter().enumerate() {
            let inv = self.model.inverter(self.model.controllable()[i]);
            if !is_feasible(*sp, inv, self.scenario.p_env[i]) {
                self.violations += 1;
            }
        }
        self.setpoints = next;
        let guess = self.solution.clone();
        self.solve_current(Some(&guess)).map_err(|source| EnvError::Diverged {
            step: self.step + 1,
            source,
        })?;
        self.step += 1;

        let s_kva: Vec<f64> = self
            .model
            .controllable()
            .iter()
            .map(|&k| self.model.inverter(k).s_kva)
            .collect();
        let p: Vec<f64> = self.setpoints.iter().map(|s| s.p).collect();
        let (bus_rewards, reward) = reward::reward(&self.voltages, &p, &s_kva, &self.config.reward);
        Ok(StepResult {
            observations: self.observations(),
            bus_rewards,
            reward,
            done: self.step == self.config.horizon,
            diagnostics: self.diagnostics(),
        })
    }

    pub fn diagnostics(&self) -> StepDiagnostics {
        let max_deviation = self.voltages.iter().fold(0.0f64, |m, v| m.max((1.0 - v).abs()));
        let p_total: f64 = self.setpoints.iter().map(|s| s.p).sum();
        let env_total: f64 = self.scenario.p_env.iter().sum();
        StepDiagnostics {
            max_deviation,
            power_ratio: if env_total > 0.0 { p_total / env_total } else { 1.0 },
        }
    }

    fn solve_current(&mut self, guess: Option<&VoltageSolution>) -> Result<(), PowerFlowError> {
        let mut inj = self.load_injection.clone();
        for (&k, sp) in self.model.controllable().iter().zip(&self.setpoints) {
            inj.add_inverter_kva(self.model, k, sp.as_complex());
        }
        let solution = powerflow::solve(self.model, &inj, guess)?;
        self.voltages = self
            .model
            .controllable()
            .iter()
            .map(|&k| powerflow::positive_sequence_magnitude(self.model, &solution, k))
            .collect();
        self.solution = solution;
        Ok(())
    }
}
