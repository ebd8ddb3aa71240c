//! Radial power flow by backward/forward sweep.
//!
//! Each control step is treated as an independent algebraic equilibrium:
//! given per-phase complex injections at every non-substation bus, find node
//! voltages such that `S_k = V_k * conj((Y V)_k)` for every phase node, with
//! the substation held at the nominal 1.0 p.u. phasors.

use std::io::{self, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{NetworkModel, Phase, PhaseSet};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One complex value per phase, indexed by [`Phase::index`]; absent phases hold zero.
pub type PhaseVector = [Complex64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("power flow diverged after {iterations} iterations (residual {residual:e} p.u.)")]
    Diverged { iterations: usize, residual: f64 },
    #[error("injection vector covers {got} buses, feeder has {expected}")]
    Shape { expected: usize, got: usize },
}

/// Net complex power injected at each bus and phase, p.u., generation positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    per_bus: Vec<PhaseVector>,
}

impl Injection {
    pub fn zeros(model: &NetworkModel) -> Self {
        Injection {
            per_bus: vec![[ZERO; 3]; model.buses().len()],
        }
    }

    pub fn get(&self, bus: usize, phase: Phase) -> Complex64 {
        self.per_bus[bus][phase.index()]
    }

    pub fn set(&mut self, bus: usize, phase: Phase, s_pu: Complex64) {
        self.per_bus[bus][phase.index()] = s_pu;
    }

    pub fn bus(&self, bus: usize) -> &PhaseVector {
        &self.per_bus[bus]
    }

    /// Subtract a per-phase load given in kW + j kvar (ordered as the bus's phases).
    pub fn add_load_kva(&mut self, model: &NetworkModel, bus: usize, load: &[Complex64]) {
        let base = model.phase_base_kva();
        for (phase, s) in model.buses()[bus].phases.iter().zip(load) {
            self.per_bus[bus][phase.index()] -= s / base;
        }
    }

    /// Add an inverter output in kW + j kvar, split evenly across the bus's phases.
    pub fn add_inverter_kva(&mut self, model: &NetworkModel, bus: usize, s: Complex64) {
        let phases = model.buses()[bus].phases;
        let share = s / (phases.len() as f64 * model.phase_base_kva());
        for phase in phases.iter() {
            self.per_bus[bus][phase.index()] += share;
        }
    }

    /// Sum over every bus and phase, p.u.
    pub fn total(&self) -> Complex64 {
        self.per_bus.iter().flatten().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Maximum per-phase complex power mismatch accepted, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_iterations: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VoltageSolution {
    voltages: Vec<PhaseVector>,
    pub iterations: usize,
    /// Max per-phase power mismatch at the returned voltages, p.u.
    pub residual: f64,
}

impl VoltageSolution {
    /// All buses at the nominal phasors of their phases.
    pub fn flat(model: &NetworkModel) -> Self {
        VoltageSolution {
            voltages: model.buses().iter().map(|b| nominal(b.phases)).collect(),
            iterations: 0,
            residual: f64::NAN,
        }
    }

    pub fn voltage(&self, bus: usize, phase: Phase) -> Complex64 {
        self.voltages[bus][phase.index()]
    }

    pub fn bus(&self, bus: usize) -> &PhaseVector {
        &self.voltages[bus]
    }

    pub fn voltages(&self) -> &[PhaseVector] {
        &self.voltages
    }

    /// Delimiter-separated table `bus,phase,v_mag,v_angle_deg`.
    pub fn write_table<W: Write>(&self, model: &NetworkModel, mut out: W) -> io::Result<()> {
        writeln!(out, "bus,phase,v_mag,v_angle_deg")?;
        for (k, bus) in model.buses().iter().enumerate() {
            for phase in bus.phases.iter() {
                let v = self.voltage(k, phase);
                writeln!(out, "{},{:?},{},{}", bus.id, phase, v.norm(), v.arg().to_degrees())?;
            }
        }
        Ok(())
    }
}

fn nominal(phases: PhaseSet) -> PhaseVector {
    let mut v = [ZERO; 3];
    for p in phases.iter() {
        v[p.index()] = p.nominal();
    }
    v
}

/// Solves with default options.
pub fn solve(
    model: &NetworkModel,
    injections: &Injection,
    initial_guess: Option<&VoltageSolution>,
) -> Result<VoltageSolution, PowerFlowError> {
    solve_with(model, injections, initial_guess, &SolverOptions::default())
}

pub fn solve_with(
    model: &NetworkModel,
    injections: &Injection,
    initial_guess: Option<&VoltageSolution>,
    options: &SolverOptions,
) -> Result<VoltageSolution, PowerFlowError> {
    let n = model.buses().len();
    if injections.per_bus.len() != n {
        return Err(PowerFlowError::Shape {
            expected: n,
            got: injections.per_bus.len(),
        });
    }
    let mut v: Vec<PhaseVector> = match initial_guess {
        Some(g) if g.voltages.len() == n => g.voltages.clone(),
        _ => VoltageSolution::flat(model).voltages,
    };
    // The slack is never part of the guess.
    v[0] = nominal(model.buses()[0].phases);

    let order = model.sweep_order();
    let mut branch = vec![[ZERO; 3]; n];
    let mut iteration = 0;
    loop {
        let residual = max_mismatch(model, injections, &v);
        if residual <= options.tolerance {
            return Ok(VoltageSolution {
                voltages: v,
                iterations: iteration,
                residual,
            });
        }
        if iteration >= options.max_iterations || !residual.is_finite() {
            return Err(PowerFlowError::Diverged {
                iterations: iteration,
                residual,
            });
        }
        iteration += 1;

        // Backward sweep: current drawn through each bus's feeding line.
        for j in branch.iter_mut() {
            *j = [ZERO; 3];
        }
        for &k in order.iter().rev() {
            let Some(li) = model.parent_line(k) else { continue };
            for p in model.buses()[k].phases.iter() {
                let i = p.index();
                branch[k][i] -= (injections.per_bus[k][i] / v[k][i]).conj();
            }
            let parent = model.lines()[li].from;
            let (into_parent, own) = split_two(&mut branch, parent, k);
            for p in model.lines()[li].phases.iter() {
                into_parent[p.index()] += own[p.index()];
            }
        }
        // Forward sweep: drop across each line from the substation outward.
        for &k in order.iter().skip(1) {
            let line = &model.lines()[model.parent_line(k).unwrap()];
            let j = gather(&branch[k], line.phases);
            let drop = line.z_pu.mul_vec(&j);
            for (pos, p) in line.phases.iter().enumerate() {
                v[k][p.index()] = v[line.from][p.index()] - drop[pos];
            }
        }
    }
}

fn split_two<T>(xs: &mut [T], a: usize, b: usize) -> (&mut T, &T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = xs.split_at_mut(b);
        (&mut lo[a], &hi[0])
    } else {
        let (lo, hi) = xs.split_at_mut(a);
        (&mut hi[0], &lo[b])
    }
}

fn gather(x: &PhaseVector, phases: PhaseSet) -> [Complex64; 3] {
    let mut out = [ZERO; 3];
    for (pos, p) in phases.iter().enumerate() {
        out[pos] = x[p.index()];
    }
    out
}

/// Current through each line, from its upstream end, indexed by phase.
pub fn line_currents(model: &NetworkModel, voltages: &[PhaseVector]) -> Vec<PhaseVector> {
    model
        .lines()
        .iter()
        .map(|line| {
            let mut dv = [ZERO; 3];
            for (pos, p) in line.phases.iter().enumerate() {
                dv[pos] = voltages[line.from][p.index()] - voltages[line.to][p.index()];
            }
            let i = line.y_pu.mul_vec(&dv);
            let mut out = [ZERO; 3];
            for (pos, p) in line.phases.iter().enumerate() {
                out[p.index()] = i[pos];
            }
            out
        })
        .collect()
}

/// Complex power leaving each node into the network, `V * conj(Y V)`.
pub fn computed_injections(model: &NetworkModel, voltages: &[PhaseVector]) -> Vec<PhaseVector> {
    let currents = line_currents(model, voltages);
    let mut net = vec![[ZERO; 3]; model.buses().len()];
    for (line, i) in model.lines().iter().zip(&currents) {
        for p in line.phases.iter() {
            net[line.from][p.index()] += i[p.index()];
            net[line.to][p.index()] -= i[p.index()];
        }
    }
    net.iter()
        .zip(voltages)
        .map(|(i, v)| std::array::from_fn(|p| v[p] * i[p].conj()))
        .collect()
}

/// Largest `|S_specified - V conj(Y V)|` over non-substation phase nodes.
pub fn max_mismatch(model: &NetworkModel, injections: &Injection, voltages: &[PhaseVector]) -> f64 {
    let computed = computed_injections(model, voltages);
    let mut worst = 0.0f64;
    for (k, bus) in model.buses().iter().enumerate().skip(1) {
        for p in bus.phases.iter() {
            let i = p.index();
            let m = (injections.per_bus[k][i] - computed[k][i]).norm();
            if m.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(m);
        }
    }
    worst
}

/// Magnitude of the positive-sequence voltage at a bus. Buses with fewer
/// than three phases report the mean of their phase magnitudes.
pub fn positive_sequence_magnitude(model: &NetworkModel, solution: &VoltageSolution, bus: usize) -> f64 {
    sequence_magnitude(model.buses()[bus].phases, solution.bus(bus))
}

pub fn sequence_magnitude(phases: PhaseSet, v: &PhaseVector) -> f64 {
    if phases == PhaseSet::ABC {
        let a = Complex64::from_polar(1.0, 120f64.to_radians());
        ((v[0] + a * v[1] + a * a * v[2]) / 3.0).norm()
    } else {
        phases.iter().map(|p| v[p.index()].norm()).sum::<f64>() / phases.len() as f64
    }
}

/// Feeder-wide energy balance, p.u.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerBalance {
    /// Total series loss over all lines.
    pub loss: Complex64,
    /// Complex power delivered into the feeder at the substation.
    pub substation_import: Complex64,
}

pub fn total_power_balance(model: &NetworkModel, solution: &VoltageSolution) -> PowerBalance {
    let v = &solution.voltages;
    let currents = line_currents(model, v);
    let mut loss = ZERO;
    let mut import = ZERO;
    for (line, i) in model.lines().iter().zip(&currents) {
        for p in line.phases.iter() {
            let k = p.index();
            loss += (v[line.from][k] - v[line.to][k]) * i[k].conj();
            if line.from == 0 {
                import += v[0][k] * i[k].conj();
            }
        }
    }
    PowerBalance {
        loss,
        substation_import: import,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeders;

    #[test]
    fn zero_injection_gives_nominal_voltages() {
        let model = feeders::thirteen_bus();
        let sol = solve(&model, &Injection::zeros(&model), None).unwrap();
        for (k, bus) in model.buses().iter().enumerate() {
            for p in bus.phases.iter() {
                assert_eq!(sol.voltage(k, p), p.nominal());
            }
        }
        let bal = total_power_balance(&model, &sol);
        assert_eq!(bal.loss, ZERO);
        assert_eq!(bal.substation_import, ZERO);
    }

    #[test]
    fn positive_sequence_cases() {
        let v = |m: f64, deg: f64| Complex64::from_polar(m, deg.to_radians());
        let balanced = [v(1.0, 0.0), v(1.0, -120.0), v(1.0, 120.0)];
        assert!((sequence_magnitude(PhaseSet::ABC, &balanced) - 1.0).abs() < 1e-15);

        let single = [v(0.97, -1.0), ZERO, ZERO];
        assert!((sequence_magnitude(PhaseSet::A, &single) - 0.97).abs() < 1e-15);

        // (1 + 0.9 a a^2 ... ) evaluated by hand: Vb rotated by +120 lands on 0 deg,
        // Vc rotated by +240 lands on 360 deg, so V1 = (1 + 0.9 + 1.1) / 3 = 1.0.
        let unbalanced = [v(1.0, 0.0), v(0.9, -120.0), v(1.1, 120.0)];
        assert!((sequence_magnitude(PhaseSet::ABC, &unbalanced) - 1.0).abs() < 1e-14);

        // Angle skew does show up: Vb at -110 deg.
        let skewed = [v(1.0, 0.0), v(1.0, -110.0), v(1.0, 120.0)];
        let expected = (Complex64::new(2.0, 0.0) + v(1.0, 10.0)).norm() / 3.0;
        assert!((sequence_magnitude(PhaseSet::ABC, &skewed) - expected).abs() < 1e-14);

        let two: PhaseSet = "AC".parse().unwrap();
        let vv = [v(0.96, 0.0), ZERO, v(1.0, 120.0)];
        assert!((sequence_magnitude(two, &vv) - 0.98).abs() < 1e-15);
    }

    #[test]
    fn divergence_is_reported() {
        let model = feeders::two_bus();
        let mut inj = Injection::zeros(&model);
        // Far beyond the maximum transferable power of the line.
        inj.set(1, Phase::A, Complex64::new(-60.0, -30.0));
        match solve(&model, &inj, None) {
            Err(PowerFlowError::Diverged { iterations, .. }) => assert!(iterations <= 100),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn debug_table_lists_every_phase() {
        let model = feeders::thirteen_bus();
        let sol = solve(&model, &Injection::zeros(&model), None).unwrap();
        let mut buf = Vec::new();
        sol.write_table(&model, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let phases: usize = model.buses().iter().map(|b| b.phases.len()).sum();
        assert_eq!(text.lines().count(), phases + 1);
        assert!(text.starts_with("bus,phase,v_mag,v_angle_deg\n"));
    }
}
