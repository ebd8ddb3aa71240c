//! Helpers shared by the integration tests, including an independent power
//! flow oracle: nodal Gauss-Seidel on an admittance matrix assembled here
//! from ohmic line data.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use pvctl::grid::{Equivalent, NetworkModel, Phase, Scenario};
use pvctl::nn::Mlp;
use pvctl::powerflow::Injection;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// One (bus, phase) unknown.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Node {
    bus: usize,
    phase: Phase,
}

pub struct GaussSeidel {
    nodes: Vec<Node>,
    /// Dense nodal admittance, p.u.
    y: Vec<Vec<Complex64>>,
    slack: Vec<bool>,
}

/// Inverse of a small dense complex matrix by Gauss-Jordan elimination with
/// partial pivoting.
pub fn invert(m: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
    let n = m.len();
    let mut a: Vec<Vec<Complex64>> = m.to_vec();
    let mut inv: Vec<Vec<Complex64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Complex64::new(1.0, 0.0) } else { ZERO }).collect())
        .collect();
    for c in 0..n {
        let pivot = (c..n).max_by(|&i, &j| a[i][c].norm().total_cmp(&a[j][c].norm())).unwrap();
        assert!(a[pivot][c].norm() > 0.0, "singular matrix");
        a.swap(c, pivot);
        inv.swap(c, pivot);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for i in 0..n {
            if i != c {
                let f = a[i][c];
                for j in 0..n {
                    let (acj, icj) = (a[c][j], inv[c][j]);
                    a[i][j] -= f * acj;
                    inv[i][j] -= f * icj;
                }
            }
        }
    }
    inv
}

fn nominal(phase: Phase) -> Complex64 {
    let deg: f64 = match phase {
        Phase::A => 0.0,
        Phase::B => -120.0,
        Phase::C => 120.0,
    };
    Complex64::from_polar(1.0, deg.to_radians())
}

impl GaussSeidel {
    pub fn new(model: &NetworkModel) -> Self {
        let mut nodes = Vec::new();
        for (k, bus) in model.buses().iter().enumerate() {
            for phase in bus.phases.iter() {
                nodes.push(Node { bus: k, phase });
            }
        }
        let index = |bus: usize, phase: Phase| nodes.iter().position(|n| n.bus == bus && n.phase == phase).unwrap();
        let z_base = model.base_kv() * model.base_kv() * 1000.0 / model.base_kva();
        let mut y = vec![vec![ZERO; nodes.len()]; nodes.len()];
        for line in model.lines() {
            let phases: Vec<Phase> = line.phases.iter().collect();
            let d = phases.len();
            let z: Vec<Vec<Complex64>> = (0..d)
                .map(|i| (0..d).map(|j| line.z_ohm.get(i, j) / z_base).collect())
                .collect();
            let yl = invert(&z);
            for (i, &pi) in phases.iter().enumerate() {
                for (j, &pj) in phases.iter().enumerate() {
                    let (fi, ti) = (index(line.from, pi), index(line.to, pi));
                    let (fj, tj) = (index(line.from, pj), index(line.to, pj));
                    y[fi][fj] += yl[i][j];
                    y[ti][tj] += yl[i][j];
                    y[fi][tj] -= yl[i][j];
                    y[ti][fj] -= yl[i][j];
                }
            }
        }
        let slack = nodes.iter().map(|n| n.bus == 0).collect();
        GaussSeidel { nodes, y, slack }
    }

    fn specified(&self, inj: &Injection) -> Vec<Complex64> {
        self.nodes.iter().map(|n| inj.get(n.bus, n.phase)).collect()
    }

    /// Iterates from a flat start until no voltage moves by more than `tol`.
    pub fn solve(&self, inj: &Injection, tol: f64) -> Vec<[Complex64; 3]> {
        let s = self.specified(inj);
        let mut v: Vec<Complex64> = self.nodes.iter().map(|n| nominal(n.phase)).collect();
        for _ in 0..1_000_000 {
            let mut change = 0.0f64;
            for i in 0..v.len() {
                if self.slack[i] {
                    continue;
                }
                let coupled: Complex64 = (0..v.len()).filter(|&j| j != i).map(|j| self.y[i][j] * v[j]).sum();
                let new = ((s[i] / v[i]).conj() - coupled) / self.y[i][i];
                change = change.max((new - v[i]).norm());
                v[i] = new;
            }
            if change <= tol {
                return self.scatter(&v);
            }
        }
        panic!("Gauss-Seidel oracle did not converge");
    }

    fn scatter(&self, v: &[Complex64]) -> Vec<[Complex64; 3]> {
        let buses = self.nodes.iter().map(|n| n.bus).max().unwrap() + 1;
        let mut out = vec![[ZERO; 3]; buses];
        for (n, x) in self.nodes.iter().zip(v) {
            out[n.bus][n.phase.index()] = *x;
        }
        out
    }

    /// Largest `|S_specified - V conj(Y V)|` over non-slack nodes.
    pub fn residual(&self, inj: &Injection, voltages: &[[Complex64; 3]]) -> f64 {
        let s = self.specified(inj);
        let v: Vec<Complex64> = self.nodes.iter().map(|n| voltages[n.bus][n.phase.index()]).collect();
        (0..v.len())
            .filter(|&i| !self.slack[i])
            .map(|i| {
                let current: Complex64 = (0..v.len()).map(|j| self.y[i][j] * v[j]).sum();
                (s[i] - v[i] * current.conj()).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Loads of `scenario` plus the given inverter outputs (kW + j kvar, agent order).
pub fn injection_for(model: &NetworkModel, scenario: &Scenario, inverters: &[Complex64]) -> Injection {
    let mut inj = Injection::zeros(model);
    for (k, load) in scenario.loads.iter().enumerate() {
        inj.add_load_kva(model, k, load);
    }
    for (&k, s) in model.controllable().iter().zip(inverters) {
        inj.add_inverter_kva(model, k, *s);
    }
    inj
}

pub fn is_per_phase(model: &NetworkModel) -> bool {
    model.equivalent() == Equivalent::PerPhase
}

/// Central finite differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = x[i];
            x[i] = x0 + h;
            let up = f(&x);
            x[i] = x0 - h;
            let down = f(&x);
            x[i] = x0;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps near-zero entries from
/// dominating through rounding alone.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Network output weighted by `w`, the scalar the gradient checks differentiate.
pub fn weighted_output(net: &Mlp, x: &[f64], w: &[f64]) -> f64 {
    net.forward(x).unwrap().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Random shape (1 to 3 hidden layers of width 1..10), random gains and
/// non-zero biases so their gradients are exercised away from the origin.
pub fn random_net(rng: &mut ChaCha8Rng) -> Mlp {
    let mut sizes = vec![rng.random_range(1..=8)];
    for _ in 0..rng.random_range(0..=3) {
        sizes.push(rng.random_range(1..=10));
    }
    sizes.push(rng.random_range(1..=4));
    let mut net = Mlp::orthogonal(&sizes, rng.random_range(0.5..2.0), rng.random_range(0.01..1.5), rng).unwrap();
    for p in net.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    net
}

/// Worst relative error of the parameter and input gradients of `net` at a
/// random input, and the number of entries checked.
pub fn mlp_gradient_error(net: &Mlp, rng: &mut ChaCha8Rng, h: f64, floor: f64) -> (f64, usize) {
    let x: Vec<f64> = (0..net.input_size()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w: Vec<f64> = (0..net.output_size()).map(|_| rng.random_range(-1.0..1.0)).collect();

    let (_, tape) = net.forward_tape(&x).unwrap();
    let mut grads = vec![0.0; net.num_parameters()];
    let d_input = net.backward(&tape, &w, &mut grads).unwrap();

    let mut probe = net.clone();
    let numeric = numeric_gradient(net.params(), h, |p| {
        probe.params_mut().copy_from_slice(p);
        weighted_output(&probe, &x, &w)
    });
    let numeric_x = numeric_gradient(&x, h, |x| weighted_output(net, x, &w));
    let worst = grads
        .iter()
        .zip(&numeric)
        .chain(d_input.iter().zip(&numeric_x))
        .map(|(a, n)| relative_error(*a, *n, floor))
        .fold(0.0, f64::max);
    (worst, grads.len() + d_input.len())
}
