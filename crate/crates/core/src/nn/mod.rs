//! Small dense networks with exact reverse-mode gradients and Adam.

mod adam;
mod mlp;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use adam::{AdamConfig, AdamRecord, AdamState};
pub use mlp::{parameter_count, Mlp, NetworkRecord, Tape};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("tape was recorded with different parameters")]
    StaleTape,
}

/// `rows x cols` matrix (row-major) with orthonormal rows when `rows <= cols`,
/// orthonormal columns otherwise, scaled by `gain`.
pub fn init_orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    assert!(rows > 0 && cols > 0, "orthogonal init needs a positive shape");
    // Work on the short side: k vectors of length m.
    let (k, m) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        // Two Gram-Schmidt passes keep the residual at round-off level.
        for _ in 0..2 {
            for u in &basis {
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= d * ui);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (vec_idx, pos) = if rows <= cols { (r, c) } else { (c, r) };
            out[r * cols + c] = gain * basis[vec_idx][pos];
        }
    }
    out
}
