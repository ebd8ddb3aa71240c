use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Dense complex matrix of dimension 1..=3, one row/column per phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseMatrix {
    dim: usize,
    m: [[Complex64; 3]; 3],
}

impl PhaseMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=3).contains(&dim), "phase matrix dimension {dim}");
        PhaseMatrix { dim, m: [[ZERO; 3]; 3] }
    }

    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Self {
        let mut out = PhaseMatrix::zeros(re.len());
        for i in 0..out.dim {
            for j in 0..out.dim {
                out.m[i][j] = Complex64::new(re[i][j], im[i][j]);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.m[i][j] = v;
    }

    pub fn scale(&self, k: f64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= k;
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| (self.m[i][j] - self.m[j][i]).norm() <= tol))
    }

    /// `self * x` over the first `dim` entries of `x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> [Complex64; 3] {
        let mut y = [ZERO; 3];
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            *yi = (0..self.dim).map(|j| self.m[i][j] * x[j]).sum();
        }
        y
    }

    /// Gauss-Jordan inverse with partial pivoting; `None` when singular.
    pub fn inverse(&self) -> Option<PhaseMatrix> {
        let n = self.dim;
        let mut a = self.m;
        let mut inv = PhaseMatrix::zeros(n);
        for i in 0..n {
            inv.m[i][i] = Complex64::new(1.0, 0.0);
        }
        let scale = a
            .iter()
            .take(n)
            .flat_map(|r| r.iter().take(n))
            .fold(0.0f64, |acc, v| acc.max(v.norm()));
        if scale == 0.0 {
            return None;
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))
                .unwrap();
            if a[pivot][col].norm() <= scale * 1e-14 {
                return None;
            }
            a.swap(col, pivot);
            inv.m.swap(col, pivot);
            let d = a[col][col];
            for j in 0..n {
                a[col][j] /= d;
                inv.m[col][j] /= d;
            }
            for r in 0..n {
                if r != col {
                    let f = a[r][col];
                    if f != ZERO {
                        for j in 0..n {
                            a[r][j] -= f * a[col][j];
                            inv.m[r][j] -= f * inv.m[col][j];
                        }
                    }
                }
            }
        }
        Some(inv)
    }
}
