#![allow(dead_code)]

use partime::newton::Trajectory;
use partime::{StepperIncrement, Vector};

/// Row-major dense matrix used only as a reference.
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    pub fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    /// Gaussian elimination with partial pivoting. Returns the solution and
    /// the determinant.
    pub fn solve(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let n = self.n;
        let mut m = self.a.clone();
        let mut x = b.to_vec();
        let mut det = 1.0;
        for col in 0..n {
            let p = (col..n)
                .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
                .unwrap();
            if p != col {
                for k in 0..n {
                    m.swap(p * n + k, col * n + k);
                }
                x.swap(p, col);
                det = -det;
            }
            let piv = m[col * n + col];
            det *= piv;
            for r in col + 1..n {
                let f = m[r * n + col] / piv;
                if f != 0.0 {
                    for k in col..n {
                        m[r * n + k] -= f * m[col * n + k];
                    }
                    x[r] -= f * x[col];
                }
            }
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for k in r + 1..n {
                s -= m[r * n + k] * x[k];
            }
            x[r] = s / m[r * n + r];
        }
        (x, det)
    }
}

/// Jacobian of the stacked residual at `traj`, assembled densely from the
/// per-step Jacobians of the increment.
pub fn assemble_jacobian(traj: &Trajectory, stepper: &StepperIncrement) -> Dense {
    let d = traj.dim();
    let n = traj.n_steps();
    let mut h = Dense::zeros(n * d);
    for k in 1..=n {
        let prev = traj.state(k - 1);
        let next = traj.state(k);
        let row = (k - 1) * d;
        let diag = stepper.jac_next(prev, next, traj.dt);
        for i in 0..d {
            for j in 0..d {
                let eye = if i == j { 1.0 } else { 0.0 };
                let dn = diag.as_ref().map_or(0.0, |m| m[(i, j)]);
                *h.at(row + i, row + j) = eye - dn;
            }
        }
        if k >= 2 {
            let sub = stepper.jac_prev(prev, next, traj.dt);
            let col = (k - 2) * d;
            for i in 0..d {
                for j in 0..d {
                    let eye = if i == j { 1.0 } else { 0.0 };
                    *h.at(row + i, col + j) = -(eye + sub[(i, j)]);
                }
            }
        }
    }
    h
}

/// Stacked residual computed directly from the stepping equations.
pub fn dense_residual(traj: &Trajectory, stepper: &StepperIncrement) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..=traj.n_steps() {
        let prev = traj.state(k - 1);
        let next = traj.state(k);
        let g = stepper.eval(prev, next, traj.dt);
        for i in 0..traj.dim() {
            out.push(next[i] - prev[i] - g[i]);
        }
    }
    out
}

/// `-H^{-1} h` by dense elimination.
pub fn dense_newton_step(traj: &Trajectory, stepper: &StepperIncrement) -> Vec<f64> {
    let h = dense_residual(traj, stepper);
    let (u, _) = assemble_jacobian(traj, stepper).solve(&h);
    u.into_iter().map(|v| -v).collect()
}

pub fn flatten(blocks: &[Vector]) -> Vec<f64> {
    blocks.iter().flat_map(|b| b.iter().copied()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Deterministic trajectory with states spread around `centre`.
pub fn perturbed(centre: &Vector, n: usize, dt: f64, amp: f64, seed: u64) -> Trajectory {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let states = (0..n)
        .map(|_| centre.iter().map(|c| c + amp * rng.gen_range(-1.0..1.0)).collect())
        .collect();
    Trajectory::new(centre.clone(), states, 0.0, dt).unwrap()
}
