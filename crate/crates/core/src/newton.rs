//! Parallel-in-time Newton solvers.
//!
//! All `N` one-step equations `x_k - x_{k-1} - g(x_{k-1}, x_k, dt) = 0` are
//! stacked into one system `h(xi) = 0` over `xi = [x_1 .. x_N]`. Its Jacobian
//! is block lower bidiagonal, so each Newton step `u = -H^{-1} h` is the
//! affine recursion
//!
//! ```text
//! explicit: u_k = (I + G_{k-1}) u_{k-1} - h_k
//! implicit: u_k = A_k^{-1} (I + G_{k-1}) u_{k-1} - A_k^{-1} h_k,  A_k = I - dg_{k-1}/dx_k
//! ```
//!
//! with `G_{k-1} = dg_{k-1}/dx_{k-1}` and `u_0 = 0`, evaluated with a parallel
//! scan over affine elements. Jacobian evaluation, block factorizations and
//! residuals are mapped over the current rayon pool.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{blocks_inf_norm, Lu, Mat, Vector};
use crate::problems::{steps_for, OdeProblem};
use crate::scan::{extract_states, scan_parallel_in_place, AffineElement};
use crate::steppers::{Linearization, StepperIncrement, StepperKind};

/// Discrete trajectory `x_0, x_1 .. x_N` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x0: Vector,
    /// `x_1 .. x_N`
    pub states: Vec<Vector>,
    pub t0: f64,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(x0: Vector, states: Vec<Vector>, t0: f64, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) {
            return Err(Error::InvalidConfig(format!("negative step size {dt}")));
        }
        if let Some(bad) = states.iter().find(|s| s.dim() != x0.dim()) {
            return Err(Error::DimensionMismatch {
                op: "Trajectory::new",
                expected: x0.dim(),
                found: bad.dim(),
            });
        }
        Ok(Self { x0, states, t0, dt })
    }

    pub fn n_steps(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }

    /// `x_k` for `k = 0..=N`.
    pub fn state(&self, k: usize) -> &Vector {
        if k == 0 {
            &self.x0
        } else {
            &self.states[k - 1]
        }
    }

    pub fn last(&self) -> &Vector {
        self.states.last().unwrap_or(&self.x0)
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// All states including `x_0`.
    pub fn iter_all(&self) -> impl Iterator<Item = &Vector> {
        std::iter::once(&self.x0).chain(self.states.iter())
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(Vector::is_finite)
    }

    /// Largest entry-wise difference over `x_1 .. x_N`.
    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        assert_eq!(self.n_steps(), other.n_steps(), "trajectory lengths differ");
        self.states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.sub(b).inf_norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Upper bound on Newton updates.
    pub max_iters: usize,
    /// Stop once the residual infinity norm drops to this; 0 runs all
    /// `max_iters` updates.
    pub residual_tol: f64,
    pub record_residuals: bool,
}

impl NewtonConfig {
    pub fn fixed(iters: usize) -> Self {
        Self {
            max_iters: iters,
            residual_tol: 0.0,
            record_residuals: true,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.residual_tol = tol;
        self
    }

    pub fn with_recording(mut self, record: bool) -> Self {
        self.record_residuals = record;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "residual tolerance {} must be non-negative",
                self.residual_tol
            )));
        }
        Ok(())
    }
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self::fixed(11)
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    /// `||h(xi^(k))||_inf` for `k = 0..=iterations_run`; empty when
    /// recording is disabled.
    pub residual_history: Vec<f64>,
    /// `max_k ||(I - dg_{k-1}/dx_k)^{-1} h_k||_inf` per iteration, same
    /// length as `residual_history`. Coincides with it for explicit steppers.
    pub scaled_residual_history: Vec<f64>,
    pub iterations_run: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuessPolicy {
    Ones,
    Zeros,
    ReplicateX0,
    /// Forward Euler on a grid about 100 times coarser, held constant
    /// between coarse nodes.
    CoarseEuler,
}

impl GuessPolicy {
    pub const NAMES: [&'static str; 4] = ["ones", "zeros", "replicate_x0", "coarse_euler"];

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ones" => Some(Self::Ones),
            "zeros" => Some(Self::Zeros),
            "replicate_x0" => Some(Self::ReplicateX0),
            "coarse_euler" => Some(Self::CoarseEuler),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ones => "ones",
            Self::Zeros => "zeros",
            Self::ReplicateX0 => "replicate_x0",
            Self::CoarseEuler => "coarse_euler",
        }
    }
}

/// Initial iterate `xi^(0)` over `n_steps` steps of the problem interval.
pub fn initial_guess(policy: GuessPolicy, problem: &OdeProblem, n_steps: usize) -> Trajectory {
    let d = problem.dim();
    let dt = (problem.tf() - problem.t0()) / n_steps.max(1) as f64;
    let states = match policy {
        GuessPolicy::Ones => vec![Vector::filled(d, 1.0); n_steps],
        GuessPolicy::Zeros => vec![Vector::zeros(d); n_steps],
        GuessPolicy::ReplicateX0 => vec![problem.x0().clone(); n_steps],
        GuessPolicy::CoarseEuler => {
            let stride = (n_steps / 100).max(1);
            let coarse_dt = stride as f64 * dt;
            let mut node = problem.x0().clone();
            let mut states = Vec::with_capacity(n_steps);
            for k in 1..=n_steps {
                if k % stride == 0 {
                    let mut next = node.clone();
                    next.axpy(coarse_dt, &problem.f(&node));
                    node = next;
                }
                states.push(node.clone());
            }
            states
        }
    };
    Trajectory {
        x0: problem.x0().clone(),
        states,
        t0: problem.t0(),
        dt,
    }
}

fn check_dims(traj: &Trajectory, stepper: &StepperIncrement, op: &'static str) -> Result<()> {
    if traj.dim() != stepper.dim() {
        return Err(Error::DimensionMismatch {
            op,
            expected: stepper.dim(),
            found: traj.dim(),
        });
    }
    if let Some(bad) = traj.states.iter().find(|s| s.dim() != traj.dim()) {
        return Err(Error::DimensionMismatch {
            op,
            expected: traj.dim(),
            found: bad.dim(),
        });
    }
    Ok(())
}

fn check_kind(stepper: &StepperIncrement, want: StepperKind) -> Result<()> {
    if stepper.kind() != want {
        return Err(Error::InvalidConfig(format!(
            "{} stepper passed where a {:?} one is required",
            stepper.name(),
            want
        )));
    }
    Ok(())
}

/// Residual blocks `h_k = x_k - x_{k-1} - g_{k-1}`, `k = 1..=N`, for either
/// stepper kind.
pub fn residual(traj: &Trajectory, stepper: &StepperIncrement) -> Result<Vec<Vector>> {
    check_dims(traj, stepper, "residual")?;
    let dt = traj.dt;
    Ok((1..=traj.n_steps())
        .into_par_iter()
        .map(|k| {
            let (prev, next) = (traj.state(k - 1), traj.state(k));
            let g = stepper.eval(prev, next, dt);
            next.sub(prev).sub(&g)
        })
        .collect())
}

/// Residual of the explicit rollout; `g_{k-1}` reads only `x_{k-1}`.
pub fn residual_explicit(traj: &Trajectory, stepper: &StepperIncrement) -> Result<Vec<Vector>> {
    check_kind(stepper, StepperKind::Explicit)?;
    residual(traj, stepper)
}

/// Residual of the implicit rollout; `g_{k-1}` reads `x_{k-1}` and `x_k`.
pub fn residual_implicit(traj: &Trajectory, stepper: &StepperIncrement) -> Result<Vec<Vector>> {
    check_kind(stepper, StepperKind::Implicit)?;
    residual(traj, stepper)
}

fn linearize_all(traj: &Trajectory, stepper: &StepperIncrement) -> Vec<Linearization> {
    let dt = traj.dt;
    (1..=traj.n_steps())
        .into_par_iter()
        .map(|k| stepper.linearize(traj.state(k - 1), traj.state(k), dt))
        .collect()
}

/// Residual blocks scaled by the inverse diagonal blocks,
/// `(I - dg_{k-1}/dx_k)^{-1} h_k`. Equal to [`residual`] for explicit
/// steppers.
pub fn preconditioned_residual(traj: &Trajectory, stepper: &StepperIncrement) -> Result<Vec<Vector>> {
    check_dims(traj, stepper, "preconditioned_residual")?;
    let lins = linearize_all(traj, stepper);
    let h = residual_from(traj, &lins);
    let elems = build_elements(&lins, &h, traj.dim())?;
    Ok(elems.into_iter().map(|e| e.c.scale(-1.0)).collect())
}

fn residual_from(traj: &Trajectory, lins: &[Linearization]) -> Vec<Vector> {
    lins.par_iter()
        .enumerate()
        .map(|(i, lin)| {
            let (prev, next) = (traj.state(i), traj.state(i + 1));
            next.sub(prev).sub(&lin.g)
        })
        .collect()
}

/// Affine element for step `k` (1-based) of the Newton recursion.
fn step_element(k: usize, lin: &Linearization, h: &Vector) -> Result<AffineElement> {
    let d = h.dim();
    let mut f = lin.jac_prev.clone();
    for i in 0..d {
        f[(i, i)] += 1.0;
    }
    match &lin.jac_next {
        None => Ok(AffineElement { f, c: h.scale(-1.0) }),
        Some(jn) => {
            let a = Mat::identity(d).sub(jn)?;
            let lu = Lu::factor(&a).map_err(|_| Error::SingularDiagonalBlock { step: k })?;
            Ok(AffineElement {
                f: lu.solve_mat(&f)?,
                c: lu.solve_vec(h)?.scale(-1.0),
            })
        }
    }
}

fn build_elements(lins: &[Linearization], residual_blocks: &[Vector], x0_dim: usize) -> Result<Vec<AffineElement>> {
    let mut elems: Vec<AffineElement> = lins
        .par_iter()
        .zip(residual_blocks.par_iter())
        .enumerate()
        .map(|(i, (lin, h))| step_element(i + 1, lin, h))
        .collect::<Result<_>>()?;
    // u_0 = 0 makes the first prefix (0, c_1).
    if let Some(first) = elems.first_mut() {
        first.f = Mat::zeros(x0_dim, x0_dim);
    }
    Ok(elems)
}

/// Newton step from precomputed linearizations and residual blocks.
fn newton_step_from(lins: &[Linearization], residual_blocks: &[Vector], x0_dim: usize) -> Result<Vec<Vector>> {
    let mut elems = build_elements(lins, residual_blocks, x0_dim)?;
    scan_parallel_in_place(&mut elems);
    Ok(extract_states(&elems))
}

fn scaled_norm(elems: &[AffineElement]) -> f64 {
    blocks_inf_norm(elems.iter().map(|e| &e.c))
}

fn check_step_inputs(traj: &Trajectory, residual_blocks: &[Vector], stepper: &StepperIncrement) -> Result<()> {
    check_dims(traj, stepper, "newton_step")?;
    if residual_blocks.len() != traj.n_steps() {
        return Err(Error::DimensionMismatch {
            op: "newton_step",
            expected: traj.n_steps(),
            found: residual_blocks.len(),
        });
    }
    if let Some(bad) = residual_blocks.iter().find(|h| h.dim() != traj.dim()) {
        return Err(Error::DimensionMismatch {
            op: "newton_step",
            expected: traj.dim(),
            found: bad.dim(),
        });
    }
    if traj.n_steps() == 0 {
        return Err(Error::EmptyInput("newton_step"));
    }
    Ok(())
}

/// Newton step `u = -H^{-1} h` for an explicit stepper, via the scan.
pub fn newton_step_explicit(
    traj: &Trajectory,
    residual_blocks: &[Vector],
    stepper: &StepperIncrement,
) -> Result<Vec<Vector>> {
    check_kind(stepper, StepperKind::Explicit)?;
    check_step_inputs(traj, residual_blocks, stepper)?;
    newton_step_from(&linearize_all(traj, stepper), residual_blocks, traj.dim())
}

/// Newton step `u = -H^{-1} h` for an implicit stepper, via the scan. Fails
/// with [`Error::SingularDiagonalBlock`] if some `I - dg_{k-1}/dx_k` cannot
/// be factored.
pub fn newton_step_implicit(
    traj: &Trajectory,
    residual_blocks: &[Vector],
    stepper: &StepperIncrement,
) -> Result<Vec<Vector>> {
    check_kind(stepper, StepperKind::Implicit)?;
    check_step_inputs(traj, residual_blocks, stepper)?;
    newton_step_from(&linearize_all(traj, stepper), residual_blocks, traj.dim())
}

/// Solves the rolled-out system on the problem interval with step `dt`.
pub fn solve(
    problem: &OdeProblem,
    stepper: &StepperIncrement,
    dt: f64,
    guess: GuessPolicy,
    config: &NewtonConfig,
) -> Result<SolveReport> {
    let n = steps_for(problem.t0(), problem.tf(), dt)?;
    let mut traj = initial_guess(guess, problem, n);
    traj.dt = dt;
    solve_from(stepper, traj, config)
}

/// Newton iterations starting from an explicit initial iterate.
pub fn solve_from(stepper: &StepperIncrement, guess: Trajectory, config: &NewtonConfig) -> Result<SolveReport> {
    config.validate()?;
    check_dims(&guess, stepper, "solve")?;
    if guess.n_steps() == 0 {
        return Err(Error::EmptyInput("solve"));
    }
    if !guess.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }

    let start = Instant::now();
    let mut traj = guess;
    let mut history = Vec::new();
    let mut scaled = Vec::new();
    let mut iterations = 0;
    let check_tol = config.residual_tol > 0.0;

    loop {
        if iterations == config.max_iters {
            if config.record_residuals {
                let norm = blocks_inf_norm(&residual(&traj, stepper)?);
                if !norm.is_finite() {
                    return Err(Error::NonFinite { iteration: iterations });
                }
                history.push(norm);
                scaled.push(blocks_inf_norm(&preconditioned_residual(&traj, stepper)?));
            }
            break;
        }

        let lins = linearize_all(&traj, stepper);
        let h = residual_from(&traj, &lins);

        if config.record_residuals || check_tol {
            let norm = blocks_inf_norm(&h);
            if !norm.is_finite() {
                return Err(Error::NonFinite { iteration: iterations });
            }
            if config.record_residuals {
                history.push(norm);
            }
            if check_tol && norm <= config.residual_tol {
                if config.record_residuals {
                    scaled.push(scaled_norm(&build_elements(&lins, &h, traj.dim())?));
                }
                break;
            }
        }

        let mut elems = build_elements(&lins, &h, traj.dim())?;
        if config.record_residuals {
            scaled.push(scaled_norm(&elems));
        }
        scan_parallel_in_place(&mut elems);
        let u = extract_states(&elems);
        traj.states
            .par_iter_mut()
            .zip(u.par_iter())
            .for_each(|(x, du)| x.axpy(1.0, du));
        iterations += 1;
        if !traj.is_finite() {
            return Err(Error::NonFinite { iteration: iterations });
        }
    }

    Ok(SolveReport {
        trajectory: traj,
        residual_history: history,
        scaled_residual_history: scaled,
        iterations_run: iterations,
        wall_time: start.elapsed(),
    })
}
