//! Reference integrators: plain sequential stepping and Parareal.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Mat, Vector};
use crate::newton::Trajectory;
use crate::problems::{steps_for, OdeProblem};
use crate::steppers::StepperIncrement;

fn require_explicit(stepper: &StepperIncrement) -> Result<()> {
    if !stepper.is_explicit() {
        return Err(Error::InvalidConfig(format!(
            "{} is implicit; an explicit stepper is required",
            stepper.name()
        )));
    }
    Ok(())
}

/// `x_{k+1} = x_k + g(x_k, dt)` for `n_steps` steps.
pub fn integrate_explicit(stepper: &StepperIncrement, x0: &Vector, t0: f64, dt: f64, n_steps: usize) -> Result<Trajectory> {
    require_explicit(stepper)?;
    let mut states = Vec::with_capacity(n_steps);
    let mut x = x0.clone();
    for k in 0..n_steps {
        let g = stepper.eval_explicit(&x, dt);
        x.axpy(1.0, &g);
        if !x.is_finite() {
            return Err(Error::NonFinite { iteration: k + 1 });
        }
        states.push(x.clone());
    }
    Trajectory::new(x0.clone(), states, t0, dt)
}

pub fn solve_sequential_explicit(problem: &OdeProblem, stepper: &StepperIncrement, dt: f64) -> Result<Trajectory> {
    let n = steps_for(problem.t0(), problem.tf(), dt)?;
    integrate_explicit(stepper, problem.x0(), problem.t0(), dt, n)
}

/// Per-step Newton settings for [`solve_sequential_implicit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerNewton {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InnerNewton {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iters: 50,
        }
    }
}

/// One implicit step: solves `r(y) = y - x - g(x, y, dt) = 0` by undamped
/// Newton warm-started at `x`. At least one update is always taken, so the
/// tolerance test never accepts the warm start of a small state.
pub fn implicit_step(stepper: &StepperIncrement, x: &Vector, dt: f64, inner: InnerNewton, step: usize) -> Result<Vector> {
    let d = x.dim();
    let mut y = x.clone();
    let mut last = f64::INFINITY;
    for it in 0..=inner.max_iters {
        let r = y.sub(x).sub(&stepper.eval(x, &y, dt));
        last = r.inf_norm();
        if !last.is_finite() {
            return Err(Error::InnerNewtonFailed { step, residual: last });
        }
        if (it > 0 && last <= inner.tol) || it == inner.max_iters {
            break;
        }
        let jn = stepper.jac_next(x, &y, dt).unwrap_or_else(|| Mat::zeros(d, d));
        let a = Mat::identity(d).sub(&jn)?;
        let delta = lu_solve(&a, &r).map_err(|_| Error::InnerNewtonFailed { step, residual: last })?;
        y.axpy(-1.0, &delta);
    }
    if last > inner.tol {
        return Err(Error::InnerNewtonFailed { step, residual: last });
    }
    Ok(y)
}

pub fn integrate_implicit(
    stepper: &StepperIncrement,
    x0: &Vector,
    t0: f64,
    dt: f64,
    n_steps: usize,
    inner: InnerNewton,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(n_steps);
    let mut x = x0.clone();
    for k in 1..=n_steps {
        x = implicit_step(stepper, &x, dt, inner, k)?;
        states.push(x.clone());
    }
    Trajectory::new(x0.clone(), states, t0, dt)
}

/// Sequential implicit integration, one nonlinear solve per step.
pub fn solve_sequential_implicit(
    problem: &OdeProblem,
    stepper: &StepperIncrement,
    dt: f64,
    inner: InnerNewton,
) -> Result<Trajectory> {
    if stepper.is_explicit() {
        return Err(Error::InvalidConfig(format!(
            "{} is explicit; an implicit stepper is required",
            stepper.name()
        )));
    }
    let n = steps_for(problem.t0(), problem.tf(), dt)?;
    integrate_implicit(stepper, problem.x0(), problem.t0(), dt, n, inner)
}

/// Sequential reference for either stepper kind.
pub fn solve_sequential(problem: &OdeProblem, stepper: &StepperIncrement, dt: f64) -> Result<Trajectory> {
    if stepper.is_explicit() {
        solve_sequential_explicit(problem, stepper, dt)
    } else {
        solve_sequential_implicit(problem, stepper, dt, InnerNewton::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PararealConfig {
    /// Coarse intervals `M`.
    pub n_coarse: usize,
    /// Correction rounds `I`.
    pub n_iterations: usize,
    /// Fine steps per coarse interval, `N / M`.
    pub fine_substeps: usize,
}

impl PararealConfig {
    pub fn new(n_coarse: usize, n_iterations: usize, fine_substeps: usize) -> Result<Self> {
        let cfg = Self {
            n_coarse,
            n_iterations,
            fine_substeps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Splits `n_steps` fine steps into `M` intervals with `M` the divisor of
    /// `n_steps` closest to `sqrt(n_steps)`.
    pub fn square_root(n_steps: usize, n_iterations: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidConfig("Parareal needs at least one step".into()));
        }
        let root = (n_steps as f64).sqrt();
        let m = (1..=n_steps)
            .filter(|m| n_steps % m == 0)
            .min_by(|a, b| {
                let da = (*a as f64 - root).abs();
                let db = (*b as f64 - root).abs();
                da.total_cmp(&db)
            })
            .expect("1 divides everything");
        Self::new(m, n_iterations, n_steps / m)
    }

    pub fn n_steps(&self) -> usize {
        self.n_coarse * self.fine_substeps
    }

    fn validate(&self) -> Result<()> {
        if self.n_coarse == 0 || self.n_iterations == 0 || self.fine_substeps == 0 {
            return Err(Error::InvalidConfig(format!(
                "Parareal needs M, I and N/M at least 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PararealResult {
    /// Coarse nodes `x_0 .. x_M` after the last correction round.
    pub coarse_nodes: Vec<Vector>,
    /// Nodes after each round; entry 0 is the coarse prediction.
    pub node_history: Vec<Vec<Vector>>,
    /// Fine states of the last round, concatenated over intervals.
    pub fine: Trajectory,
}

/// Parareal with a single coarse step per interval and `fine_substeps` fine
/// steps. Fine passes over the intervals run concurrently; predictions and
/// corrections are sequential.
pub fn solve_parareal(
    problem: &OdeProblem,
    coarse: &StepperIncrement,
    fine: &StepperIncrement,
    config: &PararealConfig,
) -> Result<PararealResult> {
    config.validate()?;
    require_explicit(coarse)?;
    require_explicit(fine)?;
    let m = config.n_coarse;
    let dt = (problem.tf() - problem.t0()) / config.n_steps() as f64;
    let big_dt = dt * config.fine_substeps as f64;

    let propagate_coarse = |x: &Vector, round: usize| -> Result<Vector> {
        let y = x.add(&coarse.eval_explicit(x, big_dt));
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite { iteration: round })
        }
    };
    let propagate_fine = |x: &Vector| integrate_explicit(fine, x, 0.0, dt, config.fine_substeps);

    let mut nodes = Vec::with_capacity(m + 1);
    let mut coarse_prev = Vec::with_capacity(m);
    nodes.push(problem.x0().clone());
    for k in 0..m {
        let g = propagate_coarse(&nodes[k], 0)?;
        coarse_prev.push(g.clone());
        nodes.push(g);
    }
    let mut history = vec![nodes.clone()];
    let mut fine_runs: Vec<Trajectory> = Vec::new();

    for round in 1..=config.n_iterations {
        fine_runs = nodes[..m]
            .par_iter()
            .map(propagate_fine)
            .collect::<Result<_>>()
            .map_err(|_| Error::NonFinite { iteration: round })?;

        let mut next = Vec::with_capacity(m + 1);
        next.push(problem.x0().clone());
        for k in 0..m {
            let g = propagate_coarse(&next[k], round)?;
            let x = g.add(fine_runs[k].last()).sub(&coarse_prev[k]);
            coarse_prev[k] = g;
            next.push(x);
        }
        nodes = next;
        history.push(nodes.clone());
    }

    let states = fine_runs.into_iter().flat_map(|t| t.states).collect();
    let fine = Trajectory::new(problem.x0().clone(), states, problem.t0(), dt)?;
    Ok(PararealResult {
        coarse_nodes: nodes,
        node_history: history,
        fine,
    })
}
