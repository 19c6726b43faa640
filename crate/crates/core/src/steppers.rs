//! One-step increment functions `x_{k+1} = x_k + g(x_k, x_{k+1}, dt)` and
//! their partial Jacobians.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{mat_mul, Mat, Vector};
use crate::problems::OdeProblem;

/// Butcher coefficients of an explicit Runge-Kutta rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    stages: usize,
    /// Row-major `stages x stages`.
    a: Vec<f64>,
    b: Vec<f64>,
    order: u32,
}

impl ButcherTableau {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>, order: u32) -> Result<Self> {
        let stages = b.len();
        if stages == 0 {
            return Err(Error::InvalidConfig("tableau needs at least one stage".into()));
        }
        if a.len() != stages || a.iter().any(|row| row.len() != stages) {
            return Err(Error::InvalidConfig(format!(
                "tableau coefficient matrix must be {stages}x{stages}"
            )));
        }
        let sum: f64 = b.iter().sum();
        if (sum - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidConfig(format!("tableau weights sum to {sum}, not 1")));
        }
        Ok(Self {
            stages,
            a: a.into_iter().flatten().collect(),
            b,
            order,
        })
    }

    /// Forward Euler as a one-stage tableau.
    pub fn euler() -> Self {
        Self::new(vec![vec![0.0]], vec![1.0], 1).expect("valid tableau")
    }

    /// The classic fourth-order rule.
    pub fn rk4() -> Self {
        Self::new(
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            4,
        )
        .expect("valid tableau")
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.stages + j]
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// True when `a_ij = 0` for every `j >= i`.
    pub fn is_explicit(&self) -> bool {
        (0..self.stages).all(|i| (i..self.stages).all(|j| self.a(i, j) == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepperKind {
    Explicit,
    Implicit,
}

#[derive(Clone)]
enum Scheme {
    Euler,
    ExplicitRk(ButcherTableau),
    BackwardEuler,
    Trapezoidal,
}

/// `g` together with its partial Jacobians at one point.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub g: Vector,
    /// dg/dx_k
    pub jac_prev: Mat,
    /// dg/dx_{k+1}; `None` for explicit schemes.
    pub jac_next: Option<Mat>,
}

/// A one-step method bound to a problem.
#[derive(Clone)]
pub struct StepperIncrement {
    problem: OdeProblem,
    scheme: Scheme,
}

/// Names accepted by [`by_name`].
pub const STEPPER_NAMES: [&str; 4] = ["euler", "rk4", "backward_euler", "trapezoidal"];

pub fn by_name(name: &str, problem: &OdeProblem) -> Option<StepperIncrement> {
    match name {
        "euler" => Some(explicit_euler(problem)),
        "rk4" => Some(explicit_rk(problem, ButcherTableau::rk4()).expect("rk4 is explicit")),
        "backward_euler" => Some(implicit_euler(problem)),
        "trapezoidal" => Some(trapezoidal(problem)),
        _ => None,
    }
}

pub fn explicit_euler(problem: &OdeProblem) -> StepperIncrement {
    StepperIncrement {
        problem: problem.clone(),
        scheme: Scheme::Euler,
    }
}

pub fn explicit_rk(problem: &OdeProblem, tableau: ButcherTableau) -> Result<StepperIncrement> {
    if !tableau.is_explicit() {
        return Err(Error::InvalidConfig(
            "explicit Runge-Kutta needs a strictly lower triangular tableau".into(),
        ));
    }
    Ok(StepperIncrement {
        problem: problem.clone(),
        scheme: Scheme::ExplicitRk(tableau),
    })
}

pub fn implicit_euler(problem: &OdeProblem) -> StepperIncrement {
    StepperIncrement {
        problem: problem.clone(),
        scheme: Scheme::BackwardEuler,
    }
}

pub fn trapezoidal(problem: &OdeProblem) -> StepperIncrement {
    StepperIncrement {
        problem: problem.clone(),
        scheme: Scheme::Trapezoidal,
    }
}

impl StepperIncrement {
    pub fn kind(&self) -> StepperKind {
        match self.scheme {
            Scheme::Euler | Scheme::ExplicitRk(_) => StepperKind::Explicit,
            Scheme::BackwardEuler | Scheme::Trapezoidal => StepperKind::Implicit,
        }
    }

    pub fn is_explicit(&self) -> bool {
        self.kind() == StepperKind::Explicit
    }

    /// Classical convergence order.
    pub fn order(&self) -> u32 {
        match &self.scheme {
            Scheme::Euler | Scheme::BackwardEuler => 1,
            Scheme::ExplicitRk(t) => t.order,
            Scheme::Trapezoidal => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match &self.scheme {
            Scheme::Euler => "euler",
            Scheme::ExplicitRk(t) if *t == ButcherTableau::rk4() => "rk4",
            Scheme::ExplicitRk(_) => "explicit_rk",
            Scheme::BackwardEuler => "backward_euler",
            Scheme::Trapezoidal => "trapezoidal",
        }
    }

    pub fn problem(&self) -> &OdeProblem {
        &self.problem
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    /// Evaluates `g(x_prev, x_next, dt)`. Explicit schemes never read
    /// `x_next`.
    pub fn eval(&self, x_prev: &Vector, x_next: &Vector, dt: f64) -> Vector {
        let f = |x: &Vector| self.problem.f(x);
        match &self.scheme {
            Scheme::Euler => f(x_prev).scale(dt),
            Scheme::ExplicitRk(t) => rk_increment(&self.problem, t, x_prev, dt),
            Scheme::BackwardEuler => f(x_next).scale(dt),
            Scheme::Trapezoidal => {
                let h = 0.5 * dt;
                let mut g = f(x_prev).scale(h);
                g.axpy(h, &f(x_next));
                g
            }
        }
    }

    /// Explicit increment `g(x, dt)`. Panics for implicit schemes.
    pub fn eval_explicit(&self, x: &Vector, dt: f64) -> Vector {
        assert!(self.is_explicit(), "eval_explicit on an implicit scheme");
        self.eval(x, x, dt)
    }

    /// dg/dx_k.
    pub fn jac_prev(&self, x_prev: &Vector, _x_next: &Vector, dt: f64) -> Mat {
        let j = |x: &Vector| self.problem.jac_f(x);
        match &self.scheme {
            Scheme::Euler => j(x_prev).scale(dt),
            Scheme::ExplicitRk(t) => rk_linearize(&self.problem, t, x_prev, dt).1,
            Scheme::BackwardEuler => Mat::zeros(self.dim(), self.dim()),
            Scheme::Trapezoidal => j(x_prev).scale(0.5 * dt),
        }
    }

    /// dg/dx_{k+1}; `None` for explicit schemes.
    pub fn jac_next(&self, _x_prev: &Vector, x_next: &Vector, dt: f64) -> Option<Mat> {
        let j = |x: &Vector| self.problem.jac_f(x);
        match &self.scheme {
            Scheme::Euler | Scheme::ExplicitRk(_) => None,
            Scheme::BackwardEuler => Some(j(x_next).scale(dt)),
            Scheme::Trapezoidal => Some(j(x_next).scale(0.5 * dt)),
        }
    }

    /// `g` and both partial Jacobians, sharing stage evaluations.
    pub fn linearize(&self, x_prev: &Vector, x_next: &Vector, dt: f64) -> Linearization {
        match &self.scheme {
            Scheme::ExplicitRk(t) => {
                let (g, jac_prev) = rk_linearize(&self.problem, t, x_prev, dt);
                Linearization {
                    g,
                    jac_prev,
                    jac_next: None,
                }
            }
            _ => Linearization {
                g: self.eval(x_prev, x_next, dt),
                jac_prev: self.jac_prev(x_prev, x_next, dt),
                jac_next: self.jac_next(x_prev, x_next, dt),
            },
        }
    }
}

impl fmt::Debug for StepperIncrement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StepperIncrement")
            .field("name", &self.name())
            .field("problem", &self.problem.name())
            .finish()
    }
}

fn rk_increment(problem: &OdeProblem, t: &ButcherTableau, x: &Vector, dt: f64) -> Vector {
    let mut stages: Vec<Vector> = Vec::with_capacity(t.stages);
    for i in 0..t.stages {
        let mut y = x.clone();
        for (j, k) in stages.iter().enumerate() {
            let a = t.a(i, j);
            if a != 0.0 {
                y.axpy(dt * a, k);
            }
        }
        stages.push(problem.f(&y));
    }
    let mut acc = Vector::zeros(x.dim());
    for (b, k) in t.b.iter().zip(&stages) {
        acc.axpy(*b, k);
    }
    acc.scale(dt)
}

/// Increment and its derivative by forward chain rule through the stages:
/// `dk_i/dx = J(y_i) (I + dt sum_j a_ij dk_j/dx)`.
fn rk_linearize(problem: &OdeProblem, t: &ButcherTableau, x: &Vector, dt: f64) -> (Vector, Mat) {
    let d = x.dim();
    let eye = Mat::identity(d);
    let mut stages: Vec<Vector> = Vec::with_capacity(t.stages);
    let mut dstages: Vec<Mat> = Vec::with_capacity(t.stages);
    for i in 0..t.stages {
        let mut y = x.clone();
        let mut dy = eye.clone();
        for j in 0..i {
            let a = t.a(i, j);
            if a != 0.0 {
                y.axpy(dt * a, &stages[j]);
                dy = dy.add(&dstages[j].scale(dt * a)).expect("square");
            }
        }
        stages.push(problem.f(&y));
        dstages.push(mat_mul(&problem.jac_f(&y), &dy).expect("square"));
    }
    let mut g = Vector::zeros(d);
    let mut dg = Mat::zeros(d, d);
    for ((b, k), dk) in t.b.iter().zip(&stages).zip(&dstages) {
        g.axpy(*b, k);
        dg = dg.add(&dk.scale(*b)).expect("square");
    }
    (g.scale(dt), dg.scale(dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{
        self, central_difference_jacobian, jacobian_relative_error, logistic_exact,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exp_growth() -> OdeProblem {
        OdeProblem::new(
            "growth",
            Vector::from([1.0]),
            0.0,
            1.0,
            |x| x.clone(),
            |_| Mat::identity(1),
        )
        .unwrap()
    }

    fn constant_rhs() -> OdeProblem {
        OdeProblem::new(
            "const",
            Vector::from([0.0, 0.0]),
            0.0,
            1.0,
            |_| Vector::from([2.5, -1.0]),
            |_| Mat::zeros(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn tableau_invariants() {
        assert!(ButcherTableau::rk4().is_explicit());
        assert!(ButcherTableau::euler().is_explicit());
        let implicit = ButcherTableau::new(vec![vec![1.0]], vec![1.0], 1).unwrap();
        assert!(!implicit.is_explicit());
        assert!(explicit_rk(&problems::logistic(), implicit).is_err());
        assert!(ButcherTableau::new(vec![vec![0.0]], vec![0.9], 1).is_err());
        assert!(ButcherTableau::new(vec![vec![0.0, 0.0]], vec![1.0], 1).is_err());
    }

    #[test]
    fn euler_single_step_logistic() {
        let s = explicit_euler(&problems::logistic());
        let x = Vector::from([0.1]);
        let g = s.eval_explicit(&x, 0.01);
        assert!((g[0] - 0.0009).abs() < 1e-18);
        assert!((x[0] + g[0] - 0.1009).abs() < 1e-16);
    }

    #[test]
    fn zero_step_gives_zero_increment() {
        for name in STEPPER_NAMES {
            for p in [problems::van_der_pol(), problems::robertson()] {
                let s = by_name(name, &p).unwrap();
                let x = p.x0().clone();
                let g = s.eval(&x, &x, 0.0);
                assert!(g.iter().all(|v| *v == 0.0), "{name}");
                if let Some(jn) = s.jac_next(&x, &x, 0.0) {
                    assert!(jn.as_slice().iter().all(|v| *v == 0.0));
                }
            }
        }
    }

    #[test]
    fn rk4_on_exponential_growth() {
        let s = explicit_rk(&exp_growth(), ButcherTableau::rk4()).unwrap();
        let g = s.eval_explicit(&Vector::from([1.0]), 0.1);
        let h: f64 = 0.1;
        let expected = h + h * h / 2.0 + h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((g[0] - expected).abs() < 1e-16);
        assert!((g[0] - 0.105_170_833_333_333_33).abs() < 1e-16);
    }

    #[test]
    fn one_stage_tableau_is_euler_bitwise() {
        let p = problems::van_der_pol();
        let rk1 = explicit_rk(&p, ButcherTableau::euler()).unwrap();
        let eu = explicit_euler(&p);
        let x = Vector::from([0.37, -1.21]);
        assert_eq!(rk1.eval_explicit(&x, 0.013), eu.eval_explicit(&x, 0.013));
        assert_eq!(rk1.jac_prev(&x, &x, 0.013), eu.jac_prev(&x, &x, 0.013));
    }

    #[test]
    fn explicit_kind_ignores_next_state() {
        let p = problems::van_der_pol();
        for s in [explicit_euler(&p), by_name("rk4", &p).unwrap()] {
            let x = Vector::from([0.3, -0.2]);
            let a = s.eval(&x, &Vector::from([9.0, 9.0]), 0.01);
            let b = s.eval(&x, &Vector::from([-5.0, 1.0]), 0.01);
            assert_eq!(a, b);
            assert!(s.jac_next(&x, &x, 0.01).is_none());
            assert_eq!(s.kind(), StepperKind::Explicit);
        }
    }

    fn fd_jac_prev(s: &StepperIncrement, xp: &Vector, xn: &Vector, dt: f64) -> Mat {
        central_difference_jacobian(|y| s.eval(y, xn, dt), xp)
    }

    fn fd_jac_next(s: &StepperIncrement, xp: &Vector, xn: &Vector, dt: f64) -> Mat {
        central_difference_jacobian(|y| s.eval(xp, y, dt), xn)
    }

    #[test]
    fn euler_and_rk4_jacobians_vs_finite_differences() {
        let p = problems::van_der_pol();
        let x = Vector::from([0.3, -0.2]);
        for s in [explicit_euler(&p), by_name("rk4", &p).unwrap()] {
            let err = jacobian_relative_error(&s.jac_prev(&x, &x, 0.01), &fd_jac_prev(&s, &x, &x, 0.01));
            assert!(err <= 1e-6, "{}: {err}", s.name());
        }
    }

    #[test]
    fn rk4_jacobian_on_every_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for name in problems::PROBLEM_NAMES {
            let p = problems::by_name(name).unwrap();
            let s = by_name("rk4", &p).unwrap();
            // Robertson and Dahlquist are stiff; keep the step inside the
            // region where the increment is well scaled.
            let dt = if p.is_stiff() { 1e-4 } else { 0.01 };
            for _ in 0..10 {
                let x: Vector = (0..p.dim())
                    .map(|_| if name == "robertson" { rng.gen_range(0.0..1e-3) } else { rng.gen_range(-1.5..1.5) })
                    .collect();
                let lin = s.linearize(&x, &x, dt);
                assert_eq!(lin.g, s.eval_explicit(&x, dt));
                let err = jacobian_relative_error(&lin.jac_prev, &fd_jac_prev(&s, &x, &x, dt));
                assert!(err <= 1e-5, "{name}: {err}");
            }
        }
    }

    #[test]
    fn backward_euler_values() {
        let p = problems::dahlquist();
        let s = implicit_euler(&p);
        let one = Vector::from([1.0]);
        assert!((s.eval(&Vector::from([7.0]), &one, 0.1)[0] + 100.0).abs() < 1e-12);
        assert_eq!(s.jac_prev(&one, &one, 0.1).as_slice(), &[0.0]);
        assert_eq!(s.kind(), StepperKind::Implicit);

        let r = problems::robertson();
        let s = implicit_euler(&r);
        let xp = Vector::from([0.9, 1e-5, 0.1]);
        let xn = Vector::from([0.89, 2e-5, 0.11]);
        let err = jacobian_relative_error(
            &s.jac_next(&xp, &xn, 0.1).unwrap(),
            &fd_jac_next(&s, &xp, &xn, 0.1),
        );
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn trapezoidal_values() {
        let p = problems::dahlquist();
        let s = trapezoidal(&p);
        let one = Vector::from([1.0]);
        assert!((s.eval(&one, &one, 0.1)[0] + 100.0).abs() < 1e-12);

        let c = constant_rhs();
        let x = Vector::from([0.2, 0.4]);
        let y = Vector::from([-3.0, 8.0]);
        assert_eq!(trapezoidal(&c).eval(&x, &y, 0.37), explicit_euler(&c).eval_explicit(&x, 0.37));

        let v = problems::van_der_pol();
        let s = trapezoidal(&v);
        let x = Vector::from([0.3, -0.2]);
        let sum = s.jac_prev(&x, &x, 0.01).add(&s.jac_next(&x, &x, 0.01).unwrap()).unwrap();
        assert!(sum.max_abs_diff(&v.jac_f(&x).scale(0.01)) <= 1e-17);

        let xn = Vector::from([0.31, -0.25]);
        assert!(jacobian_relative_error(&s.jac_prev(&x, &xn, 0.01), &fd_jac_prev(&s, &x, &xn, 0.01)) <= 1e-6);
        assert!(jacobian_relative_error(&s.jac_next(&x, &xn, 0.01).unwrap(), &fd_jac_next(&s, &x, &xn, 0.01)) <= 1e-6);
    }

    fn rk4_logistic_error(dt: f64) -> f64 {
        let p = problems::logistic();
        let s = by_name("rk4", &p).unwrap();
        let n = p.n_steps(dt).unwrap();
        let mut x = p.x0().clone();
        for _ in 0..n {
            let g = s.eval_explicit(&x, dt);
            x = x.add(&g);
        }
        (x[0] - logistic_exact(10.0)).abs()
    }

    #[test]
    fn rk4_is_fourth_order_on_logistic() {
        let (e1, e2) = (rk4_logistic_error(0.2), rk4_logistic_error(0.1));
        assert!(e1 / e2 >= 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn backward_euler_is_stable_on_dahlquist() {
        let p = problems::dahlquist();
        let lambda = problems::DAHLQUIST_LAMBDA;
        for dt in [1e-4, 1e-3, 1e-2, 0.1, 1.0] {
            let mut x = 1.0f64;
            for _ in 0..50 {
                // scalar implicit step solved in closed form
                let next = x / (1.0 - lambda * dt);
                let s = implicit_euler(&p);
                let r = next - x - s.eval(&Vector::from([x]), &Vector::from([next]), dt)[0];
                assert!(r.abs() <= 1e-12 * x.abs().max(1e-300));
                assert!(next.abs() <= x.abs());
                x = next;
            }
        }
    }
}
