//! Autonomous initial value problems `dx/dt = f(x)`, `x(t0) = x0`, together
//! with the five benchmark systems used throughout the crate.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

type RhsFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type JacFn = dyn Fn(&Vector) -> Mat + Send + Sync;

/// An autonomous IVP with an analytic Jacobian.
#[derive(Clone)]
pub struct OdeProblem {
    name: String,
    x0: Vector,
    t0: f64,
    tf: f64,
    stiff: bool,
    rhs: Arc<RhsFn>,
    jac: Arc<JacFn>,
}

impl OdeProblem {
    pub fn new<F, J>(name: impl Into<String>, x0: Vector, t0: f64, tf: f64, rhs: F, jac: J) -> Result<Self>
    where
        F: Fn(&Vector) -> Vector + Send + Sync + 'static,
        J: Fn(&Vector) -> Mat + Send + Sync + 'static,
    {
        if x0.dim() == 0 {
            return Err(Error::InvalidConfig("initial state must be non-empty".into()));
        }
        if !(tf > t0) {
            return Err(Error::InvalidConfig(format!("empty interval [{t0}, {tf}]")));
        }
        Ok(Self {
            name: name.into(),
            x0,
            t0,
            tf,
            stiff: false,
            rhs: Arc::new(rhs),
            jac: Arc::new(jac),
        })
    }

    /// Marks the problem as stiff; explicit coarse propagators refuse it.
    pub fn with_stiff(mut self, stiff: bool) -> Self {
        self.stiff = stiff;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.x0.dim()
    }

    pub fn x0(&self) -> &Vector {
        &self.x0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn is_stiff(&self) -> bool {
        self.stiff
    }

    #[inline]
    pub fn f(&self, x: &Vector) -> Vector {
        (self.rhs)(x)
    }

    #[inline]
    pub fn jac_f(&self, x: &Vector) -> Mat {
        (self.jac)(x)
    }

    /// Number of steps of size `dt` covering the interval; fails unless `dt`
    /// divides it to within 1e-9.
    pub fn n_steps(&self, dt: f64) -> Result<usize> {
        steps_for(self.t0, self.tf, dt)
    }

    /// Same problem on a different interval.
    pub fn with_interval(mut self, t0: f64, tf: f64) -> Result<Self> {
        if !(tf > t0) {
            return Err(Error::InvalidConfig(format!("empty interval [{t0}, {tf}]")));
        }
        self.t0 = t0;
        self.tf = tf;
        Ok(self)
    }

    /// Same dynamics with a different initial state.
    pub fn with_x0(mut self, x0: Vector) -> Result<Self> {
        if x0.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                op: "OdeProblem::with_x0",
                expected: self.dim(),
                found: x0.dim(),
            });
        }
        self.x0 = x0;
        Ok(self)
    }
}

impl fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OdeProblem")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("t0", &self.t0)
            .field("tf", &self.tf)
            .field("stiff", &self.stiff)
            .finish_non_exhaustive()
    }
}

pub(crate) fn steps_for(t0: f64, tf: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("step size {dt} must be positive")));
    }
    let span = tf - t0;
    let n = (span / dt).round();
    if n < 1.0 || (n * dt - span).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "step size {dt} does not divide the interval [{t0}, {tf}]"
        )));
    }
    Ok(n as usize)
}

/// Names accepted by [`by_name`].
pub const PROBLEM_NAMES: [&str; 5] = ["logistic", "vdp", "cartpole", "dahlquist", "robertson"];

pub fn by_name(name: &str) -> Option<OdeProblem> {
    match name {
        "logistic" => Some(logistic()),
        "vdp" => Some(van_der_pol()),
        "cartpole" => Some(cart_pole()),
        "dahlquist" => Some(dahlquist()),
        "robertson" => Some(robertson()),
        _ => None,
    }
}

/// dP/dt = r P (1 - P/K), r = K = 1, P(0) = 0.1 on [0, 10].
pub fn logistic() -> OdeProblem {
    const R: f64 = 1.0;
    const K: f64 = 1.0;
    OdeProblem::new(
        "logistic",
        Vector::from([0.1]),
        0.0,
        10.0,
        |x| Vector::from([R * x[0] * (1.0 - x[0] / K)]),
        |x| Mat::from_rows(&[[R * (1.0 - 2.0 * x[0] / K)]]),
    )
    .expect("valid problem")
}

/// Closed-form logistic solution for the parameters of [`logistic`].
pub fn logistic_exact(t: f64) -> f64 {
    let (r, k, p0) = (1.0, 1.0, 0.1);
    k / (1.0 + (k - p0) / p0 * (-r * t).exp())
}

/// van der Pol oscillator with mu = 1, state (x, dx/dt), x(0) = 0,
/// dx/dt(0) = 1 on [0, 10].
pub fn van_der_pol() -> OdeProblem {
    const MU: f64 = 1.0;
    OdeProblem::new(
        "vdp",
        Vector::from([0.0, 1.0]),
        0.0,
        10.0,
        |x| {
            let (p, v) = (x[0], x[1]);
            Vector::from([v, MU * (1.0 - p * p) * v - p])
        },
        |x| {
            let (p, v) = (x[0], x[1]);
            Mat::from_rows(&[[0.0, 1.0], [-2.0 * MU * p * v - 1.0, MU * (1.0 - p * p)]])
        },
    )
    .expect("valid problem")
}

/// Which velocity term enters the cart acceleration numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CartPoleForm {
    /// `l * dtheta/dt`, the form the benchmark results were produced with.
    #[default]
    Linear,
    /// `l * (dtheta/dt)^2`, the textbook cart-pole.
    Squared,
}

pub fn cart_pole() -> OdeProblem {
    cart_pole_with(CartPoleForm::Linear)
}

/// Cart-pole with g = 9.81, l = 0.5, m_c = 10, m_p = 1; state
/// (p, dp/dt, theta, dtheta/dt) starting at (0, 0, pi/2, 0) on [0, 4].
pub fn cart_pole_with(form: CartPoleForm) -> OdeProblem {
    const G: f64 = 9.81;
    const L: f64 = 0.5;
    const MC: f64 = 10.0;
    const MP: f64 = 1.0;
    const M: f64 = MC + MP;

    // Velocity term and its derivative in omega.
    let vel = move |w: f64| match form {
        CartPoleForm::Linear => (L * w, L),
        CartPoleForm::Squared => (L * w * w, 2.0 * L * w),
    };

    let rhs = move |x: &Vector| {
        let (v, th, w) = (x[1], x[2], x[3]);
        let (s, c) = th.sin_cos();
        let d = MC + MP * s * s;
        let acc = MP * s * (vel(w).0 + G * c) / d;
        let alpha = (-MP * L * w * w * c * s - M * G * s) / (L * d);
        Vector::from([v, acc, w, alpha])
    };
    let jac = move |x: &Vector| {
        let (th, w) = (x[2], x[3]);
        let (s, c) = th.sin_cos();
        let d = MC + MP * s * s;
        let dd = 2.0 * MP * s * c;
        let (vt, dvt) = vel(w);

        let n_acc = MP * s * (vt + G * c);
        let dn_acc = MP * (c * vt + G * (c * c - s * s));
        let dacc_dth = (dn_acc * d - n_acc * dd) / (d * d);
        let dacc_dw = MP * s * dvt / d;

        let n_alpha = -MP * L * w * w * c * s - M * G * s;
        let dn_alpha = -MP * L * w * w * (c * c - s * s) - M * G * c;
        let dalpha_dth = (dn_alpha * d - n_alpha * dd) / (L * d * d);
        let dalpha_dw = -2.0 * MP * w * c * s / d;

        Mat::from_rows(&[
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, dacc_dth, dacc_dw],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, dalpha_dth, dalpha_dw],
        ])
    };
    let name = match form {
        CartPoleForm::Linear => "cartpole",
        CartPoleForm::Squared => "cartpole_squared",
    };
    OdeProblem::new(
        name,
        Vector::from([0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0]),
        0.0,
        4.0,
        rhs,
        jac,
    )
    .expect("valid problem")
}

pub const DAHLQUIST_LAMBDA: f64 = -1000.0;

/// dy/dt = lambda y, lambda = -1000, y(0) = 1 on [0, 4].
pub fn dahlquist() -> OdeProblem {
    OdeProblem::new(
        "dahlquist",
        Vector::from([1.0]),
        0.0,
        4.0,
        |x| Vector::from([DAHLQUIST_LAMBDA * x[0]]),
        |_| Mat::from_rows(&[[DAHLQUIST_LAMBDA]]),
    )
    .expect("valid problem")
    .with_stiff(true)
}

/// Robertson kinetics with k1 = 0.04, k2 = 3e7, k3 = 1e4, y(0) = (1, 0, 0)
/// on [0, 500].
pub fn robertson() -> OdeProblem {
    const K1: f64 = 0.04;
    const K2: f64 = 3e7;
    const K3: f64 = 1e4;
    OdeProblem::new(
        "robertson",
        Vector::from([1.0, 0.0, 0.0]),
        0.0,
        500.0,
        |y| {
            let (y1, y2, y3) = (y[0], y[1], y[2]);
            let r1 = K1 * y1;
            let r2 = K2 * y2 * y2;
            let r3 = K3 * y2 * y3;
            Vector::from([-r1 + r3, r1 - r2 - r3, r2])
        },
        |y| {
            let (y2, y3) = (y[1], y[2]);
            Mat::from_rows(&[
                [-K1, K3 * y3, K3 * y2],
                [K1, -2.0 * K2 * y2 - K3 * y3, -K3 * y2],
                [0.0, 2.0 * K2 * y2, 0.0],
            ])
        },
    )
    .expect("valid problem")
    .with_stiff(true)
}

/// Central-difference Jacobian with per-coordinate step
/// `sqrt(eps) * max(1, |x_i|)`.
pub fn central_difference_jacobian<F: Fn(&Vector) -> Vector>(f: F, x: &Vector) -> Mat {
    let n = x.dim();
    let m = f(x).dim();
    let mut jac = Mat::zeros(m, n);
    for j in 0..n {
        let h = f64::EPSILON.sqrt() * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (f(&xp), f(&xm));
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Largest entry-wise error of `analytic` against `reference`, relative to
/// the largest reference entry (floored at 1).
pub fn jacobian_relative_error(analytic: &Mat, reference: &Mat) -> f64 {
    let scale = reference.as_slice().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    analytic.max_abs_diff(reference) / scale
}
