//! Parallel-in-time integration of nonlinear ODEs.
//!
//! Explicit and implicit one-step methods are rolled out over the whole time
//! grid into a single nonlinear system, which is solved by Newton's method.
//! Each Newton step reduces to an affine recursion evaluated with a parallel
//! associative scan, so the dependency chain per iteration is logarithmic in
//! the number of steps.
//!
//! ```
//! use partime::{newton, problems, steppers};
//!
//! let p = problems::logistic();
//! let rk4 = steppers::by_name("rk4", &p).unwrap();
//! let report = newton::solve(&p, &rk4, 1e-2, newton::GuessPolicy::Ones, &newton::NewtonConfig::fixed(11)).unwrap();
//! assert!(report.final_residual().unwrap() < 1e-12);
//! ```

pub mod baselines;
pub mod bench;
pub mod error;
pub mod linalg;
pub mod newton;
pub mod problems;
pub mod scan;
pub mod steppers;

pub use error::{Error, Result};
pub use linalg::{Mat, Vector};
pub use newton::{GuessPolicy, NewtonConfig, SolveReport, Trajectory};
pub use problems::OdeProblem;
pub use scan::AffineElement;
pub use steppers::{ButcherTableau, StepperIncrement, StepperKind};
