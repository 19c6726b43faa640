//! Solve, residual-trace and timing-sweep commands with CSV output.
//!
//! Timings cover the solver call only: problem construction, initial guess
//! setup, residual reporting and file I/O happen outside the timed region.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::baselines::{self, PararealConfig};
use crate::error::Error;
use crate::linalg::{blocks_inf_norm, Vector};
use crate::newton::{self, initial_guess, GuessPolicy, NewtonConfig, Trajectory};
use crate::problems::{self, OdeProblem};
use crate::steppers::{self, StepperIncrement};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "PARTIME_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("solver error: {0}")]
    Solver(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) | CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ParallelNewton,
    Parareal,
    Sequential,
}

impl Method {
    pub const NAMES: [&'static str; 3] = ["parallel_newton", "parareal", "sequential"];

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "parallel_newton" => Some(Self::ParallelNewton),
            "parareal" => Some(Self::Parareal),
            "sequential" => Some(Self::Sequential),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ParallelNewton => "parallel_newton",
            Self::Parareal => "parareal",
            Self::Sequential => "sequential",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn lookup_problem(name: &str) -> CliResult<OdeProblem> {
    problems::by_name(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown problem '{name}' (expected one of {})",
            problems::PROBLEM_NAMES.join(", ")
        ))
    })
}

pub fn lookup_stepper(name: &str, problem: &OdeProblem) -> CliResult<StepperIncrement> {
    steppers::by_name(name, problem).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown stepper '{name}' (expected one of {})",
            steppers::STEPPER_NAMES.join(", ")
        ))
    })
}

pub fn lookup_method(name: &str) -> CliResult<Method> {
    Method::from_name(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown method '{name}' (expected one of {})",
            Method::NAMES.join(", ")
        ))
    })
}

pub fn lookup_guess(name: &str) -> CliResult<GuessPolicy> {
    GuessPolicy::from_name(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown guess policy '{name}' (expected one of {})",
            GuessPolicy::NAMES.join(", ")
        ))
    })
}

fn check_dt(problem: &OdeProblem, dt: f64) -> CliResult<usize> {
    problem
        .n_steps(dt)
        .map_err(|e| CliError::Usage(format!("{e}")))
}

/// Rejects method/problem/stepper combinations that cannot run.
pub fn check_combination(method: Method, problem: &OdeProblem, stepper: &StepperIncrement) -> CliResult<()> {
    if method == Method::Parareal {
        if problem.is_stiff() {
            return Err(CliError::Usage(format!(
                "parareal uses an explicit single-step coarse propagator and is not supported on the stiff problem '{}'",
                problem.name()
            )));
        }
        if !stepper.is_explicit() {
            return Err(CliError::Usage(format!(
                "parareal needs an explicit stepper, got '{}'",
                stepper.name()
            )));
        }
    }
    Ok(())
}

/// One solver run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub elapsed: Duration,
}

/// Runs `method` once, timing only the solver call.
pub fn run_method(
    method: Method,
    problem: &OdeProblem,
    stepper: &StepperIncrement,
    dt: f64,
    iterations: usize,
    guess: &Trajectory,
) -> CliResult<Outcome> {
    match method {
        Method::ParallelNewton => {
            let cfg = NewtonConfig::fixed(iterations).with_recording(false);
            let guess = guess.clone();
            let start = Instant::now();
            let report = newton::solve_from(stepper, guess, &cfg)?;
            let elapsed = start.elapsed();
            Ok(Outcome {
                trajectory: report.trajectory,
                iterations: report.iterations_run,
                elapsed,
            })
        }
        Method::Parareal => {
            let n = check_dt(problem, dt)?;
            let cfg = PararealConfig::square_root(n, iterations)?;
            let start = Instant::now();
            let res = baselines::solve_parareal(problem, stepper, stepper, &cfg)?;
            let elapsed = start.elapsed();
            Ok(Outcome {
                trajectory: res.fine,
                iterations,
                elapsed,
            })
        }
        Method::Sequential => {
            let start = Instant::now();
            let traj = baselines::solve_sequential(problem, stepper, dt)?;
            let elapsed = start.elapsed();
            Ok(Outcome {
                trajectory: traj,
                iterations: 0,
                elapsed,
            })
        }
    }
}

/// `||h||_inf` of a trajectory under `stepper`.
pub fn final_residual(traj: &Trajectory, stepper: &StepperIncrement) -> CliResult<f64> {
    Ok(blocks_inf_norm(&newton::residual(traj, stepper)?))
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv<W: Write>(mut out: W, traj: &Trajectory) -> io::Result<()> {
    let mut header = String::from("t");
    for i in 0..traj.dim() {
        header.push_str(&format!(",x_{i}"));
    }
    writeln!(out, "{header}")?;
    for (k, x) in traj.iter_all().enumerate() {
        let mut line = fmt_f64(traj.time(k));
        for v in x.iter() {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// Reads a trajectory CSV as written by [`write_trajectory_csv`]. The first
/// data row is taken as `x_0`.
pub fn read_trajectory_csv<R: BufRead>(input: R, dt: f64) -> CliResult<Trajectory> {
    let mut rows: Vec<(f64, Vector)> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || lineno == 0 && line.starts_with('t') {
            continue;
        }
        let mut fields = line.split(',').map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("line {}: {e}", lineno + 1)))
        });
        let t = fields
            .next()
            .ok_or_else(|| CliError::Usage(format!("line {}: empty row", lineno + 1)))??;
        let x: Vector = fields.collect::<CliResult<Vec<f64>>>()?.into();
        rows.push((t, x));
    }
    let mut rows = rows.into_iter();
    let (t0, x0) = rows
        .next()
        .ok_or_else(|| CliError::Usage("trajectory file has no rows".into()))?;
    let states = rows.map(|(_, x)| x).collect();
    Trajectory::new(x0, states, t0, dt).map_err(|e| CliError::Usage(format!("bad trajectory file: {e}")))
}

pub fn write_residuals_csv<W: Write>(mut out: W, history: &[f64]) -> io::Result<()> {
    writeln!(out, "iteration,residual_inf_norm")?;
    for (k, r) in history.iter().enumerate() {
        writeln!(out, "{k},{}", fmt_f64(*r))?;
    }
    out.flush()
}

/// Where the initial Newton iterate comes from.
#[derive(Debug, Clone)]
pub enum GuessSource {
    Policy(GuessPolicy),
    File(std::path::PathBuf),
}

fn build_guess(source: &GuessSource, problem: &OdeProblem, stepper: &StepperIncrement, dt: f64) -> CliResult<Trajectory> {
    let n = check_dt(problem, dt)?;
    let mut traj = match source {
        GuessSource::Policy(p) => initial_guess(*p, problem, n),
        GuessSource::File(path) => {
            let t = read_trajectory_csv(BufReader::new(File::open(path)?), dt)?;
            if t.n_steps() != n || t.dim() != stepper.dim() {
                return Err(CliError::Usage(format!(
                    "guess file has {} states of dimension {}, expected {n} of dimension {}",
                    t.n_steps(),
                    t.dim(),
                    stepper.dim()
                )));
            }
            t
        }
    };
    traj.x0 = problem.x0().clone();
    traj.t0 = problem.t0();
    traj.dt = dt;
    Ok(traj)
}

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub problem: String,
    pub method: String,
    pub stepper: String,
    pub dt: f64,
    pub iterations: usize,
    pub guess: GuessSource,
}

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub final_residual: f64,
    pub n_states: usize,
    pub iterations: usize,
}

/// Solves once and writes the trajectory CSV (`t, x_0 .. x_{d-1}`).
pub fn cmd_solve(args: &SolveArgs, out_path: &Path) -> CliResult<SolveSummary> {
    let problem = lookup_problem(&args.problem)?;
    let method = lookup_method(&args.method)?;
    let stepper = lookup_stepper(&args.stepper, &problem)?;
    check_combination(method, &problem, &stepper)?;
    if args.iterations == 0 && method != Method::Sequential {
        return Err(CliError::Usage("--iters must be at least 1".into()));
    }
    let guess = build_guess(&args.guess, &problem, &stepper, args.dt)?;
    let outcome = run_method(method, &problem, &stepper, args.dt, args.iterations, &guess)?;
    let residual = final_residual(&outcome.trajectory, &stepper)?;
    write_trajectory_csv(BufWriter::new(File::create(out_path)?), &outcome.trajectory)?;
    Ok(SolveSummary {
        final_residual: residual,
        n_states: outcome.trajectory.n_steps(),
        iterations: outcome.iterations,
    })
}

#[derive(Debug, Clone)]
pub struct ResidualArgs {
    pub problem: String,
    pub stepper: String,
    pub dt: f64,
    pub iterations: usize,
    pub guess: GuessSource,
}

/// Runs parallel Newton and writes `iteration, residual_inf_norm`.
pub fn cmd_residuals(args: &ResidualArgs, out_path: &Path) -> CliResult<Vec<f64>> {
    let problem = lookup_problem(&args.problem)?;
    let stepper = lookup_stepper(&args.stepper, &problem)?;
    if args.iterations == 0 {
        return Err(CliError::Usage("--iters must be at least 1".into()));
    }
    let guess = build_guess(&args.guess, &problem, &stepper, args.dt)?;
    let report = newton::solve_from(&stepper, guess, &NewtonConfig::fixed(args.iterations))?;
    write_residuals_csv(BufWriter::new(File::create(out_path)?), &report.residual_history)?;
    Ok(report.residual_history)
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub problem: String,
    pub methods: Vec<Method>,
    pub stepper: String,
    pub dt_list: Vec<f64>,
    pub repetitions: usize,
    pub iterations: usize,
    pub guess: GuessPolicy,
    pub warmup: usize,
}

impl BenchSpec {
    pub fn validate(&self) -> CliResult<(OdeProblem, StepperIncrement)> {
        let problem = lookup_problem(&self.problem)?;
        let stepper = lookup_stepper(&self.stepper, &problem)?;
        if self.repetitions == 0 {
            return Err(CliError::Usage("--reps must be at least 1".into()));
        }
        if self.iterations == 0 {
            return Err(CliError::Usage("--iters must be at least 1".into()));
        }
        if self.dt_list.is_empty() || self.methods.is_empty() {
            return Err(CliError::Usage("need at least one --dt and one --method".into()));
        }
        for &dt in &self.dt_list {
            check_dt(&problem, dt)?;
        }
        for &m in &self.methods {
            check_combination(m, &problem, &stepper)?;
        }
        Ok((problem, stepper))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub problem: String,
    pub method: Method,
    pub stepper: String,
    pub dt: f64,
    pub n_states: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub final_residual: f64,
    pub iterations: usize,
}

impl BenchRow {
    pub const HEADER: &'static str =
        "problem,method,stepper,dt,n_states,mean_seconds,std_seconds,final_residual,iterations";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.problem,
            self.method,
            self.stepper,
            fmt_f64(self.dt),
            self.n_states,
            fmt_f64(self.mean_seconds),
            fmt_f64(self.std_seconds),
            fmt_f64(self.final_residual),
            self.iterations
        )
    }
}

/// Sample mean and (population) standard deviation.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs one (method, dt) cell.
pub fn bench_cell(
    spec: &BenchSpec,
    problem: &OdeProblem,
    stepper: &StepperIncrement,
    method: Method,
    dt: f64,
) -> CliResult<BenchRow> {
    let n = check_dt(problem, dt)?;
    let mut guess = initial_guess(spec.guess, problem, n);
    guess.dt = dt;
    for _ in 0..spec.warmup {
        run_method(method, problem, stepper, dt, spec.iterations, &guess)?;
    }
    let mut times = Vec::with_capacity(spec.repetitions);
    let mut last = None;
    for _ in 0..spec.repetitions {
        let o = run_method(method, problem, stepper, dt, spec.iterations, &guess)?;
        times.push(o.elapsed.as_secs_f64().max(f64::MIN_POSITIVE));
        last = Some(o);
    }
    let last = last.expect("at least one repetition");
    let (mean, std) = mean_std(&times);
    Ok(BenchRow {
        problem: problem.name().to_string(),
        method,
        stepper: stepper.name().to_string(),
        dt,
        n_states: n,
        mean_seconds: mean,
        std_seconds: std,
        final_residual: final_residual(&last.trajectory, stepper)?,
        iterations: last.iterations,
    })
}

/// Runs every (dt, method) cell, appending one CSV row per cell. Rows
/// already produced are flushed before an error is returned.
pub fn cmd_bench(spec: &BenchSpec, out_path: &Path) -> CliResult<Vec<BenchRow>> {
    let (problem, stepper) = spec.validate()?;
    let mut out = BufWriter::new(File::create(out_path)?);
    writeln!(out, "{}", BenchRow::HEADER)?;
    out.flush()?;
    let mut rows = Vec::new();
    for &dt in &spec.dt_list {
        for &method in &spec.methods {
            let row = bench_cell(spec, &problem, &stepper, method, dt)?;
            writeln!(out, "{}", row.to_csv())?;
            out.flush()?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}
