use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use partime::bench::{
    self, lookup_guess, lookup_method, BenchSpec, CliError, CliResult, GuessSource, ResidualArgs, SolveArgs,
};

#[derive(Debug, Parser)]
#[command(name = "partime", version, about = "Parallel-in-time Newton ODE solver and benchmark harness")]
struct Cli {
    /// Worker threads (defaults to PARTIME_THREADS, then all cores).
    #[arg(long, global = true, env = bench::THREADS_ENV)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one problem and write the trajectory as CSV.
    Solve(SolveCmd),
    /// Time solver methods over a sweep of step sizes.
    Bench(BenchCmd),
    /// Record the Newton residual norm per iteration.
    Residuals(ResidualsCmd),
}

#[derive(Debug, Args)]
struct Common {
    /// logistic | vdp | cartpole | dahlquist | robertson
    #[arg(long)]
    problem: String,
    /// euler | rk4 | backward_euler | trapezoidal
    #[arg(long, default_value = "rk4")]
    stepper: String,
    /// Newton or Parareal iterations.
    #[arg(long = "iters", default_value_t = 11)]
    iterations: usize,
    /// ones | zeros | replicate_x0 | coarse_euler
    #[arg(long, default_value = "ones")]
    guess: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolveCmd {
    #[command(flatten)]
    common: Common,
    /// parallel_newton | parareal | sequential
    #[arg(long, default_value = "parallel_newton")]
    method: String,
    #[arg(long)]
    dt: f64,
    /// Initial Newton iterate as a trajectory CSV; overrides --guess.
    #[arg(long)]
    guess_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ResidualsCmd {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dt: f64,
    #[arg(long)]
    guess_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchCmd {
    #[command(flatten)]
    common: Common,
    /// Comma-separated methods.
    #[arg(long = "method", value_delimiter = ',', default_value = "parallel_newton,parareal,sequential")]
    methods: Vec<String>,
    /// Comma-separated step sizes.
    #[arg(long = "dt", value_delimiter = ',', required = true)]
    dt_list: Vec<f64>,
    #[arg(long = "reps", default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
}

fn guess_source(name: &str, file: Option<PathBuf>) -> CliResult<GuessSource> {
    Ok(match file {
        Some(path) => GuessSource::File(path),
        None => GuessSource::Policy(lookup_guess(name)?),
    })
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Solve(cmd) => {
            let args = SolveArgs {
                problem: cmd.common.problem,
                method: cmd.method,
                stepper: cmd.common.stepper,
                dt: cmd.dt,
                iterations: cmd.common.iterations,
                guess: guess_source(&cmd.common.guess, cmd.guess_file)?,
            };
            let summary = bench::cmd_solve(&args, &cmd.common.out)?;
            println!("final_residual_inf_norm {}", bench::fmt_f64(summary.final_residual));
        }
        Command::Residuals(cmd) => {
            let args = ResidualArgs {
                problem: cmd.common.problem,
                stepper: cmd.common.stepper,
                dt: cmd.dt,
                iterations: cmd.common.iterations,
                guess: guess_source(&cmd.common.guess, cmd.guess_file)?,
            };
            let history = bench::cmd_residuals(&args, &cmd.common.out)?;
            if let Some(last) = history.last() {
                println!("final_residual_inf_norm {}", bench::fmt_f64(*last));
            }
        }
        Command::Bench(cmd) => {
            let spec = BenchSpec {
                problem: cmd.common.problem,
                methods: cmd.methods.iter().map(|m| lookup_method(m)).collect::<CliResult<_>>()?,
                stepper: cmd.common.stepper,
                dt_list: cmd.dt_list,
                repetitions: cmd.repetitions,
                iterations: cmd.common.iterations,
                guess: lookup_guess(&cmd.common.guess)?,
                warmup: cmd.warmup,
            };
            for row in bench::cmd_bench(&spec, &cmd.common.out)? {
                eprintln!(
                    "{:<16} dt={:<8e} N={:<9} mean={:.6e}s std={:.2e}s residual={:.2e}",
                    row.method, row.dt, row.n_states, row.mean_seconds, row.std_seconds, row.final_residual
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let result = match threads {
        0 => Err(CliError::Usage("--threads must be at least 1".into())),
        n => bench::with_threads(n, move || run(cli.command)).and_then(|r| r),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
