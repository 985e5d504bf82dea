//! Benchmark driver for the window-parallel exponential-integrator solver.
//!
//! `expparadiag run <preset>` executes one of the packaged experiments and
//! writes its run record under the output directory; `list` shows the
//! catalog, `timing` sweeps a wall-clock scaling grid, and `alpha-opt`
//! exposes the damping-factor search directly.
//!
//! Exit codes: 0 when every leg converged (or matched its certificate),
//! 1 on I/O trouble, 2 when a solve stopped without converging, 3 on
//! configuration errors.

mod config;
mod presets;
mod runner;
mod timing;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use expparadiag::analysis::{alpha_opt_search, AlphaSearchConfig};

use crate::runner::RunError;

#[derive(Parser)]
#[command(
    name = "expparadiag",
    version,
    about = "Window-parallel exponential integrator benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset experiment and write its CSV record.
    Run(RunArgs),
    /// List the preset catalog.
    List,
    /// Time GMRES and BiCGStab over a scaling grid file.
    Timing(TimingArgs),
    /// Search for the tuned damping factor of a diffusion problem.
    AlphaOpt(AlphaOptArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Preset id; see `expparadiag list`.
    preset: String,
    /// Config file of `key = value` lines, applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $EXPPARADIAG_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solve the diagonalized time blocks on a thread pool.
    #[arg(long)]
    parallel_time: bool,
    /// Worker threads for --parallel-time (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,

    /// Diffusion coefficient (complex literals like `2i` or `0.1+2i` work).
    #[arg(long)]
    a: Option<String>,
    /// Reaction coefficient.
    #[arg(long)]
    c: Option<String>,
    /// Advection speed.
    #[arg(long)]
    b: Option<String>,
    /// Fourth-order coefficient.
    #[arg(long)]
    beta: Option<String>,
    /// Interface width of the bistable problems.
    #[arg(long)]
    epsilon: Option<String>,
    /// Exponent of the power reaction.
    #[arg(long)]
    power: Option<String>,
    /// Mesh subdivisions per axis.
    #[arg(long)]
    resolution: Option<String>,
    /// Time step.
    #[arg(long)]
    dt: Option<String>,
    /// Final time.
    #[arg(long = "T")]
    t_final: Option<String>,
    /// Number of time levels (overrides T/dt rounding).
    #[arg(long)]
    n_time: Option<String>,
    /// Damping factor in [0, 1), or `opt` to search.
    #[arg(long)]
    alpha: Option<String>,
    /// Multistep order (1 through 6).
    #[arg(long)]
    order: Option<String>,
    /// richardson, gmres, bicgstab, imex, or newton.
    #[arg(long)]
    solver: Option<String>,
    /// Jacobian slopes: time-averaged or initial-state.
    #[arg(long)]
    jacobian: Option<String>,
    /// exact, pade2, or pade3.
    #[arg(long)]
    propagator: Option<String>,
    /// Initial profile id.
    #[arg(long)]
    initial: Option<String>,
    /// Solver tolerance.
    #[arg(long)]
    tol: Option<String>,
    /// Iteration cap.
    #[arg(long)]
    maxit: Option<String>,
    /// Seed for the sampled slope check.
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Args)]
struct TimingArgs {
    /// Grid file; see the timing module docs for the accepted keys.
    grid: PathBuf,
    /// Output directory (default: $EXPPARADIAG_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solve the diagonalized time blocks on a thread pool.
    #[arg(long)]
    parallel_time: bool,
    /// Worker threads for --parallel-time (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct AlphaOptArgs {
    /// Diffusion coefficient.
    #[arg(long)]
    a: f64,
    /// Reaction coefficient.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    /// Final time.
    #[arg(long = "T")]
    t_final: f64,
    /// Interior grid points on the unit interval.
    #[arg(long)]
    nx: usize,
    /// Smallest candidate the halving search may try.
    #[arg(long)]
    x_tol: Option<f64>,
    /// Cap on objective evaluations.
    #[arg(long)]
    max_evals: Option<usize>,
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("EXPPARADIAG_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// The diagonalized block solves parallelize across rayon workers; a
/// single-threaded pool keeps default runs deterministic in their timing
/// footprint and honest about per-core cost.
fn init_pool(parallel: bool, jobs: Option<usize>) -> Result<(), RunError> {
    let threads = if parallel { jobs.unwrap_or(0) } else { 1 };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))
}

fn exit_for(err: &RunError) -> ExitCode {
    match err {
        RunError::Config(_) => ExitCode::from(3),
        RunError::Io(_) => ExitCode::from(1),
    }
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    let Some(mut preset) = crate::presets::find(&args.preset) else {
        eprintln!(
            "error: unknown preset '{}'; run `expparadiag list`",
            args.preset
        );
        return ExitCode::from(3);
    };

    let mut staged: Vec<(String, String)> = Vec::new();
    if let Some(path) = &args.config {
        match crate::config::read_config_file(path) {
            Ok(pairs) => staged.extend(pairs),
            Err(e) => {
                eprintln!("error: {}", e.0);
                return ExitCode::from(3);
            }
        }
    }
    for (key, value) in flag_overrides(args) {
        staged.push((key.to_string(), value));
    }

    if let Err(e) = preset
        .config
        .apply_overrides(staged.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    {
        eprintln!("error: {}", e.0);
        return ExitCode::from(3);
    }
    if let Err(e) = preset.config.validate() {
        eprintln!("error: {}", e.0);
        return ExitCode::from(3);
    }
    if let Err(e) = init_pool(args.parallel_time, args.jobs) {
        eprintln!("error: {e}");
        return exit_for(&e);
    }

    match crate::runner::run_preset(&preset, &out_dir(&args.out)) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn flag_overrides(args: &RunArgs) -> Vec<(&'static str, String)> {
    let mut pairs = Vec::new();
    let mut push = |key: &'static str, value: &Option<String>| {
        if let Some(v) = value {
            pairs.push((key, v.clone()));
        }
    };
    push("a", &args.a);
    push("c", &args.c);
    push("b", &args.b);
    push("beta", &args.beta);
    push("epsilon", &args.epsilon);
    push("power", &args.power);
    push("resolution", &args.resolution);
    push("dt", &args.dt);
    push("T", &args.t_final);
    push("n_time", &args.n_time);
    push("alpha", &args.alpha);
    push("order", &args.order);
    push("solver", &args.solver);
    push("jacobian", &args.jacobian);
    push("propagator", &args.propagator);
    push("initial", &args.initial);
    push("tol", &args.tol);
    push("maxit", &args.maxit);
    push("seed", &args.seed);
    pairs
}

fn cmd_list() -> ExitCode {
    let catalog = crate::presets::catalog();
    let width = catalog.iter().map(|p| p.id.len()).max().unwrap_or(0);
    for preset in &catalog {
        println!("{:width$}  {}", preset.id, preset.description);
    }
    ExitCode::SUCCESS
}

fn cmd_timing(args: &TimingArgs) -> ExitCode {
    if let Err(e) = init_pool(args.parallel_time, args.jobs) {
        eprintln!("error: {e}");
        return exit_for(&e);
    }
    match crate::timing::run_timing(&args.grid, &out_dir(&args.out)) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn cmd_alpha_opt(args: &AlphaOptArgs) -> ExitCode {
    let h = 1.0 / (args.nx as f64 + 1.0);
    let mut search = AlphaSearchConfig::new(args.a, args.c, args.t_final, h);
    if let Some(x_tol) = args.x_tol {
        search = search.with_x_tol(x_tol);
    }
    if let Some(max_evals) = args.max_evals {
        search = search.with_max_evals(max_evals);
    }
    match alpha_opt_search(&search) {
        Ok(result) => {
            println!(
                "alpha_opt = {:.6e} (objective {:.6e}, {} evaluations)",
                result.alpha_opt,
                result.objective,
                result.evaluations.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(&args),
        Command::List => cmd_list(),
        Command::Timing(args) => cmd_timing(&args),
        Command::AlphaOpt(args) => cmd_alpha_opt(&args),
    }
}
