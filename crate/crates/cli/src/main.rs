//! Batch front end: single runs, parameter sweeps and error-curve fits.
//!
//! Exit codes: 0 success, 2 usage, 3 bad scenario file, 4 infeasible
//! scenario, 5 solver or data failure, 6 output failure, 7 sweep finished
//! with failed values.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isl_core::driver::Algorithm;
use isl_core::output::{self, SweepRow};
use isl_core::par::Execution;
use isl_core::scenario::{fit_error_surrogate, load_scenario};
use isl_core::sweep::{run_config, run_sweep, RunOptions, SweepParam, SweepSpec};
use isl_core::Error;
use log::{info, warn};

#[derive(Parser)]
#[command(
    name = "isl",
    version,
    about = "Time allocation, trajectory and power design for a sensing UAV collecting training data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "proposed", value_parser = parse_algo)]
    algo: Algorithm,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed for the perturbed starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on outer iterations.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Number of starting points; extra ones are random feasible
    /// perturbations of the default start.
    #[arg(long, default_value_t = 1)]
    starts: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one scenario and write its result files.
    Run(RunArgs),
    /// Repeat a run over several values of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// T, gamma_th or p_uav.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Run the values one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Fit `error = a * count^(-b)` to (count, error) pairs.
    Fit {
        /// CSV with two columns, count and error; a header line is optional.
        #[arg(long)]
        pairs: PathBuf,
    },
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Parse(_) | Error::Validation(_) => 3,
        Error::Infeasible { .. } => 4,
        Error::Degenerate(_) | Error::Subproblem(_) | Error::NoFeasibleGridPoint => 5,
        Error::Output(_) => 6,
    }
}

fn options(args: &RunArgs) -> RunOptions {
    RunOptions { algorithm: args.algo, max_iterations: args.max_iters, starts: args.starts, seed: args.seed }
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let cfg = load_scenario(&args.config)?;
    let report = run_config(&cfg, &options(args))?;
    output::write_run(&args.out, &report)?;
    println!("algorithm        {}", report.algorithm.name());
    println!("radar threshold  {:e}", report.sensing_threshold);
    println!("iterations       {} ({:?})", report.iterations.len(), report.termination);
    println!("eta (bound)      {:.9}", report.eta_relaxed);
    println!("eta (exact)      {:.9}", report.eta_original);
    for (k, f) in report.collected_fraction.iter().enumerate() {
        println!("device {:<2} data   {:>6.2}%", k + 1, 100.0 * f);
    }
    println!("wall time        {:.2} s", report.wall_time_s);
    info!("wrote results to {}", args.out.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs, param: SweepParam, values: Vec<f64>, exec: Execution) -> Result<bool, Error> {
    let cfg = load_scenario(&args.config)?;
    let spec = SweepSpec::new(param, values)?;
    let runs = run_sweep(&cfg, &spec, &options(args), exec);
    let mut rows = Vec::with_capacity(runs.len());
    let mut all_ok = true;
    for (&v, r) in spec.values.iter().zip(runs) {
        match r {
            Ok(report) => {
                output::write_run(&args.out.join(format!("{}={v}", param.name())), &report)?;
                rows.push(SweepRow::from_report(param.name(), v, &report));
            }
            Err(e) => {
                warn!("{}={v}: {e}", param.name());
                all_ok = false;
                rows.push(SweepRow::failed(param.name(), v, &e));
            }
        }
    }
    output::write_sweep(&args.out, &rows)?;
    println!("{:>12} {:>14} {:>14}  status", param.name(), "eta", "min radar slack");
    for r in &rows {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.9}"));
        println!("{:>12} {:>14} {:>14}  {}", r.value, fmt(r.eta_final), fmt(r.min_radar_slack), r.status);
    }
    Ok(all_ok)
}

fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>, Error> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let text = std::fs::read_to_string(path).map_err(io)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut pairs = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let parsed = (rec.get(0).and_then(|s| s.parse().ok()), rec.get(1).and_then(|s| s.parse().ok()));
        match parsed {
            (Some(c), Some(e)) => pairs.push((c, e)),
            // tolerate a header line
            _ if i == 0 => {}
            _ => return Err(Error::Parse(format!("{}: line {} is not a (count, error) pair", path.display(), i + 1))),
        }
    }
    Ok(pairs)
}

fn cmd_fit(pairs: &Path) -> Result<(), Error> {
    let (a, b) = fit_error_surrogate(&read_pairs(pairs)?)?;
    println!("a = {a}");
    println!("b = {b}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args).map(|_| true),
        Command::Sweep { run, param, values, sequential } => {
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            cmd_sweep(&run, param, values, exec)
        }
        Command::Fit { pairs } => cmd_fit(&pairs).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(7),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
