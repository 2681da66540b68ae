//! `sensel` command-line front-end.
//!
//! Precedence for every setting: command-line flag (or its environment
//! variable) over config file over built-in default. The effective
//! configuration is printed to standard error on every run.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::barrier_solver::SolverParams;
use crate::error::{Error, Result};
use crate::exchange;
use crate::experiments::{self, ExperimentConfig, TrialStats};
use crate::model::{MeasurementMatrix, Partition};
use crate::strategies::{self, Strategy};

pub const SEED_ENV: &str = "SENSEL_SEED";

#[derive(Debug, Parser)]
#[command(name = "sensel", version, about = "Centralized and decentralized sensor selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random instance as A1.csv and A2.csv.
    Gen(GenArgs),
    /// Run one strategy on a matrix and print the outcome as JSON.
    Solve(SolveArgs),
    /// Run a two-node session and print the outcome and transcript as JSON.
    Session(SessionArgs),
    /// Monte-Carlo trials of all configured strategies.
    Experiment(ExperimentArgs),
    /// Trials repeated for several numbers of shared vectors.
    #[command(name = "sweep-n")]
    SweepN(SweepArgs),
}

#[derive(Debug, Args)]
pub struct InstanceFlags {
    /// Experiment config JSON; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "sigma-corr")]
    pub sigma_corr: Option<f64>,
    /// Number of correlated (node 1, node 2) row pairs.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub instance: InstanceFlags,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct SolverFlags {
    #[arg(long)]
    pub kappa0: Option<f64>,
    #[arg(long = "kappa-shrink")]
    pub kappa_shrink: Option<f64>,
    #[arg(long = "outer-tol")]
    pub outer_tol: Option<f64>,
    #[arg(long = "max-outer")]
    pub max_outer: Option<usize>,
    #[arg(long = "max-inner")]
    pub max_inner: Option<usize>,
    #[arg(long = "newton-tol")]
    pub newton_tol: Option<f64>,
}

impl SolverFlags {
    fn apply(&self, p: &mut SolverParams) {
        if let Some(v) = self.kappa0 {
            p.kappa0 = v;
        }
        if let Some(v) = self.kappa_shrink {
            p.kappa_shrink = v;
        }
        if let Some(v) = self.outer_tol {
            p.outer_tol = v;
        }
        if let Some(v) = self.max_outer {
            p.max_outer = v;
        }
        if let Some(v) = self.max_inner {
            p.max_inner = v;
        }
        if let Some(v) = self.newton_tol {
            p.newton_tol = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Headerless CSV; one file holds [A1; A2], two files hold A1 and A2.
    #[arg(long, required = true, num_args = 1..=2)]
    pub matrix: Vec<PathBuf>,
    #[arg(long)]
    pub k: usize,
    /// centralized | naive | fdm | lpm
    #[arg(long)]
    pub strategy: String,
    /// Number of shared vectors N.
    #[arg(long, default_value_t = 5)]
    pub shared: usize,
    /// JSON file with solver parameters.
    #[arg(long = "solver-config")]
    pub solver_config: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Where to write the shared-vector message.
    #[arg(long = "message-out")]
    pub message_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Per-trial CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary CSV output.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Number of shared vectors N.
    #[arg(long)]
    pub shared: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunFlags,
    /// Comma-separated shared-vector counts; falls back to the config's n_sweep.
    #[arg(long = "n-list", value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { 2 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Gen(args) => gen(args),
        Command::Solve(args) => solve(args),
        Command::Session(args) => session(args),
        Command::Experiment(args) => experiment(args),
        Command::SweepN(args) => sweep(args),
    }
    .map_err(Failure::from)
}

fn report_effective<T: Serialize>(label: &str, value: &T) -> Result<()> {
    eprintln!("effective {label}: {}", serde_json::to_string(value)?);
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn gen(args: GenArgs) -> Result<()> {
    let f = &args.instance;
    let mut cfg = load_config(f.config.as_deref())?;
    let pairs_given = f.pairs.is_some() || f.config.is_some();
    if let Some(v) = f.m {
        cfg.m = v;
    }
    if let Some(v) = f.n {
        cfg.n = v;
    }
    if let Some(v) = f.sigma_corr {
        cfg.sigma_corr = v;
    }
    if let Some(v) = f.pairs {
        cfg.num_correlated_pairs = v;
    }
    if let Some(v) = f.seed {
        cfg.master_seed = v;
    }
    if !pairs_given {
        cfg.num_correlated_pairs = cfg.num_correlated_pairs.min(cfg.m / 2);
    }
    if cfg.m % 2 != 0 || cfg.n == 0 || cfg.m / 2 < cfg.n {
        return Err(Error::Config(format!(
            "need even m with 1 <= n <= m/2, got m = {}, n = {}",
            cfg.m, cfg.n
        )));
    }
    if cfg.num_correlated_pairs > cfg.m / 2 || !(0.0..=1.0).contains(&cfg.sigma_corr) {
        return Err(Error::Config(
            "pairs must not exceed m/2 and sigma-corr must lie in [0, 1]".into(),
        ));
    }
    report_effective(
        "gen config",
        &serde_json::json!({
            "m": cfg.m,
            "n": cfg.n,
            "sigma_corr": cfg.sigma_corr,
            "num_correlated_pairs": cfg.num_correlated_pairs,
            "seed": cfg.master_seed,
            "out_dir": args.out_dir,
        }),
    )?;
    let p = experiments::generate_instance(&cfg, cfg.master_seed)?;
    fs::create_dir_all(&args.out_dir)?;
    p.a1().write_csv(args.out_dir.join("A1.csv"))?;
    p.a2().write_csv(args.out_dir.join("A2.csv"))?;
    Ok(())
}

fn solver_params(file: Option<&Path>, flags: &SolverFlags) -> Result<SolverParams> {
    let mut params = match file {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SolverParams::default(),
    };
    flags.apply(&mut params);
    params.validate()?;
    Ok(params)
}

fn load_matrix(paths: &[PathBuf]) -> Result<MeasurementMatrix> {
    let read = |p: &PathBuf| {
        MeasurementMatrix::read_csv(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("{}: {io}", p.display())),
            other => Error::Config(format!("{}: {other}", p.display())),
        })
    };
    match paths {
        [one] => read(one),
        [a1, a2] => Ok(Partition::new(read(a1)?, read(a2)?)?.stacked()),
        _ => Err(Error::Config("expected one or two --matrix files".into())),
    }
}

#[derive(Serialize)]
struct SolveReport<'a> {
    strategy: Strategy,
    k: usize,
    shared: usize,
    matrix: &'a [PathBuf],
    solver: &'a SolverParams,
}

fn prepare_solve(args: &SolveArgs) -> Result<(Strategy, MeasurementMatrix, SolverParams)> {
    let strategy: Strategy = args.strategy.parse()?;
    let params = solver_params(args.solver_config.as_deref(), &args.solver)?;
    report_effective(
        "solve config",
        &SolveReport {
            strategy,
            k: args.k,
            shared: args.shared,
            matrix: &args.matrix,
            solver: &params,
        },
    )?;
    let a = load_matrix(&args.matrix)?;
    Ok((strategy, a, params))
}

fn solve(args: SolveArgs) -> Result<()> {
    let (strategy, a, params) = prepare_solve(&args)?;
    let outcome = if strategy == Strategy::Centralized {
        strategies::select_centralized(&a, args.k, &params)?
    } else {
        let p = Partition::split(&a)?;
        strategies::check_decentralized_budget(&p, args.k)?;
        match strategy {
            Strategy::NaiveDecentralized => strategies::select_naive(&p, args.k, &params)?,
            Strategy::Fdm => strategies::select_fdm(&p, args.k, args.shared, &params)?,
            _ => strategies::select_lpm(&p, args.k, args.shared, &params)?,
        }
    };
    println!("{}", serde_json::to_string_pretty(&outcome)?);
    Ok(())
}

fn session(args: SessionArgs) -> Result<()> {
    let (strategy, a, params) = prepare_solve(&args.solve)?;
    let p = Partition::split(&a)?;
    let (outcome, transcript) =
        exchange::run_session(&p, args.solve.k, args.solve.shared, strategy, &params)?;
    if let (Some(path), Some(bytes)) = (&args.message_out, &transcript.message) {
        fs::write(path, bytes)?;
    }
    let report = serde_json::json!({ "outcome": outcome, "transcript": transcript });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run_config(run: &RunFlags) -> Result<ExperimentConfig> {
    let mut cfg = load_config(run.config.as_deref())?;
    if let Some(v) = run.trials {
        cfg.trials = v;
    }
    if let Some(v) = run.seed {
        cfg.master_seed = v;
    }
    run.solver.apply(&mut cfg.solver);
    Ok(cfg)
}

fn write_outputs(run: &RunFlags, stats: &TrialStats) -> Result<()> {
    if let Some(path) = &run.out {
        experiments::write_trials_csv(&stats.records, fs::File::create(path)?)?;
    }
    if let Some(path) = &run.summary {
        experiments::write_summary_csv(&stats.summaries, fs::File::create(path)?)?;
    }
    let mut out = Vec::new();
    experiments::write_summary_csv(&stats.summaries, &mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    for s in stats.summaries.iter().filter(|s| s.strategy != Strategy::Centralized) {
        eprintln!(
            "{} N={}: L above centralized rounding in {} of {} trials",
            s.strategy, s.n_shared, s.exceeds_centralized, s.trials_ok
        );
    }
    if stats.inclusion_violations > 0 {
        eprintln!(
            "warning: {} records with f_cen(z*_dec) > U_cen (max excess {:e})",
            stats.inclusion_violations, stats.max_inclusion_excess
        );
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = run_config(&args.run)?;
    if let Some(v) = args.shared {
        cfg.n_shared = v;
    }
    cfg.validate()?;
    report_effective("experiment config", &cfg)?;
    eprintln!("effective jobs: {}", jobs_label(args.run.jobs));
    let stats = experiments::with_jobs(args.run.jobs, || experiments::run_trials(&cfg))??;
    write_outputs(&args.run, &stats)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = run_config(&args.run)?;
    let n_values = match args.n_list.clone().or_else(|| cfg.n_sweep.clone()) {
        Some(v) if !v.is_empty() => v,
        _ => return Err(Error::Config("sweep-n needs --n-list or n_sweep in the config".into())),
    };
    cfg.n_shared = n_values[0];
    cfg.n_sweep = Some(n_values.clone());
    cfg.validate()?;
    report_effective("sweep config", &cfg)?;
    eprintln!("effective jobs: {}", jobs_label(args.run.jobs));
    let stats =
        experiments::with_jobs(args.run.jobs, || experiments::sweep_shared_vectors(&cfg, &n_values))??;
    write_outputs(&args.run, &stats)
}

fn jobs_label(jobs: Option<usize>) -> String {
    jobs.map_or_else(|| format!("{} (all cores)", rayon::current_num_threads()), |j| j.to_string())
}
