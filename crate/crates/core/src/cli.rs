//! Command-line front end.
//!
//! Every subcommand writes one JSON report
//! `{"schema": "wlra-report/1", "command", "config", "result"}` to `--output`
//! or standard output. Exit codes: 0 success, 1 invalid input or failed run,
//! 2 a completed run with a negative outcome (solve did not converge, repro
//! deviated from a reference value).

use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::homotopy::{
    self, make_path, svd_seed, trace_all, Curve, Cut, EndpointReason,
    TraceConfig,
};
use crate::io::{self, FileError};
use crate::landscape::{
    conjecture_scan, default_start_count, enumerate_solutions, DataDistribution, EnumerateConfig,
    ScanConfig, WeightDistribution, DEFAULT_DEDUP_TOL,
};
use crate::matrix::{Matrix, PseudoWeightGrid};
use crate::repro::run_repro;
use crate::solver::{alternate, SolverConfig};

pub const SCHEMA: &str = "wlra-report/1";

#[derive(Debug, Parser)]
#[command(name = "wlra", version, about = "Weighted low-rank approximation: solve, enumerate, trace")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 is fully sequential. Output does not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One alternating least-squares run.
    Solve(SolveArgs),
    /// Distinct local solutions from dispersed starts.
    Enumerate(EnumerateArgs),
    /// Trace every solution curve along the pseudo-weight path.
    Path(PathArgs),
    /// Cut positions of the pseudo-weight path.
    Cuts(CutsArgs),
    /// Count solutions over random instances.
    Scan(ScanArgs),
    /// Run the built-in reference fixtures and compare.
    Repro(ReproArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Data matrix (CSV, or JSON by extension).
    #[arg(long)]
    pub data: PathBuf,
    /// Squared weights, same shape and formats as the data.
    #[arg(long)]
    pub weights: PathBuf,
    /// Approximation rank p, 1 <= p < min(m, n).
    #[arg(long)]
    pub rank: usize,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Relative change of the product per iteration that counts as converged.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol_rel: self.tol,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Initial left factor A (m x p); defaults to the leading identity columns.
    #[arg(long)]
    pub start: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Number of starts; default 64 for m p <= 4, else 32 m p.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Solutions closer than this times max(1, max |X|) are merged.
    #[arg(long, default_value_t = DEFAULT_DEDUP_TOL)]
    pub rel_tol: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DEDUP_TOL)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = -20.0, allow_hyphen_values = true)]
    pub tau_min: f64,
    #[arg(long, default_value_t = 20.0, allow_hyphen_values = true)]
    pub tau_max: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Also write plot data (`curve_id,tau,rmse`) to this CSV file.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct CutsArgs {
    /// Squared weights.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightKind {
    /// w^2 = k/25, k uniform on 1..=25.
    Grid,
    /// w^2 uniform on (0, 1].
    Uniform,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long, value_enum, default_value_t = WeightKind::Grid)]
    pub weights: WeightKind,
    /// Data entries are integers uniform on data_lo..=data_hi.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub data_lo: i32,
    #[arg(long, default_value_t = 9, allow_hyphen_values = true)]
    pub data_hi: i32,
    #[arg(long, default_value_t = DEFAULT_DEDUP_TOL)]
    pub rel_tol: f64,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Failure of a CLI run; `field` names the offending argument or input.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{field}: {source}")]
    Input { field: &'static str, source: FileError },
    #[error("{field}: {source}")]
    Invalid { field: &'static str, source: Error },
    #[error("{0}")]
    Run(Error),
    #[error("output: {0}")]
    Output(FileError),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

/// Configuration echoed into every report. Excludes `--jobs` and output paths,
/// neither of which affects results.
#[derive(Debug, Serialize)]
struct RunConfig {
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    starts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<TraceConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<String>,
}

impl RunConfig {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            data: None,
            weights: None,
            rank: None,
            starts: None,
            rel_tol: None,
            solver: None,
            trace: None,
            format: None,
            start: None,
        }
    }

    fn problem(seed: u64, p: &ProblemArgs) -> Self {
        Self {
            data: Some(p.data.display().to_string()),
            weights: Some(p.weights.display().to_string()),
            rank: Some(p.rank),
            ..Self::new(seed)
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    result: &'a T,
}

fn render<T: Serialize>(command: &'static str, config: &RunConfig, result: &T) -> String {
    let report = Report {
        schema: SCHEMA,
        command,
        config,
        result,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("reports serialize");
    text.push('\n');
    text
}

fn emit(output: Option<&PathBuf>, text: &str) -> std::result::Result<(), CliError> {
    io::write_text(output.map(PathBuf::as_path), text).map_err(CliError::Output)
}

fn load_matrix(path: &FsPath, field: &'static str) -> std::result::Result<Matrix, CliError> {
    io::read_matrix(path).map_err(|source| CliError::Input { field, source })
}

/// Loads data and weights and validates shapes and rank before any solve.
fn load_problem(p: &ProblemArgs) -> std::result::Result<(Matrix, PseudoWeightGrid), CliError> {
    let x = load_matrix(&p.data, "--data")?;
    let w = PseudoWeightGrid::new(load_matrix(&p.weights, "--weights")?);
    if w.shape() != x.shape() {
        return Err(CliError::Invalid {
            field: "--weights",
            source: Error::Dimension {
                context: "weights vs data",
                expected: format!("{}x{}", x.rows(), x.cols()),
                got: format!("{}x{}", w.shape().0, w.shape().1),
            },
        });
    }
    let bound = x.rows().min(x.cols());
    if p.rank == 0 || p.rank >= bound {
        return Err(CliError::Invalid {
            field: "--rank",
            source: Error::Rank { rank: p.rank, bound },
        });
    }
    if let Some((row, col, value)) = first_negative(&w) {
        return Err(CliError::Invalid {
            field: "--weights",
            source: Error::NegativeWeight { row, col, value },
        });
    }
    Ok((x, w))
}

fn first_negative(w: &PseudoWeightGrid) -> Option<(usize, usize, f64)> {
    let (m, n) = w.shape();
    (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, w.get(i, j)))
        .find(|&(_, _, v)| v < 0.0)
}

fn invalid(field: &'static str) -> impl FnOnce(Error) -> CliError {
    move |source| CliError::Invalid { field, source }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> std::result::Result<i32, CliError> {
    let jobs = cli.jobs.unwrap_or_else(default_jobs).max(1);
    let seed = cli.seed;
    match cli.command {
        Command::Solve(args) => solve(seed, args),
        Command::Enumerate(args) => enumerate(seed, jobs, args),
        Command::Path(args) => path(seed, jobs, args),
        Command::Cuts(args) => cuts_cmd(seed, args),
        Command::Scan(args) => scan(seed, jobs, args),
        Command::Repro(args) => repro(seed, jobs, args),
    }
}

/// Parses `argv`, runs, prints diagnostics to stderr, and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn solve(seed: u64, args: SolveArgs) -> std::result::Result<i32, CliError> {
    let (x, w) = load_problem(&args.problem)?;
    let start = args.start.as_deref().map(|p| load_matrix(p, "--start")).transpose()?;
    let solver = args.solver.config();
    solver.validate().map_err(invalid("--tol/--max-iter"))?;
    let solution =
        alternate(&x, &w, args.problem.rank, start.as_ref(), &solver).map_err(|e| match e {
            Error::Dimension { .. } => CliError::Invalid { field: "--start", source: e },
            e => CliError::Run(e),
        })?;
    let config = RunConfig {
        solver: Some(solver),
        start: args.start.as_ref().map(|p| p.display().to_string()),
        ..RunConfig::problem(seed, &args.problem)
    };
    emit(args.output.as_ref(), &render("solve", &config, &solution))?;
    Ok(if solution.converged { 0 } else { 2 })
}

fn enumerate(seed: u64, jobs: usize, args: EnumerateArgs) -> std::result::Result<i32, CliError> {
    let (x, w) = load_problem(&args.problem)?;
    let cfg = EnumerateConfig {
        starts: Some(args.starts.unwrap_or_else(|| default_start_count(x.rows(), args.problem.rank))),
        seed,
        rel_tol: args.rel_tol,
        solver: args.solver.config(),
        jobs,
    };
    cfg.solver.validate().map_err(invalid("--tol/--max-iter"))?;
    let report = enumerate_solutions(&x, &w, args.problem.rank, &cfg).map_err(|e| match e {
        Error::Config(_) => CliError::Invalid { field: "--starts", source: e },
        e => CliError::Run(e),
    })?;
    let config = RunConfig {
        starts: cfg.starts,
        rel_tol: Some(cfg.rel_tol),
        solver: Some(cfg.solver),
        ..RunConfig::problem(seed, &args.problem)
    };
    emit(args.output.as_ref(), &render("enumerate", &config, &report))?;
    Ok(0)
}

#[derive(Serialize)]
struct CurvePoint<'a> {
    tau: f64,
    rmse: f64,
    wlra: &'a Matrix,
    converged: bool,
}

#[derive(Serialize)]
struct CurveRecord<'a> {
    id: usize,
    seed_tau: f64,
    tau_left: f64,
    tau_right: f64,
    left_reason: EndpointReason,
    right_reason: EndpointReason,
    /// One-based `(row, col)` cuts crossed between samples.
    cut_crossings: Vec<CutRecord>,
    samples: Vec<CurvePoint<'a>>,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct CutRecord {
    row: usize,
    col: usize,
    tau: f64,
}

impl From<&Cut> for CutRecord {
    fn from(c: &Cut) -> Self {
        Self {
            row: c.row + 1,
            col: c.col + 1,
            tau: c.tau,
        }
    }
}

#[derive(Serialize)]
struct PathResult<'a> {
    zbar: f64,
    cuts: Vec<CutRecord>,
    curves: Vec<CurveRecord<'a>>,
    /// Seeds that already lay on an earlier curve.
    skipped_seeds: usize,
}

/// Plot CSV with header `curve_id,tau,rmse`.
pub fn plot_csv(curves: &[Curve]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["curve_id", "tau", "rmse"]).expect("writing to memory");
    for (id, curve) in curves.iter().enumerate() {
        for s in &curve.samples {
            writer
                .write_record([id.to_string(), s.tau.to_string(), s.rmse.to_string()])
                .expect("writing to memory");
        }
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("ascii output")
}

fn path(seed: u64, jobs: usize, args: PathArgs) -> std::result::Result<i32, CliError> {
    let (x, w) = load_problem(&args.problem)?;
    let p = args.problem.rank;
    if !(args.tau_min < 0.0 && args.tau_max > 1.0) {
        return Err(CliError::Invalid {
            field: "--tau-min/--tau-max",
            source: Error::Config(format!(
                "range [{}, {}] must contain [0, 1] in its interior",
                args.tau_min, args.tau_max
            )),
        });
    }
    let trace = TraceConfig {
        tau_min: args.tau_min,
        tau_max: args.tau_max,
        solver: args.solver.config(),
        ..TraceConfig::default()
    };
    trace.solver.validate().map_err(invalid("--tol/--max-iter"))?;
    let hpath = make_path(&w).map_err(invalid("--weights"))?;
    let enum_cfg = EnumerateConfig {
        starts: Some(args.starts.unwrap_or_else(|| default_start_count(x.rows(), p))),
        seed,
        rel_tol: args.rel_tol,
        solver: trace.solver.clone(),
        jobs,
    };
    let report = enumerate_solutions(&x, &w, p, &enum_cfg)?;
    let mut seeds: Vec<(f64, _)> =
        report.solutions.into_iter().map(|b| (0.0, b.solution)).collect();
    seeds.push((1.0, svd_seed(&x, &hpath, p, &trace)?));

    let (curves, skipped) = trace_all(&x, &hpath, &seeds, &trace, args.rel_tol)?;

    let result = PathResult {
        zbar: hpath.zbar,
        cuts: homotopy::cuts(&hpath).iter().map(CutRecord::from).collect(),
        curves: curves
            .iter()
            .enumerate()
            .map(|(id, (seed_tau, c))| CurveRecord {
                id,
                seed_tau: *seed_tau,
                tau_left: c.tau_left,
                tau_right: c.tau_right,
                left_reason: c.left_reason,
                right_reason: c.right_reason,
                cut_crossings: c.cut_crossings.iter().map(CutRecord::from).collect(),
                samples: c
                    .samples
                    .iter()
                    .map(|s| CurvePoint {
                        tau: s.tau,
                        rmse: s.rmse,
                        wlra: &s.solution.wlra,
                        converged: s.solution.converged,
                    })
                    .collect(),
            })
            .collect(),
        skipped_seeds: skipped,
    };
    let config = RunConfig {
        starts: enum_cfg.starts,
        rel_tol: Some(args.rel_tol),
        trace: Some(trace),
        ..RunConfig::problem(seed, &args.problem)
    };
    emit(args.output.as_ref(), &render("path", &config, &result))?;
    if let Some(plot) = &args.plot {
        let only: Vec<Curve> = curves.into_iter().map(|(_, c)| c).collect();
        io::write_text(Some(plot), &plot_csv(&only)).map_err(CliError::Output)?;
    }
    Ok(0)
}

/// Cut list as CSV `row,col,tau` with one-based indices.
pub fn cuts_csv(cuts: &[Cut]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["row", "col", "tau"]).expect("writing to memory");
    for c in cuts {
        writer
            .write_record([(c.row + 1).to_string(), (c.col + 1).to_string(), c.tau.to_string()])
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("writing to memory")).expect("ascii output")
}

#[derive(Serialize)]
struct CutsResult {
    zbar: f64,
    cuts: Vec<CutRecord>,
}

fn cuts_cmd(seed: u64, args: CutsArgs) -> std::result::Result<i32, CliError> {
    let w = PseudoWeightGrid::new(load_matrix(&args.weights, "--weights")?);
    let hpath = make_path(&w).map_err(invalid("--weights"))?;
    let found = homotopy::cuts(&hpath);
    let text = match args.format {
        Format::Csv => cuts_csv(&found),
        Format::Json => {
            let config = RunConfig {
                weights: Some(args.weights.display().to_string()),
                format: Some(args.format),
                ..RunConfig::new(seed)
            };
            let result = CutsResult {
                zbar: hpath.zbar,
                cuts: found.iter().map(CutRecord::from).collect(),
            };
            render("cuts", &config, &result)
        }
    };
    emit(args.output.as_ref(), &text)?;
    Ok(0)
}

fn scan(seed: u64, jobs: usize, args: ScanArgs) -> std::result::Result<i32, CliError> {
    if args.starts == Some(0) {
        return Err(CliError::Invalid {
            field: "--starts",
            source: Error::Config("at least one start is required".into()),
        });
    }
    let mut cfg = ScanConfig::new(args.m, args.n, args.rank, args.trials, seed);
    if let Some(starts) = args.starts {
        cfg.starts_per_trial = starts;
    }
    cfg.data = DataDistribution::Integers {
        lo: args.data_lo,
        hi: args.data_hi,
    };
    cfg.weights = match args.weights {
        WeightKind::Grid => WeightDistribution::Grid { steps: 25 },
        WeightKind::Uniform => WeightDistribution::Uniform,
    };
    cfg.rel_tol = args.rel_tol;
    cfg.jobs = jobs;
    let summary = conjecture_scan(&cfg).map_err(|e| match e {
        Error::Rank { .. } => CliError::Invalid { field: "--rank", source: e },
        Error::Config(_) => CliError::Invalid { field: "--data-lo/--data-hi", source: e },
        e => CliError::Run(e),
    })?;
    emit(args.output.as_ref(), &render("scan", &RunConfig::new(seed), &summary))?;
    Ok(0)
}

fn repro(seed: u64, jobs: usize, args: ReproArgs) -> std::result::Result<i32, CliError> {
    let report = run_repro(seed, jobs)?;
    emit(args.output.as_ref(), &render("repro", &RunConfig::new(seed), &report))?;
    Ok(if report.pass { 0 } else { 2 })
}

