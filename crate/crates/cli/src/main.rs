//! `dal` — sparse regularized estimation from the command line.
//!
//! Subcommands: `solve` (one problem), `path` (warm-started grid of
//! regularization levels), `bench` (several solvers on one problem),
//! `synth` (write a synthetic dataset). Exit codes: 0 success,
//! 2 non-convergence, 3 input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use dal_cli::dataset::{
    fmt_full, lambda_from_bar, load_dataset, write_dense_csv, write_libsvm, Dataset, FileFormat,
};
use dal_cli::path::{run_path, PathConfig, PointStatus};
use dal_cli::runner::{run, EtaChoice, RunOutput, RunRequest, SolverKind};
use dal_cli::synth::{synth, SynthConfig};
use dal_cli::traceio::write_trace;
use dal_core::dal::{objective, Problem};
use dal_core::diagnostics::{center_dual_candidate, rdg};
use dal_core::loss::LossFunction;
use dal_core::prox::Regularizer;

#[derive(Parser)]
#[command(name = "dal", version, about = "Sparse regularized estimation solvers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one problem and write trace/summary/weights files.
    Solve(SolveArgs),
    /// Solve a warm-started path of decreasing regularization levels.
    Path(PathArgs),
    /// Run several solvers on the same problem and compare.
    Bench(BenchArgs),
    /// Generate a synthetic classification dataset.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input file; mutually exclusive with --synth.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Input format of --data.
    #[arg(long, default_value = "libsvm")]
    format: String,
    /// Treat the first CSV line as a header.
    #[arg(long)]
    csv_header: bool,
    /// Generate the problem in-process instead of reading a file: "MxN".
    #[arg(long, value_name = "MxN")]
    synth: Option<String>,
    /// Seed for --synth.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct SolveCommon {
    /// Loss applied to predictions: logistic, squared, or sech.
    #[arg(long, default_value = "logistic")]
    loss: String,
    /// Solver: dal, dal-b, fista, or ist.
    #[arg(long, default_value = "dal")]
    solver: String,
    /// Proximity/step choice: aggressive, conservative, or a number.
    #[arg(long, default_value = "aggressive")]
    eta0: String,
    /// Relative duality gap at which a solve counts as converged.
    #[arg(long, default_value_t = 1e-6)]
    rdg_tol: f64,
    /// Outer-iteration budget (first-order solvers: total iterations).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: SolveCommon,
    /// Regularization level relative to `‖Aᵀy‖∞`.
    #[arg(long, default_value_t = 0.1)]
    lambda_bar: f64,
    /// Standardize design columns before solving (off by default here).
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: SolveCommon,
    #[arg(long, default_value_t = 0.5)]
    lambda_bar_max: f64,
    #[arg(long, default_value_t = 0.001)]
    lambda_bar_min: f64,
    #[arg(long, default_value_t = 20)]
    num_points: usize,
    /// Solve every point from zero instead of the previous solution.
    #[arg(long)]
    cold_start: bool,
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    common: SolveCommon,
    #[arg(long, default_value_t = 0.1)]
    lambda_bar: f64,
    /// Comma-separated solvers to compare.
    #[arg(long, default_value = "dal,fista,ist")]
    solvers: String,
    /// Benchmarks standardize by default; this turns it off.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.04)]
    support_frac: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Output format: libsvm or csv.
    #[arg(long, default_value = "libsvm")]
    format: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.cmd {
        Cmd::Solve(args) => cmd_solve(args),
        Cmd::Path(args) => cmd_path(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Synth(args) => cmd_synth(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn parse_format(s: &str) -> Result<FileFormat> {
    match s {
        "libsvm" => Ok(FileFormat::LibsvmText),
        "csv" => Ok(FileFormat::DenseCsv),
        other => bail!("unknown format {other:?} (expected libsvm or csv)"),
    }
}

fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let (m, n) = s
        .split_once('x')
        .ok_or_else(|| anyhow!("--synth expects MxN, got {s:?}"))?;
    let m: usize = m.trim().parse().with_context(|| format!("bad sample count in {s:?}"))?;
    let n: usize = n.trim().parse().with_context(|| format!("bad feature count in {s:?}"))?;
    if m == 0 || n == 0 {
        bail!("--synth dimensions must be positive, got {s:?}");
    }
    Ok((m, n))
}

fn acquire_dataset(args: &DataArgs, standardize: bool) -> Result<Dataset> {
    let mut dataset = match (&args.data, &args.synth) {
        (Some(path), None) => load_dataset(path, parse_format(&args.format)?, args.csv_header)?,
        (None, Some(dims)) => {
            let (m, n) = parse_dims(dims)?;
            synth(&SynthConfig::new(m, n, args.seed)).0
        }
        (Some(_), Some(_)) => bail!("--data and --synth are mutually exclusive"),
        (None, None) => bail!("one of --data or --synth is required"),
    };
    for w in &dataset.warnings {
        eprintln!("warning: {w}");
    }
    if standardize {
        dataset.design = dataset.design.standardized();
    }
    Ok(dataset)
}

fn build_loss(kind: &str, dataset: &Dataset) -> Result<LossFunction> {
    let y = dataset.labels.clone();
    match kind {
        "logistic" => {
            if !dataset.has_binary_labels() {
                bail!("logistic loss needs labels in {{-1,+1}} ({})", dataset.provenance);
            }
            Ok(LossFunction::logistic(y))
        }
        "squared" => Ok(LossFunction::squared(y)),
        "sech" => Ok(LossFunction::sech_squared(y)),
        other => bail!("unknown loss {other:?} (expected logistic, squared, or sech)"),
    }
}

fn build_request(common: &SolveCommon, lambda: f64) -> Result<RunRequest> {
    let solver = SolverKind::parse(&common.solver)?;
    let mut req = RunRequest::new(solver, lambda);
    req.eta0 = EtaChoice::parse(&common.eta0)?;
    req.rdg_tol = common.rdg_tol;
    req.max_iters = common.max_iters.unwrap_or(match solver {
        SolverKind::Dal | SolverKind::DalB => 100,
        _ => 50_000,
    });
    Ok(req)
}

const SUMMARY_HEADER: &str = "solver,converged,iters,f,rdg,nnz,lambda_bar,lambda,bias,seconds";

fn summary_row(
    solver: SolverKind,
    out: &RunOutput,
    lambda_bar: f64,
    lambda: f64,
    seconds: f64,
) -> String {
    let nnz = out.w.iter().filter(|v| **v != 0.0).count();
    format!(
        "{},{},{},{},{},{},{},{},{},{:.4}",
        solver.name(),
        out.converged,
        out.iters,
        fmt_full(out.f),
        fmt_full(out.rdg),
        nnz,
        fmt_full(lambda_bar),
        fmt_full(lambda),
        out.b.map(fmt_full).unwrap_or_default(),
        seconds,
    )
}

fn write_vector(path: &Path, v: &Array1<f64>) -> Result<()> {
    let mut text = String::with_capacity(24 * v.len());
    for x in v.iter() {
        text.push_str(&fmt_full(*x));
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Emits trace/weights/dual files for one solve and returns the summary row.
fn emit_solve_artifacts(
    dir: &Path,
    prefix: &str,
    solver: SolverKind,
    out: &RunOutput,
    lambda_bar: f64,
    lambda: f64,
    seconds: f64,
) -> Result<String> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(format!("{prefix}trace.csv")), write_trace(&out.trace))?;
    write_vector(&dir.join(format!("{prefix}weights.txt")), &out.w)?;
    if let Some(b) = out.b {
        fs::write(dir.join(format!("{prefix}bias.txt")), format!("{}\n", fmt_full(b)))?;
    }
    Ok(summary_row(solver, out, lambda_bar, lambda, seconds))
}

/// Recomputes the final relative duality gap from the solution being
/// written to disk, as a consistency check on the emitted artifacts.
fn recompute_rdg(problem: &Problem, out: &RunOutput) -> Result<f64> {
    let pred = {
        let mut z = problem.design.apply(&out.w);
        if let Some(b) = out.b {
            z.mapv_inplace(|v| v + b);
        }
        z
    };
    let mut candidate = problem.loss.grad(&pred);
    candidate.mapv_inplace(|v| -v);
    if out.b.is_some() {
        candidate = center_dual_candidate(&candidate);
    }
    let f = objective(problem, &out.w, out.b);
    if f == 0.0 {
        return Ok(0.0);
    }
    let info = rdg(&problem.design, &problem.loss, &problem.reg, &out.w, out.b, &candidate)?;
    Ok(info.rdg)
}

fn cmd_solve(args: SolveArgs) -> Result<bool> {
    let dataset = acquire_dataset(&args.data, args.standardize)?;
    let loss = build_loss(&args.common.loss, &dataset)?;
    let lambda = lambda_from_bar(&dataset, args.lambda_bar);
    if !(lambda.is_finite() && lambda > 0.0) {
        bail!("regularization level λ̄·‖Aᵀy‖∞ = {lambda} is not positive");
    }
    let req = build_request(&args.common, lambda)?;
    let problem = Problem::new(dataset.design.clone(), loss, Regularizer::l1(lambda));
    let started = Instant::now();
    let out = run(&problem, &req)?;
    let seconds = started.elapsed().as_secs_f64();

    let dir = &args.common.out_dir;
    let row = emit_solve_artifacts(dir, "", req.solver, &out, args.lambda_bar, lambda, seconds)?;
    let check = recompute_rdg(&problem, &out)?;
    let mut summary = format!("{SUMMARY_HEADER}\n{row}\n");
    summary.push_str(&format!("# rdg_recomputed={}\n", fmt_full(check)));
    fs::write(dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    if !out.converged {
        eprintln!(
            "did not reach rdg {} within {} iterations (best rdg {})",
            req.rdg_tol, req.max_iters, out.rdg
        );
    }
    Ok(out.converged)
}

fn cmd_path(args: PathArgs) -> Result<bool> {
    let dataset = acquire_dataset(&args.data, args.standardize)?;
    let loss = build_loss(&args.common.loss, &dataset)?;
    let template = build_request(&args.common, f64::NAN)?;
    if matches!(template.eta0, EtaChoice::Value(_))
        && matches!(template.solver, SolverKind::Dal | SolverKind::DalB)
    {
        eprintln!("warning: fixed eta0 across a path; named settings rescale with λ");
    }
    let cfg = PathConfig {
        lambda_bar_max: args.lambda_bar_max,
        lambda_bar_min: args.lambda_bar_min,
        num_points: args.num_points,
        warm_start: !args.cold_start,
    };
    cfg.validate();
    let report = run_path(&dataset, &loss, &template, &cfg);

    let dir = &args.common.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("path.csv"), report.render())?;
    for (i, p) in report.points.iter().enumerate() {
        fs::write(dir.join(format!("trace_{i:02}.csv")), write_trace(&p.trace))?;
        if let Some(w) = &p.w {
            write_vector(&dir.join(format!("weights_{i:02}.txt")), w)?;
        }
    }
    print!("{}", report.render());
    for p in &report.points {
        if let PointStatus::Failed(msg) = &p.status {
            eprintln!("point λ̄={} failed: {msg}", p.lambda_bar);
        }
    }
    Ok(report.points.iter().all(|p| p.status == PointStatus::Converged))
}

fn cmd_bench(args: BenchArgs) -> Result<bool> {
    let dataset = acquire_dataset(&args.data, !args.no_standardize)?;
    let loss = build_loss(&args.common.loss, &dataset)?;
    let lambda = lambda_from_bar(&dataset, args.lambda_bar);
    if !(lambda.is_finite() && lambda > 0.0) {
        bail!("regularization level λ̄·‖Aᵀy‖∞ = {lambda} is not positive");
    }
    let solvers: Vec<SolverKind> = args
        .solvers
        .split(',')
        .map(|s| SolverKind::parse(s.trim()))
        .collect::<Result<_>>()?;
    if solvers.is_empty() {
        bail!("--solvers list is empty");
    }

    let dir = &args.common.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut summary = format!("{SUMMARY_HEADER}\n");
    let mut all_converged = true;
    for solver in solvers {
        let mut common = args.common.clone();
        common.solver = solver.name().to_string();
        let req = build_request(&common, lambda)?;
        let problem = Problem::new(dataset.design.clone(), loss.clone(), Regularizer::l1(lambda));
        let started = Instant::now();
        let out = run(&problem, &req)?;
        let seconds = started.elapsed().as_secs_f64();
        let prefix = format!("{}_", solver.name());
        let row =
            emit_solve_artifacts(dir, &prefix, solver, &out, args.lambda_bar, lambda, seconds)?;
        summary.push_str(&row);
        summary.push('\n');
        all_converged &= out.converged;
    }
    fs::write(dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(all_converged)
}

fn cmd_synth(args: SynthArgs) -> Result<bool> {
    if args.m == 0 || args.n == 0 {
        bail!("--m and --n must be positive");
    }
    if !(0.0..=1.0).contains(&args.support_frac) {
        bail!("--support-frac must lie in [0,1]");
    }
    if args.noise < 0.0 {
        bail!("--noise must be nonnegative");
    }
    let cfg = SynthConfig::new(args.m, args.n, args.seed)
        .with_support_frac(args.support_frac)
        .with_noise(args.noise);
    let (dataset, beta) = synth(&cfg);
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    match parse_format(&args.format)? {
        FileFormat::LibsvmText => write_libsvm(&args.out, &dataset)?,
        FileFormat::DenseCsv => write_dense_csv(&args.out, &dataset)?,
    }
    write_vector(&args.out.with_extension("beta.txt"), &beta)?;
    eprintln!(
        "wrote {} ({} samples, {} features, {} true nonzeros)",
        args.out.display(),
        dataset.samples(),
        dataset.features(),
        beta.iter().filter(|v| **v != 0.0).count()
    );
    Ok(true)
}
