//! `delaystab` command-line front end.
//!
//! Exit codes: 0 stable, 1 unstable, 2 marginal or distribution dependent,
//! 3 numerical failure, 64 malformed input.

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use delaystab_core::acceptance;
use delaystab_core::boundary::{self, TableFormat, TraceOptions};
use delaystab_core::charfun::{RootOptions, MARGINAL_TOLERANCE};
use delaystab_core::criteria::{self, StabilityVerdict, VerdictStatus};
use delaystab_core::distributions::{DelayDistribution, DistributionKind};
use delaystab_core::extremal::{self, DEFAULT_CROSSING_TOLERANCE};
use delaystab_core::simulator::{self, History};
use serde_json::json;

const EXIT_NUMERIC: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "delaystab",
    version,
    about = "Stability of x' = -a x - b ∫ x(t - τ) dη(τ)"
)]
#[command(allow_negative_numbers = true)]
struct Cli {
    /// Worker threads for chart sweeps (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stability verdict for given coefficients and mean delay.
    Check(CheckArgs),
    /// Trace the stability boundary in the (a, E) plane.
    Boundary(BoundaryArgs),
    /// Exact verdict on a grid of (a, E).
    Chart(ChartArgs),
    /// Most unstable two-delay mixture for a discrete kernel.
    Extremal(ExtremalArgs),
    /// Integrate the equation and estimate the decay rate.
    Simulate(SimulateArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct DistArgs {
    /// Distribution spec: a JSON/TOML file, or inline JSON.
    #[arg(long)]
    dist: Option<String>,
    /// Write the distribution actually used to this spec file.
    #[arg(long, value_name = "PATH")]
    emit_spec: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    b: f64,
    /// Mean delay; the distribution is rescaled to it when both are given.
    #[arg(long = "E")]
    e: Option<f64>,
    #[command(flatten)]
    dist: DistArgs,
    /// Real part below which a root counts as marginal.
    #[arg(long, default_value_t = MARGINAL_TOLERANCE)]
    tol_root: f64,
}

#[derive(Args, Debug)]
struct BoundaryArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, default_value_t = 100.0)]
    u_max: f64,
    #[arg(long, default_value_t = 4000)]
    points: usize,
    /// Largest jump in a between neighbouring boundary points.
    #[arg(long, default_value_t = TraceOptions::default().max_da)]
    tol_boundary: f64,
    /// Output file (`.dat` gives gnuplot blocks); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ChartArgs {
    #[command(flatten)]
    dist: DistArgs,
    /// `lo:hi:n`
    #[arg(long, allow_hyphen_values = true)]
    a_range: String,
    /// `lo:hi:n`
    #[arg(long = "E-range")]
    e_range: String,
    #[arg(long, default_value_t = MARGINAL_TOLERANCE)]
    tol_root: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtremalArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    /// Crossing frequency; defaults to the smallest zero of C(ω) + a.
    #[arg(long)]
    omega_s: Option<f64>,
    /// Accepted |C(ω_s) + a| when --omega-s is given.
    #[arg(long, default_value_t = DEFAULT_CROSSING_TOLERANCE)]
    tol_crossing: f64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    b: f64,
    #[arg(long = "E")]
    e: Option<f64>,
    #[command(flatten)]
    dist: DistArgs,
    /// Horizon; defaults to 40 mean delays, at least 10.
    #[arg(long = "T")]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// History as a `t,x` CSV on t ≤ 0; constant 1 when omitted.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Trace CSV; when omitted the trace goes to stdout and the summary to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, default_value_t = acceptance::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn numeric(e: impl ToString) -> CliError {
    CliError::Numeric(e.to_string())
}

type CliResult = Result<u8, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DELAYSTAB_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Check(args) => check(args),
        Command::Boundary(args) => boundary_cmd(args),
        Command::Chart(args) => chart_cmd(args),
        Command::Extremal(args) => extremal_cmd(args),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Selftest(args) => selftest(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Numeric(msg)) = &e;
            eprintln!("delaystab: {msg}");
            ExitCode::from(e.code())
        }
    }
}

fn status_code(status: VerdictStatus) -> u8 {
    match status {
        VerdictStatus::Stable => 0,
        VerdictStatus::Unstable => 1,
        VerdictStatus::Marginal | VerdictStatus::DistributionDependent => 2,
    }
}

fn load_dist(args: &DistArgs) -> Result<Option<DelayDistribution>, CliError> {
    let Some(spec) = &args.dist else {
        return Ok(None);
    };
    let dist = if spec.trim_start().starts_with('{') {
        DelayDistribution::from_json_str(spec)
    } else {
        DelayDistribution::from_path(Path::new(spec))
    }
    .map_err(usage)?;
    Ok(Some(dist))
}

fn require_dist(args: &DistArgs) -> Result<DelayDistribution, CliError> {
    load_dist(args)?.ok_or_else(|| usage("--dist is required"))
}

fn emit_spec(args: &DistArgs, dist: &DelayDistribution) -> Result<(), CliError> {
    if let Some(path) = &args.emit_spec {
        dist.write_spec(path).map_err(usage)?;
    }
    Ok(())
}

fn rescaled(dist: DelayDistribution, e: Option<f64>) -> Result<DelayDistribution, CliError> {
    match e {
        Some(e) => dist.scale_to_mean(e).map_err(usage),
        None => Ok(dist),
    }
}

fn check_finite(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--{name} must be finite")))
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn table_format(path: Option<&Path>) -> TableFormat {
    match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("dat") => TableFormat::Dat,
        _ => TableFormat::Csv,
    }
}

fn parse_range(name: &str, text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || usage(format!("--{name} expects lo:hi:n, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() || (n > 1 && !(hi > lo)) {
        return Err(bad());
    }
    Ok(boundary::linspace(lo, hi, n))
}

fn check(args: CheckArgs) -> CliResult {
    check_finite("a", args.a)?;
    check_finite("b", args.b)?;
    let dist = match load_dist(&args.dist)? {
        Some(d) => Some(rescaled(d, args.e)?),
        None => None,
    };
    let e = match (args.e, &dist) {
        (Some(e), _) => e,
        (None, Some(d)) => d.mean(),
        (None, None) => return Err(usage("either --E or --dist is required")),
    };
    if !(e.is_finite() && e >= 0.0) {
        return Err(usage("--E must be a finite nonnegative number"));
    }
    if let Some(d) = &dist {
        emit_spec(&args.dist, d)?;
    }

    let region = criteria::classify_region(args.a, args.b, e).map_err(numeric)?;
    let mut sufficient: Option<StabilityVerdict> = None;
    let mut exact: Option<StabilityVerdict> = None;
    if let Some(d) = &dist {
        if args.b > 0.0 && args.a.abs() < args.b {
            let (a_n, scaled) = criteria::normalize(args.a, args.b, d).map_err(numeric)?;
            sufficient = criteria::sufficient_test(a_n, &scaled).map_err(numeric)?;
        }
        let opts = RootOptions {
            marginal_tol: args.tol_root,
            ..RootOptions::default()
        };
        exact = Some(criteria::root_verdict(args.a, args.b, d, &opts).map_err(numeric)?);
    }
    let status = exact.as_ref().map_or(region.status, |v| v.status);
    let report = json!({
        "a": args.a,
        "b": args.b,
        "E": e,
        "dist": dist,
        "region": region,
        "sufficient": sufficient,
        "exact": exact,
        "status": status,
    });
    println!("{report}");
    Ok(status_code(status))
}

fn boundary_cmd(args: BoundaryArgs) -> CliResult {
    let dist = require_dist(&args.dist)?;
    emit_spec(&args.dist, &dist)?;
    if !(args.u_max > 0.0 && args.u_max.is_finite()) || args.points < 2 {
        return Err(usage("--u-max must be positive and --points at least 2"));
    }
    let opts = TraceOptions {
        u_max: args.u_max,
        points: args.points,
        max_da: args.tol_boundary,
        ..TraceOptions::default()
    };
    let trace = boundary::trace_boundary_with(&dist, &opts).map_err(numeric)?;
    if trace.degenerate {
        log::warn!("kernel has no Hopf curve; only the zero-root line is written");
    }
    let mut out = output(args.out.as_deref())?;
    boundary::write_boundary(&trace, &mut out, table_format(args.out.as_deref()))
        .and_then(|_| out.flush())
        .map_err(usage)?;
    Ok(0)
}

fn chart_cmd(args: ChartArgs) -> CliResult {
    let dist = require_dist(&args.dist)?;
    emit_spec(&args.dist, &dist)?;
    let a_axis = parse_range("a-range", &args.a_range)?;
    let e_axis = parse_range("E-range", &args.e_range)?;
    let opts = RootOptions {
        marginal_tol: args.tol_root,
        ..RootOptions::default()
    };
    let grid = boundary::chart_with(&dist, &a_axis, &e_axis, &opts).map_err(usage)?;
    let mut out = output(args.out.as_deref())?;
    boundary::write_chart(&grid, &mut out, table_format(args.out.as_deref()))
        .and_then(|_| out.flush())
        .map_err(usage)?;
    let failed = grid.cells.iter().filter(|c| c.outcome.is_err()).count();
    if failed > 0 {
        log::warn!("{failed} chart cells failed");
        return Ok(EXIT_NUMERIC);
    }
    Ok(0)
}

fn extremal_cmd(args: ExtremalArgs) -> CliResult {
    check_finite("a", args.a)?;
    let dist = require_dist(&args.dist)?;
    emit_spec(&args.dist, &dist)?;
    let mix = match dist.kind() {
        DistributionKind::Discrete(m) => m.clone(),
        DistributionKind::Dirac { .. } => match dist.discretize(1).kind() {
            DistributionKind::Discrete(m) => m.clone(),
            _ => unreachable!("discretization yields atoms"),
        },
        _ => {
            return Err(usage(
                "extremal needs a discrete kernel; discretize continuous kernels first",
            ))
        }
    };
    if !(args.a.abs() < 1.0) {
        return Err(usage("--a must satisfy |a| < 1 (normalized b = 1)"));
    }
    let omega_s = match args.omega_s {
        Some(w) => w,
        None => {
            let zeros = criteria::crossing_frequencies(args.a, &dist, criteria::DEFAULT_GRID)
                .map_err(numeric)?;
            match zeros.into_iter().find(|&w| w > 0.0) {
                Some(w) => w,
                None => {
                    println!(
                        "{}",
                        json!({
                            "crossing": null,
                            "message": "no crossing: C(ω) + a has no zero on (0, ω_c], the kernel is stable",
                        })
                    );
                    return Ok(0);
                }
            }
        }
    };
    let reduction = extremal::reduce_to_extremal_traced(&mix, omega_s, args.a, args.tol_crossing)
        .map_err(numeric)?;
    println!(
        "{}",
        serde_json::to_string(&reduction.pair).map_err(numeric)?
    );
    Ok(0)
}

fn simulate_cmd(args: SimulateArgs) -> CliResult {
    check_finite("a", args.a)?;
    check_finite("b", args.b)?;
    let dist = rescaled(require_dist(&args.dist)?, args.e)?;
    emit_spec(&args.dist, &dist)?;
    let history = match &args.history {
        Some(p) => History::from_csv_path(p).map_err(usage)?,
        None => History::default(),
    };
    let t_end = args
        .t_end
        .unwrap_or_else(|| simulator::default_horizon(&dist));
    let dt = args.dt.unwrap_or_else(|| simulator::default_dt(&dist));
    let trace =
        simulator::simulate(args.a, args.b, &dist, &history, t_end, dt).map_err(|e| match e {
            simulator::SimError::InvalidArgument(_) | simulator::SimError::StepTooLarge { .. } => {
                usage(e)
            }
            _ => numeric(e),
        })?;
    {
        let mut out = output(args.out.as_deref())?;
        trace
            .write_csv(&mut out)
            .and_then(|_| out.flush())
            .map_err(usage)?;
    }
    let rate = simulator::decay_rate(&trace);
    let summary = json!({
        "a": args.a,
        "b": args.b,
        "dist": dist,
        "T": t_end,
        "dt": dt,
        "decay_rate": rate.as_ref().ok(),
        "error": rate.as_ref().err().map(|e| e.to_string()),
    });
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    match rate {
        Ok(r) if r < 0.0 => Ok(0),
        Ok(_) => Ok(1),
        Err(_) => Ok(EXIT_NUMERIC),
    }
}

fn selftest(args: SelftestArgs) -> CliResult {
    let outcomes = acceptance::run_all(args.seed);
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    Ok(u8::from(failed > 0))
}
