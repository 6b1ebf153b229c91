//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 1 failed checks, 2 usage or configuration error, 3 numeric
//! failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::capacity::{ergodic_gaussian_rate, high_snr_rate, CapacityResult};
use crate::config::{matrix_csv, CliConfig};
use crate::covopt::{self, check_achievability, optimize_cov_pg, sensing_optimal_cov_closed, AchievabilityReport, PgOptions};
use crate::error::DrtError;
use crate::experiments::{self, VerificationReport};
use crate::infomeasures::{build_fblocks, ergodic_sensing_mi, MCEstimate};
use crate::model::{self, RngStream};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "isac-drt", version, about = "Sensing/communication tradeoff experiments")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "ISAC_DRT_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.trials`.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    Scalar,
    Vector,
    Bounds,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    /// Water-filling closed form.
    Wf,
    /// Projected gradient.
    Pg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a verification suite and emit a JSON report.
    Verify {
        suite: Suite,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Maximize the sensing MI over the sample covariance.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        method: Method,
        /// CSV of the optimal covariance (interleaved real,imag).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Communication rates at the sensing-optimal covariance.
    Capacity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the ergodic sensing MI of a scheme in bits.
    Mi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: String,
    },
    /// Sweep the sensing/communication tradeoff and write a CSV.
    Drt {
        #[command(flatten)]
        common: Common,
        /// Overrides `run.points`.
        #[arg(long)]
        points: Option<usize>,
        /// Overrides `run.out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Lib(DrtError),
    Usage(String),
}

impl From<DrtError> for Failure {
    fn from(e: DrtError) -> Self {
        Failure::Lib(e)
    }
}

type CliResult = std::result::Result<i32, Failure>;

struct Loaded {
    cfg: CliConfig,
    seed: u64,
    trials: usize,
}

fn load(common: &Common) -> std::result::Result<Loaded, Failure> {
    let cfg = CliConfig::from_path(&common.config)?;
    Ok(Loaded {
        seed: common.seed.unwrap_or(cfg.run.seed),
        trials: common.trials.unwrap_or(cfg.run.trials),
        cfg,
    })
}

fn write_file(path: &Path, contents: &str) -> std::result::Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, contents: &str) -> std::result::Result<(), Failure> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s
}

fn report_exit(report: &VerificationReport, out: Option<&Path>) -> CliResult {
    emit(out, &to_json(report))?;
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: lhs {} {:?} rhs {} (tol {})", c.name, c.lhs, c.relation, c.rhs, c.tolerance);
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_CHECKS_FAILED })
}

fn verify(suite: Suite, common: &Common, out: Option<&Path>) -> CliResult {
    let l = load(common)?;
    let scn = &l.cfg.scenario;
    let report = match suite {
        Suite::Scalar => experiments::verify_scalar(scn, l.trials, &RngStream::new(l.seed, 0).fork("verify-scalar"))?,
        Suite::Vector => experiments::verify_vector(scn, l.trials, &RngStream::new(l.seed, 0).fork("verify-vector"))?,
        Suite::Bounds => {
            let schemes = l.cfg.schemes()?;
            experiments::verify_bounds(scn, &schemes, l.trials, &RngStream::new(l.seed, 0).fork("verify-bounds"))?
        }
    };
    report_exit(&report, out)
}

#[derive(Serialize)]
struct OptimizeSummary<'a> {
    method: &'a str,
    mi_bits: f64,
    iterations: usize,
    kkt_residual: f64,
    converged: bool,
    achievability: AchievabilityReport,
}

fn optimize(common: &Common, method: Method, out: Option<&Path>) -> CliResult {
    let l = load(common)?;
    let scn = &l.cfg.scenario;
    let fb = build_fblocks(&scn.r_h, scn.n_s, scn.m)?;
    let (label, res) = match method {
        Method::Wf => ("wf", sensing_optimal_cov_closed(scn)?),
        Method::Pg => ("pg", optimize_cov_pg(&fb, scn.t, scn.sigma_s2, scn.p_t, PgOptions::default())?),
    };
    if let Some(p) = out {
        write_file(p, &matrix_csv(res.r_star.matrix()))?;
    }
    let summary = OptimizeSummary {
        method: label,
        mi_bits: res.mi_bits,
        iterations: res.iterations,
        kkt_residual: res.kkt_residual,
        converged: res.converged,
        achievability: check_achievability(&res.r_star, &fb, scn.t, scn.sigma_s2, scn.p_t)?,
    };
    print!("{}", to_json(&summary));
    if !res.converged {
        eprintln!("projected gradient did not converge in {} iterations", res.iterations);
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct CapacityReport {
    seed: u64,
    channel_draws: usize,
    covariance: &'static str,
    sensing_mi_bits: f64,
    gaussian_rate: MCEstimate,
    high_snr: CapacityResult,
}

fn capacity(common: &Common, out: Option<&Path>) -> CliResult {
    let l = load(common)?;
    let scn = &l.cfg.scenario;
    if l.trials == 0 {
        return Err(Failure::Usage("capacity needs at least one channel draw".into()));
    }
    let fb = build_fblocks(&scn.r_h, scn.n_s, scn.m)?;
    let opt = covopt::sensing_optimal_cov(scn, &fb)?;
    let mut g = RngStream::new(l.seed, 0).fork("capacity").rng();
    let channels: Vec<_> = (0..l.trials).map(|_| model::sample_rayleigh(&mut g, scn.n_c, scn.m)).collect();
    let report = CapacityReport {
        seed: l.seed,
        channel_draws: l.trials,
        covariance: "sensing_optimal",
        sensing_mi_bits: opt.mi_bits,
        gaussian_rate: ergodic_gaussian_rate(&channels, &opt.r_star, scn.sigma_c2)?,
        high_snr: high_snr_rate(&channels, &opt.r_star, scn.sigma_c2, scn.t)?,
    };
    emit(out, &to_json(&report))?;
    Ok(EXIT_OK)
}

fn mi(common: &Common, scheme: &str) -> CliResult {
    let l = load(common)?;
    let scheme = l.cfg.scheme(scheme)?;
    let est = ergodic_sensing_mi(&scheme, &l.cfg.scenario, l.trials, &RngStream::new(l.seed, 0).fork("mi"))?;
    println!("{}", est.mean);
    eprintln!("stderr {} over {} trials", est.stderr, est.trials);
    Ok(EXIT_OK)
}

fn drt(common: &Common, points: Option<usize>, out: Option<&Path>) -> CliResult {
    let l = load(common)?;
    let points = points.unwrap_or(l.cfg.run.points);
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| l.cfg.run.out.clone())
        .ok_or_else(|| Failure::Usage("drt needs --out or run.out".into()))?;
    let curve = experiments::drt_curve(&l.cfg.scenario, points, l.trials, &RngStream::new(l.seed, 0).fork("drt"))?;
    write_file(&out, &experiments::curve_csv(&curve))?;
    let bad = experiments::ordering_violations(&curve);
    for p in &bad {
        eprintln!("FAIL alpha {} {}: bound {} above MSE {}", p.alpha, p.scheme, p.distortion_bound, p.empirical_mse);
    }
    Ok(if bad.is_empty() { EXIT_OK } else { EXIT_CHECKS_FAILED })
}

fn dispatch(command: &Command) -> CliResult {
    match command {
        Command::Verify { suite, common, out } => verify(*suite, common, out.as_deref()),
        Command::Optimize { common, method, out } => optimize(common, *method, out.as_deref()),
        Command::Capacity { common, out } => capacity(common, out.as_deref()),
        Command::Mi { common, scheme } => mi(common, scheme),
        Command::Drt { common, points, out } => drt(common, *points, out.as_deref()),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.jobs {
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(Failure::Usage(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            match e {
                DrtError::Config(_) => EXIT_USAGE,
                DrtError::Domain(_) | DrtError::Numeric(_) => EXIT_NUMERIC,
            }
        }
    }
}
