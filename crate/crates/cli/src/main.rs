//! Command-line surface: solve instances from files, generate synthetic data,
//! tune the regularization weight, and run benchmark sweeps to CSV.
//!
//! Exit codes: 0 success, 2 usage or parse failure, 3 numeric failure.

mod bench;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use ranksieve::metrics::nonzero_rule;
use ranksieve::model::{Loss, ProblemData, SolveReport, SolverConfig};
use ranksieve::refsolver::splitting_solve;
use ranksieve::sieve::{as_solve, RoundTrace};
use ranksieve::synth::{generate, ErrorDistribution, SynthSpec};
use ranksieve::tuning::{rank_lambda, sqrt_lasso_lambda, LambdaSpec};
use ranksieve::SolverError;

#[derive(Parser)]
#[command(name = "ranksieve", version, about = "Adaptive-sieving solver for rank lasso and square-root lasso")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance given a design matrix and a response vector.
    Solve(SolveArgs),
    /// Generate a synthetic benchmark instance to files.
    Synth(SynthArgs),
    /// Compute the tuning-free regularization weight.
    Tune(TuneArgs),
    /// Run seeded benchmark replications and emit a CSV table.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    /// Wilcoxon pairwise rank loss.
    Rank,
    /// Euclidean norm loss (square-root lasso).
    Sqrt,
}

impl From<LossArg> for Loss {
    fn from(v: LossArg) -> Loss {
        match v {
            LossArg::Rank => Loss::WilcoxonRank,
            LossArg::Sqrt => Loss::EuclideanNorm,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Design matrix file (CSV or RSMX binary).
    matrix: PathBuf,
    /// Response vector file.
    response: PathBuf,
    /// Regularization weight, or "auto" for the tuning-free rule.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long, value_enum, default_value = "rank")]
    loss: LossArg,
    /// Outer KKT tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// Subproblem tolerance.
    #[arg(long)]
    eps_tilde: Option<f64>,
    /// Components added per sieve round.
    #[arg(long)]
    m_add: Option<usize>,
    /// Cap on additions per round.
    #[arg(long)]
    m_cap: Option<usize>,
    /// Solve in the full space instead of sieving.
    #[arg(long)]
    no_sieve: bool,
    /// Solve with the operator-splitting reference solver instead.
    #[arg(long)]
    reference: bool,
    /// Seed for the tuning-free lambda simulation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the per-round trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file supplying any of the above flags; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Flag values that may come from a JSON config file.
#[derive(Deserialize, Default)]
struct SolveFileConfig {
    lambda: Option<String>,
    loss: Option<String>,
    eps: Option<f64>,
    eps_tilde: Option<f64>,
    m_add: Option<usize>,
    m_cap: Option<usize>,
    no_sieve: Option<bool>,
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Experiment id: e1..e6.
    #[arg(long)]
    experiment: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Error distribution: normal:<var> | mn | sqrt2t4 | t4div | cauchy.
    #[arg(long)]
    error: Option<String>,
    /// Compound-symmetry correlation for e3.
    #[arg(long)]
    cov_r: Option<f64>,
    /// Read the e4 design distribution as mean 3 instead of rate 3.
    #[arg(long)]
    e4_mean3: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for X, b, x_true, and the spec JSON.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Write the design matrix in the RSMX binary format.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, value_enum)]
    loss: LossArg,
    /// Design matrix file (rank loss).
    matrix: Option<PathBuf>,
    /// Sample count (sqrt loss).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.1)]
    c: f64,
    #[arg(long, default_value_t = 0.10)]
    alpha0: f64,
    #[arg(long, default_value_t = 1000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// JSON report written by `solve`.
#[derive(Serialize)]
struct SolveJson {
    method: &'static str,
    lambda: f64,
    lambda_seed: Option<u64>,
    n: usize,
    p: usize,
    k_hat: usize,
    #[serde(flatten)]
    report: SolveReport<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Bench(args) => bench::cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<SolverError<f64>> for CliError {
    fn from(e: SolverError<f64>) -> Self {
        match e {
            SolverError::DimensionMismatch { .. } | SolverError::InvalidArgument(_) => {
                CliError::usage(e.to_string())
            }
            _ => CliError::numeric(e.to_string()),
        }
    }
}

fn parse_error_dist(s: &str) -> Result<ErrorDistribution<f64>, CliError> {
    let lower = s.to_ascii_lowercase();
    if let Some(v) = lower.strip_prefix("normal:") {
        let variance: f64 = v
            .parse()
            .map_err(|_| CliError::usage(format!("bad variance in --error {s}")))?;
        if variance <= 0.0 {
            return Err(CliError::usage("variance must be positive"));
        }
        return Ok(ErrorDistribution::Normal { variance });
    }
    match lower.as_str() {
        "mn" | "mixture" => Ok(ErrorDistribution::MixtureNormal),
        "sqrt2t4" => Ok(ErrorDistribution::ScaledStudentT4 {
            scale: 2.0f64.sqrt(),
        }),
        "t4div" | "t4divsqrt2" => Ok(ErrorDistribution::ScaledStudentT4 {
            scale: 1.0 / 2.0f64.sqrt(),
        }),
        "cauchy" => Ok(ErrorDistribution::Cauchy),
        _ => Err(CliError::usage(format!(
            "unknown --error {s}; use normal:<var> | mn | sqrt2t4 | t4div | cauchy"
        ))),
    }
}

pub fn build_spec(
    experiment: &str,
    n: usize,
    p: usize,
    error: Option<&str>,
    cov_r: Option<f64>,
    e4_mean3: bool,
    seed: u64,
) -> Result<SynthSpec<f64>, CliError> {
    let default_err = ErrorDistribution::Normal { variance: 1.0 };
    let err = match error {
        Some(s) => parse_error_dist(s)?,
        None => default_err,
    };
    let spec = match experiment.to_ascii_lowercase().as_str() {
        "e1" => SynthSpec::e1(n, p, err, seed),
        "e2" => SynthSpec::e2(n, p, err, seed),
        "e3" => SynthSpec::e3(n, p, cov_r.unwrap_or(0.5), err, seed),
        "e4" => {
            if e4_mean3 {
                SynthSpec::e4_with_rate(n, p, 1.0 / 3.0, seed)
            } else {
                SynthSpec::e4(n, p, seed)
            }
        }
        "e5" => SynthSpec::e5(n, p, seed),
        "e6" => SynthSpec::e6(n, p, seed),
        other => {
            return Err(CliError::usage(format!(
                "unknown experiment {other}; use e1..e6"
            )))
        }
    };
    Ok(spec)
}

fn cmd_solve(mut args: SolveArgs) -> Result<(), CliError> {
    // config file supplies defaults; explicit flags keep their values
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let file: SolveFileConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if args.lambda == "auto" {
            if let Some(l) = file.lambda {
                args.lambda = l;
            }
        }
        if let Some(loss) = file.loss {
            args.loss = match loss.as_str() {
                "rank" => LossArg::Rank,
                "sqrt" => LossArg::Sqrt,
                other => return Err(CliError::usage(format!("bad loss {other} in config"))),
            };
        }
        args.eps = args.eps.or(file.eps);
        args.eps_tilde = args.eps_tilde.or(file.eps_tilde);
        args.m_add = args.m_add.or(file.m_add);
        args.m_cap = args.m_cap.or(file.m_cap);
        args.no_sieve = args.no_sieve || file.no_sieve.unwrap_or(false);
        if let Some(s) = file.seed {
            args.seed = s;
        }
    }

    let a = io::read_matrix(&args.matrix)?;
    let b = io::read_vector(&args.response)?;
    let loss: Loss = args.loss.into();

    let (lambda, lambda_seed) = if args.lambda == "auto" {
        match loss {
            Loss::WilcoxonRank => (
                rank_lambda(
                    &a,
                    &LambdaSpec {
                        seed: args.seed,
                        ..LambdaSpec::default()
                    },
                ),
                Some(args.seed),
            ),
            Loss::EuclideanNorm => (sqrt_lasso_lambda(a.nrows()), None),
        }
    } else {
        let v: f64 = args
            .lambda
            .parse()
            .map_err(|_| CliError::usage(format!("bad --lambda {}", args.lambda)))?;
        (v, None)
    };

    let data = ProblemData::new(a, b, lambda, loss)?;
    let mut cfg = SolverConfig::<f64> {
        m_add: args.m_add,
        m_cap: args.m_cap,
        no_sieve: args.no_sieve,
        ..SolverConfig::default()
    };
    if let Some(eps) = args.eps {
        cfg.eps = eps;
    }
    if let Some(et) = args.eps_tilde {
        cfg.eps_tilde = et;
    }

    let (report, trace, method): (SolveReport<f64>, Vec<RoundTrace<f64>>, &'static str) =
        if args.reference {
            let out = splitting_solve(&data, 1e-8, 500_000)?;
            if !out.converged {
                return Err(CliError::numeric(format!(
                    "reference solver stopped at residuals {:.3e}/{:.3e} after {} iterations",
                    out.primal_res, out.dual_res, out.iterations
                )));
            }
            let u = data.b() - &data.a().dot(&out.x);
            let alpha = Array1::zeros(data.n());
            let res = ranksieve::sieve::kkt_residual(&data, &out.x, &u, &data.loss().subgradient(&u));
            let report = SolveReport {
                val: out.val,
                x: out.x,
                u,
                alpha,
                eta_kkt: res.rel,
                res_abs: res.abs,
                iters: Default::default(),
                wall_time_total: 0.0,
                wall_time_ssn: 0.0,
            };
            (report, Vec::new(), "splitting")
        } else {
            let out = as_solve(&data, &cfg)?;
            (out.report, out.trace, "adaptive-sieve")
        };

    if let Some(path) = &args.trace {
        write_trace(path, &trace)?;
    }
    let (k_hat, _) = nonzero_rule(&report.x);
    let json = SolveJson {
        method,
        lambda,
        lambda_seed,
        n: data.n(),
        p: data.p(),
        k_hat,
        report,
    };
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| CliError::numeric(format!("serialization failed: {e}")))?;
    match &args.out {
        Some(path) => std::fs::write(path, text + "\n")
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn write_trace(path: &PathBuf, trace: &[RoundTrace<f64>]) -> Result<(), CliError> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
    );
    writeln!(w, "round,support,res_abs,eta_kkt,val,ssn_time").map_err(io::IoError::from)?;
    for t in trace {
        writeln!(
            w,
            "{},{},{:.6e},{:.6e},{:.10e},{:.4}",
            t.round, t.support_size, t.res_abs, t.eta_kkt, t.val, t.ssn_time
        )
        .map_err(io::IoError::from)?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let spec = build_spec(
        &args.experiment,
        args.n,
        args.p,
        args.error.as_deref(),
        args.cov_r,
        args.e4_mean3,
        args.seed,
    )?;
    let inst = generate(&spec)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.out_dir.display())))?;
    let x_path = args.out_dir.join(if args.binary { "X.bin" } else { "X.csv" });
    if args.binary {
        io::write_matrix_binary(&x_path, inst.data.a())?;
    } else {
        io::write_matrix_csv(&x_path, inst.data.a())?;
    }
    io::write_vector_csv(&args.out_dir.join("b.csv"), inst.data.b())?;
    io::write_vector_csv(&args.out_dir.join("x_true.csv"), &inst.x_true)?;
    let spec_json = serde_json::to_string_pretty(&spec)
        .map_err(|e| CliError::numeric(format!("serialization failed: {e}")))?;
    std::fs::write(args.out_dir.join("spec.json"), spec_json + "\n")
        .map_err(|e| CliError::usage(format!("{}: {e}", args.out_dir.display())))?;
    eprintln!(
        "wrote {} plus b.csv, x_true.csv, spec.json in {}",
        x_path.display(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<(), CliError> {
    let lambda = match args.loss {
        LossArg::Rank => {
            let path = args
                .matrix
                .as_ref()
                .ok_or_else(|| CliError::usage("tune --loss rank needs a matrix file"))?;
            let a = io::read_matrix(path)?;
            if a.nrows() < 2 {
                return Err(CliError::usage("rank loss needs at least 2 samples"));
            }
            rank_lambda(
                &a,
                &LambdaSpec {
                    c: args.c,
                    alpha0: args.alpha0,
                    draws: args.draws,
                    seed: args.seed,
                },
            )
        }
        LossArg::Sqrt => {
            let n = args
                .n
                .ok_or_else(|| CliError::usage("tune --loss sqrt needs --n"))?;
            if n == 0 {
                return Err(CliError::usage("--n must be at least 1"));
            }
            sqrt_lasso_lambda(n)
        }
    };
    println!("{lambda:.12}");
    Ok(())
}
