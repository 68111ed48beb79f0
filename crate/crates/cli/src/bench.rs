//! Seeded benchmark replications over the synthetic experiment families,
//! run on a worker pool and emitted as a CSV table with one row per
//! replication plus a mean row.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::Args;

use ranksieve::metrics::{evaluate, MetricsReport};
use ranksieve::model::{IterCounts, Loss, SolverConfig};
use ranksieve::sieve::as_solve;
use ranksieve::synth::generate;
use ranksieve::tuning::{rank_lambda, sqrt_lasso_lambda, LambdaSpec};

use crate::{build_spec, CliError};

#[derive(Args)]
pub struct BenchArgs {
    /// Experiment id: e1..e6.
    #[arg(long)]
    experiment: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Error distribution override (see synth --error).
    #[arg(long)]
    error: Option<String>,
    /// Compound-symmetry correlation for e3.
    #[arg(long)]
    cov_r: Option<f64>,
    #[arg(long)]
    e4_mean3: bool,
    /// Number of replications; replication i uses seed base_seed + i.
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run a full-space solve per replication and report the
    /// correct-component ratio of the sieve support.
    #[arg(long)]
    with_cr: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct RepRow {
    seed: u64,
    metrics: Option<(MetricsReport<f64>, IterCounts, f64, f64)>,
    error: Option<String>,
}

pub fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    // validate the spec once before spawning workers
    build_spec(
        &args.experiment,
        args.n,
        args.p,
        args.error.as_deref(),
        args.cov_r,
        args.e4_mean3,
        args.seed,
    )?;

    let threads = std::env::var("RANKSIEVE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1)
        })
        .min(args.reps);

    let rows: Mutex<Vec<Option<RepRow>>> = Mutex::new((0..args.reps).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= args.reps {
                    break;
                }
                let row = run_replication(&args, i);
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let rows: Vec<RepRow> = rows
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every replication index filled"))
        .collect();

    let mut csv = String::new();
    let cr_col = if args.with_cr { ",cr" } else { "" };
    csv.push_str(&format!(
        "rep,seed,eta_kkt,val,l1,l2,me,fp,fn,t,it_as,it_ppa,it_alm,it_ssn,t_ssn{cr_col}\n"
    ));
    let mut ok = 0usize;
    let mut sums = vec![0.0f64; 13];
    let mut cr_sum = 0.0;
    let mut cr_count = 0usize;
    for (i, row) in rows.iter().enumerate() {
        match &row.metrics {
            Some((m, iters, t, t_ssn)) => {
                ok += 1;
                let vals = [
                    m.eta_kkt,
                    m.val,
                    m.l1_err,
                    m.l2_err,
                    m.me,
                    m.fp as f64,
                    m.fn_ as f64,
                    *t,
                    iters.sieve as f64,
                    iters.ppa as f64,
                    iters.alm as f64,
                    iters.ssn as f64,
                    *t_ssn,
                ];
                for (s, v) in sums.iter_mut().zip(vals) {
                    *s += v;
                }
                let cr = match m.cr {
                    Some(c) => {
                        cr_sum += c;
                        cr_count += 1;
                        format!(",{c:.4}")
                    }
                    None if args.with_cr => ",NA".to_string(),
                    None => String::new(),
                };
                csv.push_str(&format!(
                    "{i},{},{:.3e},{:.6},{:.4},{:.4},{:.4},{},{},{:.3},{},{},{},{},{:.3}{cr}\n",
                    row.seed,
                    m.eta_kkt,
                    m.val,
                    m.l1_err,
                    m.l2_err,
                    m.me,
                    m.fp,
                    m.fn_,
                    t,
                    iters.sieve,
                    iters.ppa,
                    iters.alm,
                    iters.ssn,
                    t_ssn
                ));
            }
            None => {
                let na = if args.with_cr { ",NA" } else { "" };
                csv.push_str(&format!(
                    "{i},{},NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA,NA{na}  # {}\n",
                    row.seed,
                    row.error.as_deref().unwrap_or("failed")
                ));
            }
        }
    }
    if ok > 0 {
        let k = ok as f64;
        let cr = if args.with_cr {
            if cr_count > 0 {
                format!(",{:.4}", cr_sum / cr_count as f64)
            } else {
                ",NA".to_string()
            }
        } else {
            String::new()
        };
        csv.push_str(&format!(
            "mean,,{:.3e},{:.6},{:.4},{:.4},{:.4},{:.2},{:.2},{:.3},{:.1},{:.1},{:.1},{:.1},{:.3}{cr}\n",
            sums[0] / k,
            sums[1] / k,
            sums[2] / k,
            sums[3] / k,
            sums[4] / k,
            sums[5] / k,
            sums[6] / k,
            sums[7] / k,
            sums[8] / k,
            sums[9] / k,
            sums[10] / k,
            sums[11] / k,
            sums[12] / k
        ));
    }

    match &args.out {
        Some(path) => std::fs::write(path, &csv)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }

    if ok * 5 >= args.reps * 4 {
        Ok(())
    } else {
        Err(CliError::numeric(format!(
            "only {ok} of {} replications succeeded",
            args.reps
        )))
    }
}

fn run_replication(args: &BenchArgs, i: usize) -> RepRow {
    let seed = args.seed + i as u64;
    let spec = match build_spec(
        &args.experiment,
        args.n,
        args.p,
        args.error.as_deref(),
        args.cov_r,
        args.e4_mean3,
        seed,
    ) {
        Ok(s) => s,
        Err(e) => {
            return RepRow {
                seed,
                metrics: None,
                error: Some(e.message),
            }
        }
    };
    let run = || -> Result<(MetricsReport<f64>, IterCounts, f64, f64), String> {
        let inst = generate(&spec).map_err(|e| e.to_string())?;
        let lambda = match spec.loss() {
            Loss::WilcoxonRank => rank_lambda(
                inst.data.a(),
                &LambdaSpec {
                    seed,
                    ..LambdaSpec::default()
                },
            ),
            Loss::EuclideanNorm => sqrt_lasso_lambda(inst.data.n()),
        };
        let data = inst.data.clone().with_lambda(lambda);
        let start = Instant::now();
        let out = as_solve(&data, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let t = start.elapsed().as_secs_f64();
        let reference = if args.with_cr {
            let full = as_solve(
                &data,
                &SolverConfig {
                    no_sieve: true,
                    ..SolverConfig::default()
                },
            )
            .map_err(|e| e.to_string())?;
            Some(full.report.x)
        } else {
            None
        };
        let support: Vec<usize> = (0..data.p())
            .filter(|&j| out.report.x[j] != 0.0)
            .collect();
        let m = evaluate(
            &data,
            &out.report.x,
            &out.report.u,
            &out.report.alpha,
            &inst.x_true,
            &inst.sigma_x,
            &support,
            reference.as_ref(),
        );
        Ok((m, out.report.iters, t, out.report.wall_time_ssn))
    };
    match run() {
        Ok(payload) => RepRow {
            seed,
            metrics: Some(payload),
            error: None,
        },
        Err(message) => RepRow {
            seed,
            metrics: None,
            error: Some(message),
        },
    }
}
