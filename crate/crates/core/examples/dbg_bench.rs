// scratch benchmark probe
use std::time::Instant;
use ranksieve::metrics::{evaluate, nonzero_rule};
use ranksieve::model::*;
use ranksieve::sieve::as_solve;
use ranksieve::synth::*;
use ranksieve::tuning::{rank_lambda, LambdaSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("e1");
    let reps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    for seed in 0..reps {
        let spec = match which {
            "e1" => SynthSpec::<f64>::e1(100, 400, ErrorDistribution::Normal { variance: 1.0 }, seed),
            "e2" => SynthSpec::<f64>::e2(200, 1000, ErrorDistribution::Normal { variance: 0.25 }, seed),
            "e2big" => SynthSpec::<f64>::e2(250, 1250, ErrorDistribution::Normal { variance: 0.25 }, seed),
            _ => panic!(),
        };
        let inst = generate(&spec).unwrap();
        let t0 = Instant::now();
        let lambda = rank_lambda(inst.data.a(), &LambdaSpec { seed, ..LambdaSpec::default() });
        let t_lambda = t0.elapsed().as_secs_f64();
        let data = inst.data.clone().with_lambda(lambda);
        let t1 = Instant::now();
        let out = match as_solve(&data, &SolverConfig::default()) {
            Ok(o) => o,
            Err(e) => { println!("seed {seed}: ERROR {e}"); continue; }
        };
        let t_solve = t1.elapsed().as_secs_f64();
        let m = evaluate(&data, &out.report.x, &out.report.u, &out.report.alpha,
            &inst.x_true, &inst.sigma_x, out.trace.last().map(|t| t.support_size).map(|_| &[] as &[usize]).unwrap_or(&[]), None);
        let (k_hat, _) = nonzero_rule(&out.report.x);
        println!(
            "seed {seed}: lambda={lambda:.4} val={:.4} L1={:.2} L2={:.2} ME={:.2} FP={} FN={} k={k_hat} eta={:.2e} rounds={} ppa={} alm={} ssn={} |I|max={:.3} t_lam={t_lambda:.2}s t={t_solve:.2}s viol={}",
            m.val, m.l1_err, m.l2_err, m.me, m.fp, m.fn_, m.eta_kkt,
            out.report.iters.sieve, out.report.iters.ppa, out.report.iters.alm, out.report.iters.ssn,
            out.max_support_fraction, out.theorem1_violations
        );
    }
}
