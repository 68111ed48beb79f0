// square-root lasso probe: E5/E6 vs splitting oracle
use ranksieve::model::*;
use ranksieve::refsolver::splitting_solve;
use ranksieve::sieve::as_solve;
use ranksieve::synth::*;
use ranksieve::tuning::sqrt_lasso_lambda;
use std::time::Instant;

fn main() {
    for (name, spec) in [
        ("E5", SynthSpec::<f64>::e5(100, 500, 1)),
        ("E6", SynthSpec::<f64>::e6(100, 500, 1)),
    ] {
        let inst = generate(&spec).unwrap();
        let lambda = sqrt_lasso_lambda(inst.data.n());
        let data = inst.data.clone().with_lambda(lambda);
        let t0 = Instant::now();
        let out = match as_solve(&data, &SolverConfig::default()) {
            Ok(o) => o,
            Err(e) => { println!("{name}: ERROR {e}"); continue; }
        };
        let t = t0.elapsed().as_secs_f64();
        let rf = splitting_solve(&data, 1e-8, 300_000).unwrap();
        let rel = (out.report.val - rf.val).abs() / rf.val.abs();
        println!("{name}: lambda={lambda:.4} val={:.6} ref={:.6} rel={rel:.2e} eta={:.2e} t={t:.2}s ref_conv={} viol={}",
            out.report.val, rf.val, out.report.eta_kkt, rf.converged, out.theorem1_violations);
    }
}
