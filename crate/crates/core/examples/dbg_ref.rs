// cross-check one E2 instance against the splitting oracle
use ranksieve::metrics::evaluate;
use ranksieve::model::*;
use ranksieve::refsolver::splitting_solve;
use ranksieve::sieve::as_solve;
use ranksieve::synth::*;
use ranksieve::tuning::{rank_lambda, LambdaSpec};

fn main() {
    let seed = 0u64;
    let spec = SynthSpec::<f64>::e2(200, 1000, ErrorDistribution::Normal { variance: 0.25 }, seed);
    let inst = generate(&spec).unwrap();
    let lambda = rank_lambda(inst.data.a(), &LambdaSpec { seed, ..LambdaSpec::default() });
    let data = inst.data.clone().with_lambda(lambda);
    let out = as_solve(&data, &SolverConfig::default()).unwrap();
    let reference = splitting_solve(&data, 1e-7, 60_000).unwrap();
    let l2_ours = (&out.report.x - &inst.x_true).mapv(|v| v * v).sum().sqrt();
    let l2_ref = (&reference.x - &inst.x_true).mapv(|v| v * v).sum().sqrt();
    let m = evaluate(&data, &reference.x, &out.report.u, &out.report.alpha, &inst.x_true, &inst.sigma_x, &[], None);
    println!(
        "ours: val={:.6} L2={:.4}  oracle: val={:.6} L2={:.4} converged={} iters={} (oracle L1={:.3} FP={} FN={})",
        out.report.val, l2_ours, reference.val, l2_ref, reference.converged, reference.iterations, m.l1_err, m.fp, m.fn_
    );
}
