// scratch: single-seed probe with selectable seed
use ranksieve::model::*;
use ranksieve::sieve::as_solve;
use ranksieve::synth::*;
use ranksieve::tuning::{rank_lambda, LambdaSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = SynthSpec::<f64>::e2(200, 1000, ErrorDistribution::Normal { variance: 0.25 }, seed);
    let inst = generate(&spec).unwrap();
    let lambda = rank_lambda(inst.data.a(), &LambdaSpec { seed, ..LambdaSpec::default() });
    let data = inst.data.clone().with_lambda(lambda);
    match as_solve(&data, &SolverConfig::default()) {
        Ok(o) => println!("seed {seed}: ok val={} rounds={}", o.report.val, o.report.iters.sieve),
        Err(e) => println!("seed {seed}: ERROR {e}"),
    }
}
