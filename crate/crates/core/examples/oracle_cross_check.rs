//! Random small instances solved by the primal-dual iteration and by
//! accelerated projected gradient.
//!
//! cargo run --release --example oracle_cross_check -- [count]

use comp_power::baselines::oracle_kkt_residual;
use comp_power::{oracle_solve, random_instance, run, weighted_sum_rate, InstanceShape, OracleConfig, RunConfig, StepSizes};

fn main() {
    let count: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let shape = InstanceShape::default();
    println!("seed  K  N  iters   primal-dual       centralized       rel.diff   KKT");
    for seed in 0..count {
        let inst = random_instance(seed, &shape);
        let outcome = run(&inst, &RunConfig::new(StepSizes::theorem1(&inst)).stop_tol(1e-10)).unwrap();
        let ours = weighted_sum_rate(&inst, outcome.solution());
        let oracle = oracle_solve(&inst, &OracleConfig::default()).unwrap();
        println!(
            "{seed:4} {:2} {:2} {:6}  {ours:.12}  {:.12}  {:.1e}  {:.1e}",
            inst.num_antennas(),
            inst.num_users(),
            outcome.iterations(),
            oracle.value,
            (ours - oracle.value).abs() / oracle.value,
            oracle_kkt_residual(&inst, &oracle.p)
        );
    }
}
