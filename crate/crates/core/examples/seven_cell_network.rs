//! Seven-cell network at 20 dBm: per-user throughput of the proposed
//! allocation against equal power and the interference-free bound.
//!
//! cargo run --release --example seven_cell_network -- [realizations]

use std::time::Instant;

use comp_power::baselines::{equal_power_allocation, no_interference_bound, OracleConfig};
use comp_power::evaluation::{MeanEstimate, ThroughputReport};
use comp_power::model::dbm_to_watts;
use comp_power::scenario::build_problem_instance;
use comp_power::{run, ChannelScenario, RunConfig, ScenarioParams, StepSizes};

fn main() {
    let realizations: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let params = ScenarioParams::default();
    let budget = dbm_to_watts(20.0);
    let start = Instant::now();
    let (mut ours, mut epa, mut bound) = (Vec::new(), Vec::new(), Vec::new());
    let mut iterations = Vec::new();

    for seed in 0..realizations {
        let scenario = ChannelScenario::generate(&params, seed).expect("scenario");
        let n = scenario.num_users();
        let k = scenario.num_antennas();
        let inst = build_problem_instance(&scenario, vec![1.0; n], vec![budget; k], vec![3.0; n]).expect("instance");

        let outcome = match run(&inst, &RunConfig::new(StepSizes::theorem1(&inst)).record_trace(false)) {
            Ok(o) => o,
            Err(e) => e.into_outcome().expect("iteration limit"),
        };
        iterations.push(outcome.iterations() as f64);
        if !outcome.converged() {
            println!("seed {seed}: stopped at the iteration limit");
        }
        ours.push(ThroughputReport::evaluate("proposed", outcome.solution(), &scenario, &inst).mean_throughput_bps());
        let p = equal_power_allocation(&inst);
        epa.push(ThroughputReport::evaluate("epa", &p, &scenario, &inst).mean_throughput_bps());
        let b = no_interference_bound(&scenario, vec![1.0; n], vec![budget; k], vec![3.0; n], &OracleConfig::default())
            .expect("bound");
        bound.push(b.per_user_rate.iter().sum::<f64>() / n as f64 * 1e6);
    }

    for (name, xs) in [("no interference", &bound), ("proposed", &ours), ("equal power", &epa)] {
        let e = MeanEstimate::from_samples(xs);
        println!("{name:>16}: {:.4} Mbit/s +- {:.4}", e.mean / 1e6, e.half_width / 1e6);
    }
    let it = MeanEstimate::from_samples(&iterations);
    println!("mean iterations {:.0}, {} realizations in {:.1?}", it.mean, realizations, start.elapsed());
}
