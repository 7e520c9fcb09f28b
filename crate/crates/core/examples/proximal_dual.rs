//! The primal-dual iteration on a small hand-built network, checked against
//! the centralized solver.
//!
//! cargo run --example proximal_dual

use comp_power::engine::check_stationary;
use comp_power::{oracle_solve, run, weighted_sum_rate, AccessMap, OracleConfig, ProblemInstance, RunConfig, StepSizes};

fn main() {
    // three antennas, four users, overlapping serving sets
    let access = AccessMap::new(3, vec![vec![0, 1], vec![1], vec![1, 2], vec![0, 2]]).unwrap();
    let gains = vec![4.0, 1.0, 2.0, 0.5, 6.0, 3.0, 0.7];
    let inst = ProblemInstance::new(access, gains, vec![1.0, 2.0, 1.0, 1.0], vec![1.0, 0.5, 2.0], vec![3.0; 4]).unwrap();

    let steps = StepSizes::theorem1(&inst);
    println!("alpha {:?}", steps.alpha());
    let oracle = oracle_solve(&inst, &OracleConfig::default()).unwrap();
    let outcome = run(&inst, &RunConfig::new(steps).reference_value(oracle.value)).unwrap();

    for r in outcome.trace.iter().step_by(20) {
        println!("t={:4} gap {:+.3e} step {:.2e}", r.t, r.dual_gap.unwrap(), r.lambda_step_inf.max(r.y_step_inf));
    }
    println!("converged after {} iterations", outcome.iterations());
    println!("y = {:?}", outcome.solution());
    println!("lambda = {:?}", outcome.state.lambda);
    println!(
        "weighted sum rate {:.9} (centralized {:.9})",
        weighted_sum_rate(&inst, outcome.solution()),
        oracle.value
    );
    println!("stationary: {}", check_stationary(&outcome.state, &inst, 1e-6).is_stationary());
}
