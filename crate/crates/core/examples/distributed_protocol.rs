//! Message passing between base stations on a seven-cell network, compared
//! with the monolithic iteration.
//!
//! cargo run --release --example distributed_protocol

use comp_power::distributed::{assign_hosts, run_distributed};
use comp_power::model::dbm_to_watts;
use comp_power::scenario::build_problem_instance;
use comp_power::{run, ChannelScenario, RunConfig, ScenarioParams, StepSizes};

fn main() {
    let params = ScenarioParams {
        users_per_cell: 4,
        ..ScenarioParams::default()
    };
    let scenario = ChannelScenario::generate(&params, 5).unwrap();
    let n = scenario.num_users();
    let budgets = vec![dbm_to_watts(20.0); scenario.num_antennas()];
    let inst = build_problem_instance(&scenario, vec![1.0; n], budgets, vec![3.0; n]).unwrap();

    let topology = assign_hosts(&inst, &scenario.topology.bs_of_antenna).unwrap();
    let config = RunConfig::new(StepSizes::theorem1(&inst)).max_iterations(100_000);
    let dist = run_distributed(&inst, &topology, &config, true).unwrap();
    let mono = run(&inst, &config).unwrap();

    let access = inst.access();
    println!("{} base stations, {} users", topology.num_bs(), n);
    println!(
        "backhaul per round {} (bound {}), local per round {}",
        topology.backhaul_per_round(access),
        topology.backhaul_bound(access),
        dist.ledger.rounds[0].local
    );
    println!("{} rounds, {} backhaul messages in total", dist.ledger.rounds.len(), dist.ledger.total_backhaul());
    println!("identical to the monolithic run: {}", dist.outcome.state == mono.state);

    let mut first_round = Vec::new();
    dist.ledger.write_csv(&mut first_round).unwrap();
    for line in String::from_utf8(first_round).unwrap().lines().take(6) {
        println!("  {line}");
    }
}
