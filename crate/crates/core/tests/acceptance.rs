//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use comp_power::baselines::{
    equal_power_allocation, no_interference_bound, oracle_kkt_residual, oracle_solve, OracleConfig,
};
use comp_power::distributed::{assign_hosts, run_distributed};
use comp_power::engine::{check_stationary, run, two_maximizer_bound, RunConfig, RunOutcome, StationaryPoint};
use comp_power::evaluation::{weighted_sum_rate, MeanEstimate, ThroughputReport};
use comp_power::experiment::{compare_step_sizes, ExperimentConfig};
use comp_power::local::solve_subproblem;
use comp_power::model::{dbm_to_watts, ProblemInstance, StepSizes};
use comp_power::scenario::{build_problem_instance, random_instance, InstanceShape};
use comp_power::{ChannelScenario, ScenarioParams};
use rand::Rng;

use common::{brute_force_block, paired_owners, Block};

const DESK_SEEDS: u64 = 50;

struct Verdict {
    pass: bool,
    detail: String,
}

fn finish(run: &RunConfig, inst: &ProblemInstance) -> RunOutcome {
    match run_engine(inst, run) {
        Ok(o) => o,
        Err(o) => o,
    }
}

fn run_engine(inst: &ProblemInstance, config: &RunConfig) -> Result<RunOutcome, RunOutcome> {
    run(inst, config).map_err(|e| e.into_outcome().expect("iteration limit"))
}

fn desk_instances() -> Vec<ProblemInstance> {
    let shape = InstanceShape::default();
    (0..DESK_SEEDS).map(|s| random_instance(s, &shape)).collect()
}

fn desk_config(inst: &ProblemInstance) -> RunConfig {
    RunConfig::new(StepSizes::theorem1(inst)).stop_tol(1e-10).max_iterations(200_000)
}

fn tight_reference(inst: &ProblemInstance) -> StationaryPoint {
    let config = RunConfig::new(StepSizes::theorem1(inst))
        .stop_tol(1e-14)
        .max_iterations(400_000)
        .record_trace(false);
    StationaryPoint::from_state(&finish(&config, inst).state)
}

fn criterion_1(instances: &[ProblemInstance]) -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for inst in instances {
        let ours = match run_engine(inst, &desk_config(inst)) {
            Ok(o) => weighted_sum_rate(inst, o.solution()),
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let oracle = match oracle_solve(inst, &OracleConfig::default()) {
            Ok(s) => s.value,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        worst = worst.max((ours - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
    }
    let elapsed = start.elapsed();
    Verdict {
        pass: failures == 0 && worst <= 1e-5 && elapsed < Duration::from_secs(60),
        detail: format!(
            "{} instances, worst relative gap {worst:.2e}, {failures} non-converged, {elapsed:.1?}",
            instances.len()
        ),
    }
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut r = common::rng(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let b = Block::random(&mut r, 4);
        let serving: Vec<usize> = (0..b.gammas.len()).collect();
        let ours = solve_subproblem(&b.input(), &serving);
        let value = b.input().objective(&ours.powers);
        let (_, best) = brute_force_block(&b);
        worst = worst.max((value - best).abs());
    }
    let elapsed = start.elapsed();
    Verdict {
        pass: worst <= 1e-9 && elapsed < Duration::from_secs(10),
        detail: format!("1000 blocks, worst objective gap {worst:.2e}, {elapsed:.1?}"),
    }
}

fn criterion_3(instances: &[ProblemInstance], references: &[StationaryPoint]) -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0;
    for (inst, reference) in instances.iter().zip(references) {
        let config = desk_config(inst).lyapunov_reference(reference.clone());
        let outcome = finish(&config, inst);
        let mut values: Vec<f64> = outcome.trace.iter().map(|r| r.lyapunov.expect("lyapunov")).collect();
        values.push(outcome.final_lyapunov.expect("lyapunov"));
        for w in values.windows(2) {
            worst = worst.max(w[1] - w[0]);
            steps += 1;
        }
    }
    Verdict {
        pass: worst <= 1e-9,
        detail: format!("{steps} steps, largest increase {worst:.2e}"),
    }
}

fn criterion_4(instances: &[ProblemInstance], references: &[StationaryPoint]) -> Verdict {
    let mut r = common::rng(4);
    let mut worst = f64::NEG_INFINITY;
    let mut tuples = 0;
    for (inst, reference) in instances.iter().zip(references).take(10) {
        let scale = reference.lambda.iter().fold(1.0f64, |m, &l| m.max(l));
        for _ in 0..1000 {
            let l1: Vec<f64> = (0..inst.num_antennas()).map(|_| r.random_range(0.0..2.0 * scale)).collect();
            let l2: Vec<f64> = (0..inst.num_antennas()).map(|_| r.random_range(0.0..2.0 * scale)).collect();
            let y: Vec<f64> = (0..inst.num_vars()).map(|_| r.random_range(0.0..2.0)).collect();
            let (lhs, rhs) = two_maximizer_bound(inst, &y, &l1, &l2, reference);
            worst = worst.max(lhs - rhs);
            tuples += 1;
        }
    }
    Verdict {
        pass: worst <= 1e-9,
        detail: format!("{tuples} tuples, largest lhs - rhs {worst:.2e}"),
    }
}

fn criterion_5(instances: &[ProblemInstance], scenarios: &[ProblemInstance]) -> Verdict {
    let all: Vec<&ProblemInstance> = instances.iter().chain(scenarios).collect();
    let failing = all.iter().filter(|i| !StepSizes::theorem1(i).satisfies_psd_condition(i)).count();
    Verdict {
        pass: failing == 0,
        detail: format!("{} instances checked in exact arithmetic, {failing} violations", all.len()),
    }
}

fn criterion_6(instances: &[ProblemInstance]) -> Verdict {
    let mut steps_differ = 0;
    let mut not_stationary = 0;
    let mut runs = 0;
    for inst in instances {
        let base = StepSizes::theorem1(inst);
        for factor in [1e-2, 1e2] {
            let scaled = inst.with_scaled_gains(factor).expect("scaled");
            let steps = StepSizes::theorem1(&scaled);
            if steps.alpha().iter().zip(base.alpha()).any(|(a, b)| a.to_bits() != b.to_bits()) {
                steps_differ += 1;
            }
            let outcome = finish(&desk_config(&scaled).record_trace(false), &scaled);
            runs += 1;
            if !(outcome.converged() && check_stationary(&outcome.state, &scaled, 1e-6).is_stationary()) {
                not_stationary += 1;
            }
        }
    }
    Verdict {
        pass: steps_differ == 0 && not_stationary == 0,
        detail: format!("{runs} scaled runs, {steps_differ} step-size changes, {not_stationary} not stationary"),
    }
}

fn criterion_7() -> Verdict {
    let config = ExperimentConfig::from_json(&format!(
        r#"{{
            "schema_version": 1,
            "scenario": {{"cells": 1, "spacing_m": 1000.0, "users_per_cell": 6, "seeds": {:?},
                          "p_dbm": 25.0, "margin_db": 5.0, "serving_count": 3}},
            "algorithm": {{"c": 3.0, "beta": 1.0, "step_size_policy": "theorem1",
                           "stop_tol": 1e-10, "max_iters": 100000}},
            "strategies": ["proposed"],
            "runtime": "monolithic"
        }}"#,
        (0..DESK_SEEDS).collect::<Vec<_>>()
    ))
    .expect("config");
    let rows = compare_step_sizes(&config).expect("comparison");
    let at_1e4: Vec<_> = rows.iter().filter(|r| r.threshold == 1e-4).collect();
    let wins = at_1e4
        .iter()
        .filter(|r| match (r.theorem1_iters, r.lin2006_iters) {
            (Some(a), Some(b)) => a <= b,
            (Some(_), None) => true,
            _ => false,
        })
        .count();
    let fraction = wins as f64 / at_1e4.len() as f64;
    Verdict {
        pass: fraction >= 0.9,
        detail: format!("{wins}/{} instances reach gap 1e-4 no later with the larger steps", at_1e4.len()),
    }
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let params = ScenarioParams::default();
    let budget = dbm_to_watts(20.0);
    let (mut bound, mut ours, mut epa, mut diff) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut nonconverged = 0;
    for seed in 0..200u64 {
        let scenario = ChannelScenario::generate(&params, seed).expect("scenario");
        let n = scenario.num_users();
        let k = scenario.num_antennas();
        let inst = build_problem_instance(&scenario, vec![1.0; n], vec![budget; k], vec![3.0; n]).expect("instance");
        let config = RunConfig::new(StepSizes::theorem1(&inst)).max_iterations(100_000).record_trace(false);
        let outcome = finish(&config, &inst);
        if !outcome.converged() {
            nonconverged += 1;
        }
        let proposed = ThroughputReport::evaluate("proposed", outcome.solution(), &scenario, &inst).mean_true_rate();
        let equal = ThroughputReport::evaluate("epa", &equal_power_allocation(&inst), &scenario, &inst).mean_true_rate();
        let b = no_interference_bound(&scenario, vec![1.0; n], vec![budget; k], vec![3.0; n], &OracleConfig::default())
            .expect("bound");
        bound.push(b.per_user_rate.iter().sum::<f64>() / n as f64);
        ours.push(proposed);
        epa.push(equal);
        diff.push(proposed - equal);
    }
    let elapsed = start.elapsed();
    let (b, o, e, d) = (
        MeanEstimate::from_samples(&bound),
        MeanEstimate::from_samples(&ours),
        MeanEstimate::from_samples(&epa),
        MeanEstimate::from_samples(&diff),
    );
    Verdict {
        pass: b.mean >= o.mean && o.mean >= e.mean && d.lower() > 0.0 && elapsed < Duration::from_secs(600),
        detail: format!(
            "bound {:.4} >= proposed {:.4} >= epa {:.4} Mbit/s, gain {:.4} +- {:.4}, {nonconverged} hit the limit, {elapsed:.1?}",
            b.mean,
            o.mean,
            e.mean,
            d.mean,
            d.half_width
        ),
    }
}

fn criterion_9(instances: &[ProblemInstance]) -> Verdict {
    let mut worst = 0.0f64;
    let mut count_mismatch = 0;
    let mut over_bound = 0;
    for inst in instances {
        let topology = assign_hosts(inst, &paired_owners(inst)).expect("hosts");
        let config = desk_config(inst).record_iterates(true);
        let mono = finish(&config, inst);
        let dist = match run_distributed(inst, &topology, &config, false) {
            Ok(o) => o,
            Err(e) => e.into_outcome().expect("iteration limit"),
        };
        if mono.trace.len() != dist.outcome.trace.len() {
            worst = f64::INFINITY;
        }
        for (a, b) in mono.trace.iter().zip(&dist.outcome.trace) {
            let (a, b) = (a.snapshot.as_ref().unwrap(), b.snapshot.as_ref().unwrap());
            for (x, y) in a.lambda.iter().zip(&b.lambda).chain(a.y.iter().zip(&b.y)) {
                worst = worst.max((x - y).abs());
            }
        }
        let expected = topology.backhaul_per_round(inst.access());
        let bound = topology.backhaul_bound(inst.access());
        count_mismatch += dist.ledger.rounds.iter().filter(|r| r.backhaul != expected).count();
        over_bound += dist.ledger.rounds.iter().filter(|r| r.backhaul > bound).count();
    }
    Verdict {
        pass: worst <= 1e-12 && count_mismatch == 0 && over_bound == 0,
        detail: format!(
            "{} instances, max trace difference {worst:.2e}, {count_mismatch} rounds off the analytic count, {over_bound} over the bound",
            instances.len()
        ),
    }
}

fn criterion_10(instances: &[ProblemInstance]) -> Verdict {
    let mut converged = 0;
    let mut failing = 0;
    let mut worst_oracle = 0.0f64;
    for inst in instances {
        let outcome = finish(&desk_config(inst).record_trace(false), inst);
        if outcome.converged() {
            converged += 1;
            if !check_stationary(&outcome.state, inst, 1e-6).is_stationary() {
                failing += 1;
            }
        }
        if let Ok(s) = oracle_solve(inst, &OracleConfig::default()) {
            worst_oracle = worst_oracle.max(oracle_kkt_residual(inst, &s.p));
        }
    }
    Verdict {
        pass: failing == 0 && converged > 0 && worst_oracle <= 1e-6,
        detail: format!("{converged} converged runs, {failing} fail the check; oracle KKT residual {worst_oracle:.2e}"),
    }
}

fn main() {
    let instances = desk_instances();
    let references: Vec<StationaryPoint> = instances.iter().map(tight_reference).collect();
    let params = ScenarioParams::default();
    let scenario_instances: Vec<ProblemInstance> = (0..20u64)
        .map(|seed| {
            let s = ChannelScenario::generate(&params, seed).expect("scenario");
            let n = s.num_users();
            build_problem_instance(&s, vec![1.0; n], vec![0.1; s.num_antennas()], vec![3.0; n]).expect("instance")
        })
        .collect();

    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("oracle agreement", Box::new(|| criterion_1(&instances))),
        ("local solver brute force", Box::new(criterion_2)),
        ("Lyapunov monotonicity", Box::new(|| criterion_3(&instances, &references))),
        ("two-maximizer bound", Box::new(|| criterion_4(&instances, &references))),
        ("step-size PSD condition", Box::new(|| criterion_5(&instances, &scenario_instances))),
        ("gain-scaling robustness", Box::new(|| criterion_6(&instances))),
        ("step-size convergence trend", Box::new(criterion_7)),
        ("throughput ordering", Box::new(criterion_8)),
        ("distributed equivalence", Box::new(|| criterion_9(&instances))),
        ("KKT residual", Box::new(|| criterion_10(&instances))),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {name}: {}", i + 1, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
