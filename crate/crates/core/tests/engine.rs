mod common;

use comp_power::engine::{
    auxiliary_update, check_stationary, dual_update, lagrangian_maximize, lagrangian_value, RunConfig,
    StationaryPoint,
};
use comp_power::evaluation::weighted_sum_rate;
use comp_power::model::{AccessMap, AlgorithmState, ProblemInstance};
use comp_power::{random_instance, run, InstanceShape, StepSizes};
use proptest::prelude::*;

fn instance_strategy() -> impl Strategy<Value = ProblemInstance> {
    any::<u64>().prop_map(|seed| random_instance(seed, &InstanceShape::default()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prices_stay_nonnegative(inst in instance_strategy(), scale in 0.0f64..5.0) {
        let lambda: Vec<f64> = (0..inst.num_antennas()).map(|k| scale * (k % 3) as f64).collect();
        let p = lagrangian_maximize(&inst, &lambda, &comp_power::AlgorithmState::initial(&inst).y);
        let next = dual_update(&inst, &lambda, &p, StepSizes::theorem1(&inst).alpha());
        prop_assert!(next.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn theorem1_steps_satisfy_psd_exactly(inst in instance_strategy()) {
        prop_assert!(StepSizes::theorem1(&inst).satisfies_psd_condition(&inst));
        prop_assert!(StepSizes::lin2006(&inst).satisfies_psd_condition(&inst));
    }

    #[test]
    fn step_sizes_do_not_depend_on_gains(inst in instance_strategy(), factor in 1e-3f64..1e3) {
        let scaled = inst.with_scaled_gains(factor).unwrap();
        prop_assert_eq!(StepSizes::theorem1(&inst), StepSizes::theorem1(&scaled));
    }

    #[test]
    fn converged_run_is_stationary(inst in instance_strategy()) {
        let outcome = run(&inst, &RunConfig::new(StepSizes::theorem1(&inst)).stop_tol(1e-10).max_iterations(200_000)).unwrap();
        prop_assert!(check_stationary(&outcome.state, &inst, 1e-6).is_stationary());
    }
}

#[test]
fn stationary_point_is_a_fixed_point() {
    let inst = random_instance(21, &InstanceShape::default());
    let outcome = run(&inst, &RunConfig::new(StepSizes::theorem1(&inst)).stop_tol(1e-14).max_iterations(400_000)).unwrap();
    let again = run(
        &inst,
        &RunConfig::new(StepSizes::theorem1(&inst)).warm_start(outcome.state.clone()).stop_tol(1e-12),
    )
    .unwrap();
    assert_eq!(again.iterations(), outcome.iterations() + 1);
    let point = StationaryPoint::from_state(&outcome.state);
    let p = lagrangian_maximize(&inst, &point.lambda, &point.y);
    assert_eq!(auxiliary_update(&point.y, &p, 0.5).len(), p.len());
    for (a, b) in p.iter().zip(&point.y) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn gap_vanishes_at_convergence() {
    let inst = random_instance(8, &InstanceShape::default());
    let reference = {
        let o = run(&inst, &RunConfig::new(StepSizes::theorem1(&inst)).stop_tol(1e-14).max_iterations(400_000)).unwrap();
        weighted_sum_rate(&inst, o.solution())
    };
    let outcome = run(&inst, &RunConfig::new(StepSizes::theorem1(&inst)).reference_value(reference)).unwrap();
    let last = outcome.trace.last().unwrap().dual_gap.unwrap();
    assert!(last.abs() <= 1e-6 * reference.abs(), "{last}");
}

#[test]
fn larger_manual_steps_do_not_crash() {
    let inst = random_instance(5, &InstanceShape::default());
    let steps = StepSizes::uniform(inst.num_antennas(), 50.0, 1.0).unwrap();
    assert!(!steps.satisfies_psd_condition(&inst));
    match run(&inst, &RunConfig::new(steps).max_iterations(2000)) {
        Ok(o) => assert!(o.converged()),
        Err(e) => assert!(e.into_outcome().is_some()),
    }
}

#[test]
fn step_size_formulas() {
    let access = AccessMap::new(1, vec![vec![0]]).unwrap();
    let inst = ProblemInstance::new(access, vec![1.0], vec![1.0], vec![1.0], vec![3.0]).unwrap();
    assert_eq!(StepSizes::theorem1(&inst).alpha(), &[2.0]);

    let access = AccessMap::new(2, vec![vec![0]; 10].into_iter().chain([vec![1]]).collect()).unwrap();
    let mut c = vec![3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
    c.push(3.0);
    let inst = ProblemInstance::new(access, vec![1.0; 11], vec![1.0; 11], vec![1.0; 2], c).unwrap();
    let a = StepSizes::theorem1(&inst).alpha()[0];
    assert!(a <= 0.2 && 0.2 - a <= f64::EPSILON);
    assert!((StepSizes::lin2006(&inst).alpha()[0] - 0.15).abs() < 1e-15);
}

#[test]
fn lagrangian_at_initial_state_is_finite() {
    let inst = random_instance(2, &InstanceShape::default());
    let s = AlgorithmState::initial(&inst);
    let p = lagrangian_maximize(&inst, &s.lambda, &s.y);
    assert!(lagrangian_value(&inst, &p, &s.lambda, &s.y).is_finite());
}
