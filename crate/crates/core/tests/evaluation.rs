mod common;

use comp_power::evaluation::{weighted_sum_rate, weighted_sum_rate_gradient};
use comp_power::{conservative_rate, random_instance, InstanceShape};
use proptest::prelude::*;

proptest! {
    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), point in prop::collection::vec(0.05f64..1.5, 18)) {
        let inst = random_instance(seed, &InstanceShape::default());
        let p: Vec<f64> = point.iter().cycle().take(inst.num_vars()).copied().collect();
        let mut g = vec![0.0; p.len()];
        weighted_sum_rate_gradient(&inst, &p, &mut g);
        for i in 0..p.len() {
            let h = 1e-6;
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (weighted_sum_rate(&inst, &hi) - weighted_sum_rate(&inst, &lo)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-3), "{} vs {}", fd, g[i]);
        }
    }

    #[test]
    fn rates_are_monotone(seed in any::<u64>(), bump in 1e-4f64..1.0) {
        let inst = random_instance(seed, &InstanceShape::default());
        let p = vec![0.3; inst.num_vars()];
        for i in 0..p.len() {
            let mut q = p.clone();
            q[i] += bump;
            let n = inst.access().var_user(i);
            prop_assert!(conservative_rate(&q, &inst, n) > conservative_rate(&p, &inst, n));
        }
    }
}
