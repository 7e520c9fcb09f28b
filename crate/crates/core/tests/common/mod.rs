//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::LN_2;

use comp_power::model::{AccessMap, ProblemInstance};
use comp_power::SubproblemInput;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Owned data for one block, so tests can build `SubproblemInput`s freely.
#[derive(Debug, Clone)]
pub struct Block {
    pub gammas: Vec<f64>,
    pub weight: f64,
    pub proximal: f64,
    pub lambdas: Vec<f64>,
    pub aux: Vec<f64>,
}

impl Block {
    pub fn input(&self) -> SubproblemInput<'_> {
        SubproblemInput {
            user: 0,
            gammas: &self.gammas,
            weight: self.weight,
            proximal: self.proximal,
            lambdas: &self.lambdas,
            aux: &self.aux,
        }
    }

    pub fn random(r: &mut ChaCha8Rng, max_len: usize) -> Self {
        let m = r.random_range(1..=max_len);
        Self {
            gammas: (0..m).map(|_| r.random_range(0.05..10.0)).collect(),
            weight: r.random_range(0.2..3.0),
            proximal: r.random_range(0.3..6.0),
            lambdas: (0..m).map(|_| r.random_range(0.0..3.0)).collect(),
            aux: (0..m).map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.0..2.0) }).collect(),
        }
    }
}

fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizes a block by trying every support set: on each support the
/// stationarity conditions reduce to one decreasing scalar equation in
/// `s = sum gamma p`, solved by bisection. Returns `(powers, objective)`.
pub fn brute_force_block(b: &Block) -> (Vec<f64>, f64) {
    let m = b.gammas.len();
    let input = b.input();
    let mut best = (vec![0.0; m], input.objective(&vec![0.0; m]));
    for mask in 1u32..(1 << m) {
        let on = |k: usize| mask & (1 << k) != 0;
        let power = |k: usize, s: f64| b.aux[k] + (b.weight * b.gammas[k] / (LN_2 * (1.0 + s)) - b.lambdas[k]) / b.proximal;
        let residual = |s: f64| (0..m).filter(|&k| on(k)).map(|k| b.gammas[k] * power(k, s)).sum::<f64>() - s;
        let mut hi = 1.0;
        while residual(hi) > 0.0 {
            hi *= 2.0;
        }
        let s = bisect_decreasing(residual, -1.0 + 1e-300f64.max(f64::EPSILON), hi);
        let p: Vec<f64> = (0..m).map(|k| if on(k) { power(k, s) } else { 0.0 }).collect();
        if p.iter().any(|&x| x < 0.0) {
            continue;
        }
        let value = input.objective(&p);
        if value > best.1 {
            best = (p, value);
        }
    }
    best
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

/// Projection onto `{x >= 0, sum x <= cap}` by enumerating supports and
/// whether the cap binds.
pub fn project_by_enumeration(q: &[f64], cap: f64) -> Vec<f64> {
    let m = q.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&k| mask & (1 << k) != 0).collect();
        let mut candidates = Vec::new();
        let mut free = vec![0.0; m];
        for &k in &support {
            free[k] = q[k];
        }
        candidates.push(free);
        if !support.is_empty() {
            let theta = (support.iter().map(|&k| q[k]).sum::<f64>() - cap) / support.len() as f64;
            if theta >= 0.0 {
                let mut bound = vec![0.0; m];
                for &k in &support {
                    bound[k] = q[k] - theta;
                }
                candidates.push(bound);
            }
        }
        for x in candidates {
            let feasible = x.iter().all(|&v| v >= -1e-15) && x.iter().sum::<f64>() <= cap + 1e-12;
            if !feasible {
                continue;
            }
            let d: f64 = x.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, x));
            }
        }
    }
    best.expect("zero is always feasible").1
}

/// Places antennas on base stations two at a time.
pub fn paired_owners(inst: &ProblemInstance) -> Vec<usize> {
    (0..inst.num_antennas()).map(|k| k / 2).collect()
}

pub fn single_link(gamma: f64, budget: f64) -> ProblemInstance {
    let access = AccessMap::new(1, vec![vec![0]]).unwrap();
    ProblemInstance::new(access, vec![gamma], vec![1.0], vec![budget], vec![3.0]).unwrap()
}
