//! Closed-form solution of one user's Lagrangian block
//!
//! ```text
//! B_n(p) = w log2(1 + sum_k gamma_k p_k) - sum_k lambda_k p_k - (c/2) sum_k (p_k - y_k)^2
//! ```
//!
//! maximized over `p >= 0`. For a fixed active set the stationarity
//! conditions collapse to a scalar quadratic in `s = sum_k gamma_k p_k`; the
//! active set is found by repeatedly dropping every coordinate whose
//! unconstrained value is nonpositive (all of them at once, which is valid
//! because such coordinates are zero in the constrained optimum).

use std::f64::consts::LN_2;

use crate::model::SubproblemSolution;

/// Powers at or below this value are treated as zero when refining the active
/// set.
pub const ELIMINATION_TOL: f64 = 1e-12;

/// Largest serving-set size the bitmask active set supports.
pub const MAX_SERVING: usize = 64;

/// Inputs of one user's block, aligned with the user's serving set.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemInput<'a> {
    pub user: usize,
    pub gammas: &'a [f64],
    pub weight: f64,
    pub proximal: f64,
    pub lambdas: &'a [f64],
    pub aux: &'a [f64],
}

impl SubproblemInput<'_> {
    fn len(&self) -> usize {
        self.gammas.len()
    }

    /// `B_n` at `powers`.
    pub fn objective(&self, powers: &[f64]) -> f64 {
        let s: f64 = self.gammas.iter().zip(powers).map(|(g, p)| g * p).sum();
        let mut value = self.weight * (1.0 + s).log2();
        for k in 0..self.len() {
            let d = powers[k] - self.aux[k];
            value -= self.lambdas[k] * powers[k] + 0.5 * self.proximal * d * d;
        }
        value
    }

    /// `dB_n / dp_k` at `powers`.
    pub fn gradient(&self, powers: &[f64], out: &mut [f64]) {
        let s: f64 = self.gammas.iter().zip(powers).map(|(g, p)| g * p).sum();
        let scale = self.weight / (LN_2 * (1.0 + s));
        for k in 0..self.len() {
            out[k] = scale * self.gammas[k] - self.lambdas[k] - self.proximal * (powers[k] - self.aux[k]);
        }
    }
}

/// Larger root of `c s^2 + (c + mu) s + (mu - gamma_bar) = 0`.
///
/// The discriminant is evaluated as `(c - mu)^2 + 4 c gamma_bar`, which is
/// positive for `c, gamma_bar > 0`. The root is always above `-1` because the
/// quadratic equals `-gamma_bar` there.
pub fn quadratic_root(c: f64, mu: f64, gamma_bar: f64) -> f64 {
    let b = c + mu;
    let root = ((c - mu) * (c - mu) + 4.0 * c * gamma_bar).sqrt();
    if b >= 0.0 {
        2.0 * (gamma_bar - mu) / (b + root)
    } else {
        (root - b) / (2.0 * c)
    }
}

/// Solves one block into `out` (aligned with the serving set) and returns
/// `(s, active mask)`.
pub fn solve_into(input: &SubproblemInput<'_>, out: &mut [f64]) -> (f64, u64) {
    let n = input.len();
    assert!(n <= MAX_SERVING, "serving set larger than {MAX_SERVING}");
    let c = input.proximal;
    let mut active: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    loop {
        if active == 0 {
            out[..n].fill(0.0);
            return (0.0, 0);
        }
        let mut mu = 0.0;
        let mut gamma_bar = 0.0;
        for k in 0..n {
            if active & (1 << k) != 0 {
                let g = input.gammas[k];
                mu += g * (input.lambdas[k] - c * input.aux[k]);
                gamma_bar += input.weight * g * g / LN_2;
            }
        }
        let s = quadratic_root(c, mu, gamma_bar);
        let marginal = input.weight / (LN_2 * (1.0 + s));
        let mut dropped = 0u64;
        for k in 0..n {
            if active & (1 << k) != 0 {
                let p = input.aux[k] + (marginal * input.gammas[k] - input.lambdas[k]) / c;
                out[k] = p;
                if p <= ELIMINATION_TOL {
                    dropped |= 1 << k;
                }
            } else {
                out[k] = 0.0;
            }
        }
        if dropped == 0 {
            return (s, active);
        }
        active &= !dropped;
    }
}

/// Maximizes `B_n` over nonnegative powers. `serving` is the user's serving
/// set, used only to name the active antennas.
pub fn solve_subproblem(input: &SubproblemInput<'_>, serving: &[usize]) -> SubproblemSolution {
    let mut powers = vec![0.0; input.len()];
    let (s, active) = solve_into(input, &mut powers);
    let omega = serving
        .iter()
        .enumerate()
        .filter(|(k, _)| active & (1 << k) != 0)
        .map(|(_, &a)| a)
        .collect();
    SubproblemSolution {
        user: input.user,
        omega,
        s,
        powers,
    }
}

/// Largest violation of the block's KKT conditions: `|grad|` on positive
/// coordinates and `max(0, grad)` on zero ones.
pub fn kkt_residual(input: &SubproblemInput<'_>, powers: &[f64]) -> f64 {
    let mut grad = vec![0.0; input.len()];
    input.gradient(powers, &mut grad);
    grad.iter()
        .zip(powers)
        .map(|(&g, &p)| if p > 0.0 { g.abs() } else { g.max(0.0) })
        .fold(0.0, f64::max)
}
