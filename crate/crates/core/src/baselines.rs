//! Reference strategies: a centralized projected-gradient solver for the
//! weighted-sum-rate program, equal power allocation, and the interference-free
//! upper bound.
//!
//! The centralized solver shares no code with the primal-dual engine beyond
//! the rate function itself, so agreement between the two is a meaningful
//! cross-check.

use crate::evaluation::{interference_free_rate, weighted_sum_rate, weighted_sum_rate_gradient};
use crate::model::{AlgorithmState, ProblemInstance, ValidationReport};
use crate::scenario::{build_instance_normalized, ChannelScenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Initial gradient step; `None` uses `1/L` with `L` the gradient's
    /// Lipschitz bound over the nonnegative orthant. The step adapts by
    /// backtracking from there.
    pub step: Option<f64>,
    pub max_iters: usize,
    /// Stop when the gradient-mapping norm `L |P(x + g/L) - x|_inf`, divided
    /// by `max(1, |g|_inf)`, falls below this.
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step: None,
            max_iters: 100_000,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub p: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Final relative gradient-mapping norm.
    pub stationarity: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("oracle stopped after {} iterations with stationarity {}", .0.iterations, .0.stationarity)]
    NotConverged(Box<OracleSolution>),
    #[error("invalid oracle config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Validation(#[from] ValidationReport),
}

impl OracleError {
    /// Best iterate of a run that hit its iteration limit.
    pub fn into_solution(self) -> Option<OracleSolution> {
        match self {
            OracleError::NotConverged(s) => Some(*s),
            _ => None,
        }
    }
}

/// Threshold `theta >= 0` such that `sum [q - theta]^+ = cap`, or 0 if `[q]^+`
/// already fits.
pub fn capped_simplex_threshold(q: &[f64], cap: f64) -> f64 {
    let positive_sum: f64 = q.iter().map(|v| v.max(0.0)).sum();
    if positive_sum <= cap {
        return 0.0;
    }
    let mut sorted: Vec<f64> = q.iter().copied().filter(|v| *v > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - cap) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Euclidean projection onto `{x >= 0, sum x <= cap}`.
pub fn capped_simplex_project(q: &[f64], cap: f64) -> Vec<f64> {
    let theta = capped_simplex_threshold(q, cap);
    q.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Projects each antenna's block of `x` in place and returns the thresholds.
fn project_blocks(inst: &ProblemInstance, x: &mut [f64], block: &mut Vec<f64>) -> Vec<f64> {
    let access = inst.access();
    (0..access.num_antennas())
        .map(|k| {
            let vars = access.antenna_vars(k);
            block.clear();
            block.extend(vars.iter().map(|&i| x[i]));
            let theta = capped_simplex_threshold(block, inst.budgets()[k]);
            for &i in vars {
                x[i] = (x[i] - theta).max(0.0);
            }
            theta
        })
        .collect()
}

/// `max_n w_n |gamma_n|^2 / ln 2`.
pub fn gradient_lipschitz(inst: &ProblemInstance) -> f64 {
    let access = inst.access();
    (0..inst.num_users())
        .map(|n| {
            let g2: f64 = inst.gains()[access.user_vars(n)].iter().map(|g| g * g).sum();
            inst.weights()[n] * g2 / std::f64::consts::LN_2
        })
        .fold(0.0, f64::max)
}

/// `p_kn = P_k / |U(k)|`.
pub fn equal_power_allocation(inst: &ProblemInstance) -> Vec<f64> {
    AlgorithmState::initial(inst).y
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Gradient-mapping norm at `x` for curvature estimate `l`, relative to the
/// gradient's magnitude.
fn stationarity(inst: &ProblemInstance, x: &[f64], l: f64, grad: &mut [f64], scratch: &mut Vec<f64>) -> f64 {
    weighted_sum_rate_gradient(inst, x, grad);
    let mut trial: Vec<f64> = x.iter().zip(grad.iter()).map(|(xi, gi)| xi + gi / l).collect();
    project_blocks(inst, &mut trial, scratch);
    let mapping = trial.iter().zip(x).map(|(t, xi)| (t - xi).abs()).fold(0.0, f64::max) * l;
    mapping / inf_norm(grad).max(1.0)
}

/// Solves the weighted-sum-rate program by accelerated projected gradient
/// ascent. The curvature estimate is found by backtracking on gradient
/// differences and relaxed after every accepted step; momentum restarts when
/// the step and the momentum direction disagree. The result is the last
/// iterate on success and the best one seen otherwise.
///
/// `tol` bounds the gradient-mapping norm divided by `max(1, |grad|_inf)`.
pub fn oracle_solve(inst: &ProblemInstance, config: &OracleConfig) -> Result<OracleSolution, OracleError> {
    if config.max_iters == 0 || !(config.tol > 0.0) {
        return Err(OracleError::InvalidConfig("max_iters >= 1 and tol > 0 required"));
    }
    let nv = inst.num_vars();
    let mut l = match config.step {
        Some(s) if s > 0.0 && s.is_finite() => 1.0 / s,
        Some(_) => return Err(OracleError::InvalidConfig("step must be positive")),
        None => gradient_lipschitz(inst).max(1e-12),
    };
    let l_floor = l * 1e-12;
    let mut x = equal_power_allocation(inst);
    let mut v = x.clone();
    let mut theta = 1.0f64;
    let mut grad_v = vec![0.0; nv];
    let mut grad_t = vec![0.0; nv];
    let mut trial = vec![0.0; nv];
    let mut scratch = Vec::new();
    let mut best = (x.clone(), weighted_sum_rate(inst, &x));
    let mut measure = f64::INFINITY;

    for it in 0..config.max_iters {
        weighted_sum_rate_gradient(inst, &v, &mut grad_v);
        loop {
            for i in 0..nv {
                trial[i] = v[i] + grad_v[i] / l;
            }
            project_blocks(inst, &mut trial, &mut scratch);
            weighted_sum_rate_gradient(inst, &trial, &mut grad_t);
            let mut dd = 0.0;
            let mut gg = 0.0;
            for i in 0..nv {
                let d = trial[i] - v[i];
                let g = grad_t[i] - grad_v[i];
                dd += d * d;
                gg += g * g;
            }
            if gg <= l * l * dd || dd == 0.0 {
                break;
            }
            l *= 2.0;
        }
        // restart when the new step points against the momentum
        let agreement: f64 = (0..nv).map(|i| (trial[i] - v[i]) * (trial[i] - x[i])).sum();
        if agreement < 0.0 {
            theta = 1.0;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_next;
        for i in 0..nv {
            v[i] = trial[i] + momentum * (trial[i] - x[i]);
        }
        // momentum may leave the feasible set; keep the extrapolated point feasible
        project_blocks(inst, &mut v, &mut scratch);
        x.copy_from_slice(&trial);
        theta = theta_next;
        let fx = weighted_sum_rate(inst, &x);
        if fx > best.1 {
            best = (x.clone(), fx);
        }
        l = (l * 0.8).max(l_floor);
        if it % 10 == 9 || it + 1 == config.max_iters {
            measure = stationarity(inst, &x, l, &mut grad_v, &mut scratch);
            if measure <= config.tol {
                return Ok(OracleSolution {
                    value: fx,
                    p: x,
                    iterations: it + 1,
                    stationarity: measure,
                });
            }
        }
    }
    Err(OracleError::NotConverged(Box::new(OracleSolution {
        p: best.0,
        value: best.1,
        iterations: config.max_iters,
        stationarity: measure,
    })))
}

/// KKT residual of `p` for the weighted-sum-rate program. Each antenna's
/// multiplier is recovered from the projection threshold of one gradient step
/// with unit curvature; the residual combines stationarity, budget
/// feasibility and complementary slackness.
pub fn oracle_kkt_residual(inst: &ProblemInstance, p: &[f64]) -> f64 {
    let access = inst.access();
    let mut grad = vec![0.0; inst.num_vars()];
    weighted_sum_rate_gradient(inst, p, &mut grad);
    let mut worst = 0.0f64;
    let mut block = Vec::new();
    for k in 0..access.num_antennas() {
        let vars = access.antenna_vars(k);
        if vars.is_empty() {
            continue;
        }
        block.clear();
        block.extend(vars.iter().map(|&i| p[i] + grad[i]));
        let budget = inst.budgets()[k];
        let nu = capped_simplex_threshold(&block, budget);
        let load: f64 = vars.iter().map(|&i| p[i]).sum();
        worst = worst.max(load - budget).max(nu * (budget - load).abs());
        for &i in vars {
            let r = if p[i] > 0.0 { (grad[i] - nu).abs() } else { (grad[i] - nu).max(0.0) };
            worst = worst.max(r);
        }
        if p.iter().any(|&x| x < 0.0) {
            worst = f64::INFINITY;
        }
    }
    worst
}

/// Interference-free reference: the optimum allocation when gains are
/// normalized by noise alone, evaluated without co-channel interference.
#[derive(Debug, Clone, PartialEq)]
pub struct NoInterferenceBound {
    pub p: Vec<f64>,
    /// bit/s/Hz per user.
    pub per_user_rate: Vec<f64>,
    pub converged: bool,
}

pub fn no_interference_bound(
    scenario: &ChannelScenario,
    weights: Vec<f64>,
    budgets: Vec<f64>,
    proximal: Vec<f64>,
    config: &OracleConfig,
) -> Result<NoInterferenceBound, OracleError> {
    let normalizer = vec![scenario.noise_power; scenario.num_users()];
    let inst = build_instance_normalized(scenario, &normalizer, weights, budgets, proximal)?;
    let (solution, converged) = match oracle_solve(&inst, config) {
        Ok(s) => (s, true),
        Err(OracleError::NotConverged(s)) => (*s, false),
        Err(e) => return Err(e),
    };
    let per_user_rate = (0..scenario.num_users())
        .map(|n| interference_free_rate(&solution.p, scenario, n))
        .collect();
    let bound = NoInterferenceBound {
        p: solution.p,
        per_user_rate,
        converged,
    };
    Ok(bound)
}
