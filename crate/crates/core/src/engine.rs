//! Single-layer proximal primal-dual iteration.
//!
//! Each iteration maximizes the Lagrangian twice: once at the current prices
//! (the power reports that drive the price update) and once at the fresh
//! prices (the target the auxiliary vector moves toward).

use std::io::{self, Write};

use crate::evaluation::weighted_sum_rate;
use crate::local::{solve_into, SubproblemInput};
use crate::model::{AlgorithmState, ProblemInstance, StepSizeError, StepSizes};

pub const DEFAULT_MAX_ITERATIONS: usize = 20_000;
pub const DEFAULT_STOP_TOL: f64 = 1e-8;

/// Fixed point `(y*, lambda*)` used as the center of the Lyapunov function.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPoint {
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl StationaryPoint {
    pub fn from_state(state: &AlgorithmState) -> Self {
        Self {
            y: state.y.clone(),
            lambda: state.lambda.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub step_sizes: StepSizes,
    pub max_iterations: usize,
    /// Threshold on `max(|lambda(t+1) - lambda(t)|_inf, |y(t+1) - y(t)|_inf)`.
    pub stop_tol: f64,
    pub record_trace: bool,
    /// Optimal objective `f(y*)`; when set, every record carries the dual gap.
    pub reference_value: Option<f64>,
    /// When set, every record carries the Lyapunov value around this point.
    pub lyapunov_reference: Option<StationaryPoint>,
    /// Warm start; defaults to [`AlgorithmState::initial`].
    pub initial_state: Option<AlgorithmState>,
    /// Keep `(lambda(t+1), y(t+1))` in every trace record.
    pub record_iterates: bool,
}

impl RunConfig {
    pub fn new(step_sizes: StepSizes) -> Self {
        Self {
            step_sizes,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            stop_tol: DEFAULT_STOP_TOL,
            record_trace: true,
            reference_value: None,
            lyapunov_reference: None,
            initial_state: None,
            record_iterates: false,
        }
    }

    pub fn max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn stop_tol(mut self, tol: f64) -> Self {
        self.stop_tol = tol;
        self
    }

    pub fn record_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn reference_value(mut self, value: f64) -> Self {
        self.reference_value = Some(value);
        self
    }

    pub fn lyapunov_reference(mut self, point: StationaryPoint) -> Self {
        self.lyapunov_reference = Some(point);
        self
    }

    pub fn record_iterates(mut self, on: bool) -> Self {
        self.record_iterates = on;
        if on {
            self.record_trace = true;
        }
        self
    }

    pub fn warm_start(mut self, state: AlgorithmState) -> Self {
        self.initial_state = Some(state);
        self
    }

    /// Checks the config against an instance and returns the starting state.
    pub(crate) fn prepare(&self, inst: &ProblemInstance) -> Result<AlgorithmState, EngineError> {
        if self.max_iterations == 0 {
            return Err(EngineError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(EngineError::InvalidConfig("stop_tol must be nonnegative".into()));
        }
        self.step_sizes.check_len(inst.num_antennas())?;
        let state = match &self.initial_state {
            Some(s) => {
                if !s.matches(inst.access()) {
                    return Err(EngineError::InvalidConfig("initial state does not match the instance".into()));
                }
                if s.lambda.iter().any(|&l| !(l >= 0.0)) {
                    return Err(EngineError::InvalidConfig("initial prices must be nonnegative".into()));
                }
                s.clone()
            }
            None => AlgorithmState::initial(inst),
        };
        if let Some(r) = &self.lyapunov_reference {
            if r.y.len() != inst.num_vars() || r.lambda.len() != inst.num_antennas() {
                return Err(EngineError::InvalidConfig("Lyapunov reference does not match the instance".into()));
            }
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    /// Lagrangian at `(p(t), lambda(t), y(t))`.
    pub lagrangian_value: f64,
    pub dual_gap: Option<f64>,
    pub lambda_step_inf: f64,
    pub y_step_inf: f64,
    /// Backhaul messages in this round (distributed runtime only).
    pub messages_exchanged: usize,
    /// Lyapunov value at `(y(t), lambda(t))`.
    pub lyapunov: Option<f64>,
    /// `(lambda(t+1), y(t+1))`, when iterates are recorded.
    pub snapshot: Option<Snapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub lambda: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: AlgorithmState,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
    /// Lyapunov value at the final `(y, lambda)`, when a reference was given.
    pub final_lyapunov: Option<f64>,
}

impl RunOutcome {
    /// The primal answer, `y` at the last iterate.
    pub fn solution(&self) -> &[f64] {
        &self.state.y
    }

    pub fn iterations(&self) -> usize {
        self.state.iteration
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("did not converge within {} iterations", .0.state.iteration)]
    NotConverged(Box<RunOutcome>),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    StepSizes(#[from] StepSizeError),
}

impl EngineError {
    /// The last state of a run that hit its iteration limit.
    pub fn into_outcome(self) -> Option<RunOutcome> {
        match self {
            EngineError::NotConverged(outcome) => Some(*outcome),
            _ => None,
        }
    }
}

/// Builds one user's block input, gathering prices into `lambda_buf`.
pub(crate) fn user_input<'a>(
    inst: &'a ProblemInstance,
    user: usize,
    lambda: &[f64],
    y: &'a [f64],
    lambda_buf: &'a mut Vec<f64>,
) -> SubproblemInput<'a> {
    let access = inst.access();
    lambda_buf.clear();
    lambda_buf.extend(access.serving(user).iter().map(|&k| lambda[k]));
    let vars = access.user_vars(user);
    SubproblemInput {
        user,
        gammas: &inst.gains()[vars.clone()],
        weight: inst.weights()[user],
        proximal: inst.proximal()[user],
        lambdas: lambda_buf,
        aux: &y[vars],
    }
}

/// Maximizes the Lagrangian over `p >= 0` user by user, writing into `out`.
pub fn lagrangian_maximize_into(inst: &ProblemInstance, lambda: &[f64], y: &[f64], out: &mut [f64]) {
    let access = inst.access();
    let mut buf = Vec::new();
    for n in 0..access.num_users() {
        let vars = access.user_vars(n);
        let input = user_input(inst, n, lambda, y, &mut buf);
        solve_into(&input, &mut out[vars]);
    }
}

pub fn lagrangian_maximize(inst: &ProblemInstance, lambda: &[f64], y: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; inst.num_vars()];
    lagrangian_maximize_into(inst, lambda, y, &mut p);
    p
}

/// Projected price step for one antenna.
#[inline]
pub(crate) fn price_step(lambda: f64, alpha: f64, load: f64, budget: f64) -> f64 {
    (lambda + alpha * (load - budget)).max(0.0)
}

/// `lambda_k' = [lambda_k + alpha_k (sum_{n in U(k)} p_kn - P_k)]^+`; antennas that
/// serve nobody keep their price.
pub fn dual_update_into(inst: &ProblemInstance, lambda: &[f64], p: &[f64], alpha: &[f64], out: &mut [f64]) {
    let access = inst.access();
    for k in 0..access.num_antennas() {
        let vars = access.antenna_vars(k);
        if vars.is_empty() {
            out[k] = lambda[k];
            continue;
        }
        let load: f64 = vars.iter().map(|&i| p[i]).sum();
        out[k] = price_step(lambda[k], alpha[k], load, inst.budgets()[k]);
    }
}

pub fn dual_update(inst: &ProblemInstance, lambda: &[f64], p: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lambda.len()];
    dual_update_into(inst, lambda, p, alpha, &mut out);
    out
}

/// `y' = y + beta (z - y)`.
pub fn auxiliary_update(y: &[f64], z: &[f64], beta: f64) -> Vec<f64> {
    y.iter().zip(z).map(|(&yi, &zi)| yi + beta * (zi - yi)).collect()
}

/// Lagrangian of the proximal problem at `(p, lambda, y)`.
pub fn lagrangian_value(inst: &ProblemInstance, p: &[f64], lambda: &[f64], y: &[f64]) -> f64 {
    let access = inst.access();
    let mut value = weighted_sum_rate(inst, p);
    for (k, load) in access.antenna_sums(p).into_iter().enumerate() {
        value -= lambda[k] * (load - inst.budgets()[k]);
    }
    for i in 0..access.num_vars() {
        let d = p[i] - y[i];
        value -= 0.5 * inst.proximal()[access.var_user(i)] * d * d;
    }
    value
}

/// `|lambda - lambda*|_A + |y - y*|_{BV}` with `A = diag(alpha)`,
/// `B = beta I`, `V = diag(c)`; idle antennas are skipped.
pub fn lyapunov_value(
    inst: &ProblemInstance,
    y: &[f64],
    lambda: &[f64],
    reference: &StationaryPoint,
    steps: &StepSizes,
) -> f64 {
    let access = inst.access();
    let mut v = 0.0;
    for k in 0..access.num_antennas() {
        let a = steps.alpha()[k];
        if a > 0.0 && !access.served(k).is_empty() {
            let d = lambda[k] - reference.lambda[k];
            v += d * d / a;
        }
    }
    for i in 0..access.num_vars() {
        let d = y[i] - reference.y[i];
        v += inst.proximal()[access.var_user(i)] * d * d / steps.beta();
    }
    v
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Everything one iteration produced, as seen by an observer of the whole
/// network.
pub(crate) struct RoundView<'a> {
    pub t: usize,
    pub p: &'a [f64],
    pub lambda: &'a [f64],
    pub y: &'a [f64],
    pub lambda_next: &'a [f64],
    pub y_next: &'a [f64],
    pub messages: usize,
}

/// Builds the trace record of one round and reports whether the stopping
/// rule fired.
pub(crate) fn observe_round(
    inst: &ProblemInstance,
    config: &RunConfig,
    round: &RoundView<'_>,
    trace: &mut Vec<IterationRecord>,
) -> bool {
    let lambda_step_inf = inf_dist(round.lambda_next, round.lambda);
    let y_step_inf = inf_dist(round.y_next, round.y);
    if config.record_trace {
        let lagrangian = lagrangian_value(inst, round.p, round.lambda, round.y);
        let lyapunov = config
            .lyapunov_reference
            .as_ref()
            .map(|r| lyapunov_value(inst, round.y, round.lambda, r, &config.step_sizes));
        let snapshot = config.record_iterates.then(|| Snapshot {
            lambda: round.lambda_next.to_vec(),
            y: round.y_next.to_vec(),
        });
        trace.push(IterationRecord {
            t: round.t,
            lagrangian_value: lagrangian,
            dual_gap: config.reference_value.map(|f| lagrangian - f),
            lambda_step_inf,
            y_step_inf,
            messages_exchanged: round.messages,
            lyapunov,
            snapshot,
        });
    }
    lambda_step_inf.max(y_step_inf) <= config.stop_tol
}

pub(crate) fn finish_run(
    inst: &ProblemInstance,
    config: &RunConfig,
    state: AlgorithmState,
    trace: Vec<IterationRecord>,
    termination: Termination,
) -> RunOutcome {
    let final_lyapunov = config
        .lyapunov_reference
        .as_ref()
        .map(|r| lyapunov_value(inst, &state.y, &state.lambda, r, &config.step_sizes));
    RunOutcome {
        state,
        trace,
        termination,
        final_lyapunov,
    }
}

/// Runs the iteration until both steps fall below `stop_tol` or the iteration
/// limit is hit.
pub fn run(inst: &ProblemInstance, config: &RunConfig) -> Result<RunOutcome, EngineError> {
    let mut state = config.prepare(inst)?;
    let steps = &config.step_sizes;
    let nv = inst.num_vars();
    let mut p = vec![0.0; nv];
    let mut z = vec![0.0; nv];
    let mut lambda_next = vec![0.0; inst.num_antennas()];
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIterations;

    for _ in 0..config.max_iterations {
        let t = state.iteration;
        lagrangian_maximize_into(inst, &state.lambda, &state.y, &mut p);
        dual_update_into(inst, &state.lambda, &p, steps.alpha(), &mut lambda_next);
        lagrangian_maximize_into(inst, &lambda_next, &state.y, &mut z);
        let y_next = auxiliary_update(&state.y, &z, steps.beta());

        let round = RoundView {
            t,
            p: &p,
            lambda: &state.lambda,
            y: &state.y,
            lambda_next: &lambda_next,
            y_next: &y_next,
            messages: 0,
        };
        let stop = observe_round(inst, config, &round, &mut trace);
        std::mem::swap(&mut state.lambda, &mut lambda_next);
        state.y = y_next;
        state.p.copy_from_slice(&p);
        state.iteration = t + 1;
        if stop {
            termination = Termination::Converged;
            break;
        }
    }

    let outcome = finish_run(inst, config, state, trace, termination);
    match termination {
        Termination::Converged => Ok(outcome),
        Termination::MaxIterations => Err(EngineError::NotConverged(Box::new(outcome))),
    }
}

/// Which fixed-point conditions a state meets, with the measured violations.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    /// `|argmax_p L(p, lambda, y) - y|_inf`.
    pub argmax_gap: f64,
    /// `max_k (sum_{n in U(k)} y_kn - P_k)`, clipped below at zero.
    pub budget_violation: f64,
    /// Most negative price, as a nonnegative number.
    pub dual_violation: f64,
    /// `max_k |lambda_k (sum_{n in U(k)} y_kn - P_k)|`.
    pub complementarity: f64,
    pub tol: f64,
}

impl StationarityReport {
    pub fn argmax_ok(&self) -> bool {
        self.argmax_gap <= self.tol
    }

    pub fn feasibility_ok(&self) -> bool {
        self.budget_violation <= self.tol && self.dual_violation <= self.tol
    }

    pub fn complementarity_ok(&self) -> bool {
        self.complementarity <= self.tol
    }

    pub fn is_stationary(&self) -> bool {
        self.argmax_ok() && self.feasibility_ok() && self.complementarity_ok()
    }
}

pub fn check_stationary(state: &AlgorithmState, inst: &ProblemInstance, tol: f64) -> StationarityReport {
    let argmax = lagrangian_maximize(inst, &state.lambda, &state.y);
    let argmax_gap = inf_dist(&argmax, &state.y);
    let loads = inst.access().antenna_sums(&state.y);
    let mut budget_violation = 0.0f64;
    let mut complementarity = 0.0f64;
    for (k, load) in loads.into_iter().enumerate() {
        let slack = load - inst.budgets()[k];
        budget_violation = budget_violation.max(slack);
        complementarity = complementarity.max((state.lambda[k] * slack).abs());
    }
    let dual_violation = state.lambda.iter().fold(0.0f64, |m, &l| m.max(-l));
    StationarityReport {
        argmax_gap,
        budget_violation,
        dual_violation,
        complementarity,
        tol,
    }
}

/// Both sides of the two-maximizer inequality
/// `[g(p1) - g(y*)]^T (p2 - y*) <= 1/4 (l2 - l1)^T E V^-1 E^T (l2 - l1)`,
/// where `p_i` maximizes the Lagrangian at `(l_i, y)` and the gradients are
/// read off the stationarity relation `g(p) = E^T lambda + V (p - y)`.
pub fn two_maximizer_bound(
    inst: &ProblemInstance,
    y: &[f64],
    lambda1: &[f64],
    lambda2: &[f64],
    reference: &StationaryPoint,
) -> (f64, f64) {
    let access = inst.access();
    let c = inst.proximal();
    let p1 = lagrangian_maximize(inst, lambda1, y);
    let p2 = lagrangian_maximize(inst, lambda2, y);
    let mut lhs = 0.0;
    for i in 0..access.num_vars() {
        let k = access.var_antenna(i);
        let n = access.var_user(i);
        let grad1 = lambda1[k] + c[n] * (p1[i] - y[i]);
        let grad_ref = reference.lambda[k];
        lhs += (grad1 - grad_ref) * (p2[i] - reference.y[i]);
    }
    let mut rhs = 0.0;
    for k in 0..access.num_antennas() {
        let d = lambda2[k] - lambda1[k];
        let inv_c: f64 = access.served(k).iter().map(|&n| 1.0 / c[n]).sum();
        rhs += 0.25 * d * d * inv_c;
    }
    (lhs, rhs)
}

/// Writes a trace as CSV: `t,lagrangian,dual_gap,lambda_step_inf,y_step_inf`.
pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "t,lagrangian,dual_gap,lambda_step_inf,y_step_inf")?;
    for r in trace {
        let gap = r.dual_gap.map(|g| g.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            r.t, r.lagrangian_value, gap, r.lambda_step_inf, r.y_step_inf
        )?;
    }
    Ok(())
}
