//! Problem data shared by every stage of the pipeline.
//!
//! The power vector is stored flat and user-major: all of user 0's serving
//! antennas (ascending antenna index), then user 1's, and so on. Every
//! per-variable quantity (gains, powers, auxiliaries) uses that layout, and
//! [`AccessMap`] is the only place that knows how to translate between a
//! flat index and an `(antenna, user)` pair.

use std::fmt;
use std::ops::Range;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

/// Proximal weight used when an instance does not override it.
pub const DEFAULT_PROXIMAL: f64 = 3.0;

/// A single broken invariant, naming the offending index.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("user {user} has an empty serving set")]
    EmptyServingSet { user: usize },
    #[error("user {user} lists antenna {antenna} more than once")]
    DuplicateServingAntenna { user: usize, antenna: usize },
    #[error("user {user} references antenna {antenna}, which does not exist")]
    AntennaOutOfRange { user: usize, antenna: usize },
    #[error("antenna {antenna} and user {user} disagree on the serving relation")]
    InconsistentAccessMap { antenna: usize, user: usize },
    #[error("{field}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("gain for antenna {antenna}, user {user} must be positive and finite")]
    NonPositiveGain { antenna: usize, user: usize },
    #[error("no gain given for antenna {antenna}, user {user}")]
    MissingGain { antenna: usize, user: usize },
    #[error("gain given for antenna {antenna}, user {user}, which is not a serving pair")]
    OrphanGain { antenna: usize, user: usize },
    #[error("gain for antenna {antenna}, user {user} given more than once")]
    DuplicateGain { antenna: usize, user: usize },
    #[error("weight of user {user} must be positive and finite")]
    NonPositiveWeight { user: usize },
    #[error("budget of antenna {antenna} must be positive and finite")]
    NonPositiveBudget { antenna: usize },
    #[error("proximal parameter of user {user} must be positive and finite")]
    NonPositiveProximal { user: usize },
}

/// Every violation found while validating one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn check(violations: Vec<Violation>) -> Result<(), ValidationReport> {
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations })
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Bipartite serving relation between antennas and users.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessMap {
    num_antennas: usize,
    serving: Vec<Vec<usize>>,
    served: Vec<Vec<usize>>,
    user_offsets: Vec<usize>,
    antenna_vars: Vec<Vec<usize>>,
    var_antenna: Vec<usize>,
    var_user: Vec<usize>,
}

impl AccessMap {
    /// Builds the map from per-user serving sets; the served sets are derived.
    pub fn new(num_antennas: usize, serving_sets: Vec<Vec<usize>>) -> Result<Self, ValidationReport> {
        let mut violations = Vec::new();
        let mut serving = Vec::with_capacity(serving_sets.len());
        for (user, set) in serving_sets.into_iter().enumerate() {
            if set.is_empty() {
                violations.push(Violation::EmptyServingSet { user });
            }
            let mut sorted = set;
            sorted.sort_unstable();
            for w in sorted.windows(2) {
                if w[0] == w[1] {
                    violations.push(Violation::DuplicateServingAntenna { user, antenna: w[0] });
                }
            }
            sorted.dedup();
            for &antenna in &sorted {
                if antenna >= num_antennas {
                    violations.push(Violation::AntennaOutOfRange { user, antenna });
                }
            }
            serving.push(sorted);
        }
        ValidationReport::check(violations)?;
        Ok(Self::assemble(num_antennas, serving))
    }

    /// Builds the map from both directions of the relation and checks that they
    /// agree.
    pub fn from_parts(
        num_antennas: usize,
        serving_sets: Vec<Vec<usize>>,
        served_sets: Vec<Vec<usize>>,
    ) -> Result<Self, ValidationReport> {
        let num_users = serving_sets.len();
        let mut violations = Vec::new();
        if served_sets.len() != num_antennas {
            violations.push(Violation::DimensionMismatch {
                field: "served_sets",
                expected: num_antennas,
                found: served_sets.len(),
            });
            return Err(ValidationReport { violations });
        }
        for (antenna, users) in served_sets.iter().enumerate() {
            for &user in users {
                if user >= num_users || !serving_sets[user].contains(&antenna) {
                    violations.push(Violation::InconsistentAccessMap { antenna, user });
                }
            }
        }
        for (user, antennas) in serving_sets.iter().enumerate() {
            for &antenna in antennas {
                if antenna < num_antennas && !served_sets[antenna].contains(&user) {
                    violations.push(Violation::InconsistentAccessMap { antenna, user });
                }
            }
        }
        let map = Self::new(num_antennas, serving_sets);
        match map {
            Ok(map) => {
                ValidationReport::check(violations)?;
                Ok(map)
            }
            Err(mut report) => {
                report.violations.extend(violations);
                Err(report)
            }
        }
    }

    fn assemble(num_antennas: usize, serving: Vec<Vec<usize>>) -> Self {
        let mut served = vec![Vec::new(); num_antennas];
        let mut antenna_vars = vec![Vec::new(); num_antennas];
        let mut user_offsets = Vec::with_capacity(serving.len() + 1);
        let mut var_antenna = Vec::new();
        let mut var_user = Vec::new();
        user_offsets.push(0);
        for (user, set) in serving.iter().enumerate() {
            for &antenna in set {
                served[antenna].push(user);
                antenna_vars[antenna].push(var_antenna.len());
                var_antenna.push(antenna);
                var_user.push(user);
            }
            user_offsets.push(var_antenna.len());
        }
        Self {
            num_antennas,
            serving,
            served,
            user_offsets,
            antenna_vars,
            var_antenna,
            var_user,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_users(&self) -> usize {
        self.serving.len()
    }

    /// Length of the flat power vector, the sum of all serving-set sizes.
    pub fn num_vars(&self) -> usize {
        self.var_antenna.len()
    }

    /// Serving set R(n), ascending.
    pub fn serving(&self, user: usize) -> &[usize] {
        &self.serving[user]
    }

    /// Served set U(k), ascending.
    pub fn served(&self, antenna: usize) -> &[usize] {
        &self.served[antenna]
    }

    pub fn serving_sets(&self) -> &[Vec<usize>] {
        &self.serving
    }

    pub fn served_sets(&self) -> &[Vec<usize>] {
        &self.served
    }

    /// Flat indices of one user's block.
    pub fn user_vars(&self, user: usize) -> Range<usize> {
        self.user_offsets[user]..self.user_offsets[user + 1]
    }

    /// Flat indices of the variables attached to one antenna, in ascending
    /// user order.
    pub fn antenna_vars(&self, antenna: usize) -> &[usize] {
        &self.antenna_vars[antenna]
    }

    pub fn var_antenna(&self, var: usize) -> usize {
        self.var_antenna[var]
    }

    pub fn var_user(&self, var: usize) -> usize {
        self.var_user[var]
    }

    pub fn var_index(&self, antenna: usize, user: usize) -> Option<usize> {
        self.serving
            .get(user)?
            .binary_search(&antenna)
            .ok()
            .map(|pos| self.user_offsets[user] + pos)
    }

    /// Entry of the antenna/variable incidence matrix E.
    pub fn incidence(&self, antenna: usize, var: usize) -> bool {
        self.var_antenna[var] == antenna
    }

    /// `E * x`: per-antenna sums of a flat vector, accumulated in ascending
    /// user order.
    pub fn antenna_sums(&self, x: &[f64]) -> Vec<f64> {
        self.antenna_vars
            .iter()
            .map(|vars| vars.iter().map(|&i| x[i]).sum())
            .collect()
    }
}

/// Raw JSON form of a problem instance (indices are zero-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    #[serde(rename = "K")]
    pub num_antennas: usize,
    #[serde(rename = "N")]
    pub num_users: usize,
    pub serving_sets: Vec<Vec<usize>>,
    /// `(antenna, user, gamma)` triplets.
    pub gains: Vec<(usize, usize, f64)>,
    pub weights: Vec<f64>,
    pub budgets: Vec<f64>,
    pub proximal_params: Vec<f64>,
}

/// Validates a document and returns the typed instance, or every violation.
pub fn validate_instance(doc: InstanceDocument) -> Result<ProblemInstance, ValidationReport> {
    let mut violations = Vec::new();
    if doc.serving_sets.len() != doc.num_users {
        violations.push(Violation::DimensionMismatch {
            field: "serving_sets",
            expected: doc.num_users,
            found: doc.serving_sets.len(),
        });
        return Err(ValidationReport { violations });
    }
    let access = AccessMap::new(doc.num_antennas, doc.serving_sets)?;
    let mut gains = vec![f64::NAN; access.num_vars()];
    let mut seen = vec![false; access.num_vars()];
    for &(antenna, user, gamma) in &doc.gains {
        match access.var_index(antenna, user) {
            Some(i) if seen[i] => violations.push(Violation::DuplicateGain { antenna, user }),
            Some(i) => {
                seen[i] = true;
                gains[i] = gamma;
            }
            None => violations.push(Violation::OrphanGain { antenna, user }),
        }
    }
    for (i, ok) in seen.iter().enumerate() {
        if !ok {
            violations.push(Violation::MissingGain {
                antenna: access.var_antenna(i),
                user: access.var_user(i),
            });
        }
    }
    if !violations.is_empty() {
        return Err(ValidationReport { violations });
    }
    ProblemInstance::new(access, gains, doc.weights, doc.budgets, doc.proximal_params)
}

/// Weighted-sum-rate program data: gains, weights, per-antenna budgets and
/// proximal parameters over a fixed access relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDocument", into = "InstanceDocument")]
pub struct ProblemInstance {
    access: AccessMap,
    gains: Vec<f64>,
    weights: Vec<f64>,
    budgets: Vec<f64>,
    proximal: Vec<f64>,
}

impl ProblemInstance {
    /// `gains` follows the flat variable layout of `access`.
    pub fn new(
        access: AccessMap,
        gains: Vec<f64>,
        weights: Vec<f64>,
        budgets: Vec<f64>,
        proximal: Vec<f64>,
    ) -> Result<Self, ValidationReport> {
        let mut violations = Vec::new();
        let dims = [
            ("gains", access.num_vars(), gains.len()),
            ("weights", access.num_users(), weights.len()),
            ("budgets", access.num_antennas(), budgets.len()),
            ("proximal_params", access.num_users(), proximal.len()),
        ];
        for (field, expected, found) in dims {
            if expected != found {
                violations.push(Violation::DimensionMismatch { field, expected, found });
            }
        }
        ValidationReport::check(violations.clone())?;
        for (i, &g) in gains.iter().enumerate() {
            if !positive(g) {
                violations.push(Violation::NonPositiveGain {
                    antenna: access.var_antenna(i),
                    user: access.var_user(i),
                });
            }
        }
        for (user, &w) in weights.iter().enumerate() {
            if !positive(w) {
                violations.push(Violation::NonPositiveWeight { user });
            }
        }
        for (antenna, &b) in budgets.iter().enumerate() {
            if !positive(b) {
                violations.push(Violation::NonPositiveBudget { antenna });
            }
        }
        for (user, &c) in proximal.iter().enumerate() {
            if !positive(c) {
                violations.push(Violation::NonPositiveProximal { user });
            }
        }
        ValidationReport::check(violations)?;
        Ok(Self {
            access,
            gains,
            weights,
            budgets,
            proximal,
        })
    }

    pub fn access(&self) -> &AccessMap {
        &self.access
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn gain(&self, antenna: usize, user: usize) -> Option<f64> {
        self.access.var_index(antenna, user).map(|i| self.gains[i])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn proximal(&self) -> &[f64] {
        &self.proximal
    }

    pub fn num_antennas(&self) -> usize {
        self.access.num_antennas()
    }

    pub fn num_users(&self) -> usize {
        self.access.num_users()
    }

    pub fn num_vars(&self) -> usize {
        self.access.num_vars()
    }

    /// Same instance with every gain multiplied by `factor`.
    pub fn with_scaled_gains(&self, factor: f64) -> Result<Self, ValidationReport> {
        let gains = self.gains.iter().map(|g| g * factor).collect();
        Self::new(
            self.access.clone(),
            gains,
            self.weights.clone(),
            self.budgets.clone(),
            self.proximal.clone(),
        )
    }

    pub fn with_proximal(&self, proximal: Vec<f64>) -> Result<Self, ValidationReport> {
        Self::new(
            self.access.clone(),
            self.gains.clone(),
            self.weights.clone(),
            self.budgets.clone(),
            proximal,
        )
    }

    pub fn to_document(&self) -> InstanceDocument {
        let gains = (0..self.num_vars())
            .map(|i| (self.access.var_antenna(i), self.access.var_user(i), self.gains[i]))
            .collect();
        InstanceDocument {
            num_antennas: self.num_antennas(),
            num_users: self.num_users(),
            serving_sets: self.access.serving_sets().to_vec(),
            gains,
            weights: self.weights.clone(),
            budgets: self.budgets.clone(),
            proximal_params: self.proximal.clone(),
        }
    }
}

impl TryFrom<InstanceDocument> for ProblemInstance {
    type Error = ValidationReport;

    fn try_from(doc: InstanceDocument) -> Result<Self, Self::Error> {
        validate_instance(doc)
    }
}

impl From<ProblemInstance> for InstanceDocument {
    fn from(inst: ProblemInstance) -> Self {
        inst.to_document()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepSizeError {
    #[error("alpha for antenna {0} must be finite and nonnegative")]
    InvalidAlpha(usize),
    #[error("beta must lie in (0, 1], got {0}")]
    InvalidBeta(f64),
    #[error("expected {expected} dual step sizes, found {found}")]
    Length { expected: usize, found: usize },
}

/// Dual steps `alpha` (one per antenna) and the auxiliary step `beta`.
///
/// An antenna that serves no user carries `alpha = 0` and is left out of the
/// dual update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    alpha: Vec<f64>,
    beta: f64,
}

impl StepSizes {
    pub fn new(alpha: Vec<f64>, beta: f64) -> Result<Self, StepSizeError> {
        if let Some(k) = alpha.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(StepSizeError::InvalidAlpha(k));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(StepSizeError::InvalidBeta(beta));
        }
        Ok(Self { alpha, beta })
    }

    /// Largest step per antenna for which the convergence guarantee holds:
    /// `2 min_{n in U(k)} c_n / (3 |U(k)|)`, rounded toward zero so the
    /// guarantee survives floating point.
    pub fn theorem1(inst: &ProblemInstance) -> Self {
        let access = inst.access();
        let c = inst.proximal();
        let alpha = (0..access.num_antennas())
            .map(|k| {
                let users = access.served(k);
                if users.is_empty() {
                    return 0.0;
                }
                let min_c = users.iter().map(|&n| c[n]).fold(f64::INFINITY, f64::min);
                let count = users.len() as f64;
                let mut a = 2.0 * min_c / (3.0 * count);
                let bound = exact(2.0) * exact(min_c) / (exact(3.0) * exact(count));
                while a > 0.0 && exact(a) > bound {
                    a = a.next_down();
                }
                a
            })
            .collect();
        Self { alpha, beta: 1.0 }
    }

    /// The smaller uniform step `min_n c_n / (2 max_k |U(k)|)`.
    pub fn lin2006(inst: &ProblemInstance) -> Self {
        let access = inst.access();
        let min_c = inst.proximal().iter().copied().fold(f64::INFINITY, f64::min);
        let max_served = (0..access.num_antennas())
            .map(|k| access.served(k).len())
            .max()
            .unwrap_or(0)
            .max(1);
        let a = min_c / (2.0 * max_served as f64);
        Self {
            alpha: vec![a; access.num_antennas()],
            beta: 1.0,
        }
    }

    pub fn uniform(num_antennas: usize, alpha: f64, beta: f64) -> Result<Self, StepSizeError> {
        Self::new(vec![alpha; num_antennas], beta)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self, StepSizeError> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(StepSizeError::InvalidBeta(beta));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn check_len(&self, num_antennas: usize) -> Result<(), StepSizeError> {
        if self.alpha.len() == num_antennas {
            Ok(())
        } else {
            Err(StepSizeError::Length {
                expected: num_antennas,
                found: self.alpha.len(),
            })
        }
    }

    /// Whether `1/alpha_k - (3/2) sum_{n in U(k)} 1/c_n >= 0` for every
    /// serving antenna, evaluated in exact rational arithmetic.
    pub fn satisfies_psd_condition(&self, inst: &ProblemInstance) -> bool {
        self.psd_margins(inst).iter().all(|m| m.as_ref().is_none_or(|m| *m >= BigRational::zero()))
    }

    /// Exact per-antenna margin of the condition above (`None` for idle
    /// antennas).
    pub fn psd_margins(&self, inst: &ProblemInstance) -> Vec<Option<BigRational>> {
        let access = inst.access();
        let c = inst.proximal();
        (0..access.num_antennas())
            .map(|k| {
                let users = access.served(k);
                if users.is_empty() {
                    return None;
                }
                let a = self.alpha[k];
                if a <= 0.0 {
                    return Some(-BigRational::one());
                }
                let sum = users
                    .iter()
                    .fold(BigRational::zero(), |acc, &n| acc + exact(c[n]).recip());
                Some(exact(a).recip() - exact(1.5) * sum)
            })
            .collect()
    }
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
}

/// Iterates of the primal-dual loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmState {
    pub p: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iteration: usize,
}

impl AlgorithmState {
    /// Zero prices with the auxiliary vector at the equal-power split
    /// `P_k / |U(k)|`.
    pub fn initial(inst: &ProblemInstance) -> Self {
        let access = inst.access();
        let mut y = vec![0.0; access.num_vars()];
        for k in 0..access.num_antennas() {
            let vars = access.antenna_vars(k);
            for &i in vars {
                y[i] = inst.budgets()[k] / vars.len() as f64;
            }
        }
        Self {
            p: vec![0.0; access.num_vars()],
            y,
            lambda: vec![0.0; access.num_antennas()],
            iteration: 0,
        }
    }

    pub fn matches(&self, access: &AccessMap) -> bool {
        self.p.len() == access.num_vars()
            && self.y.len() == access.num_vars()
            && self.lambda.len() == access.num_antennas()
    }
}

/// Optimum of one user's Lagrangian block.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub user: usize,
    /// Antennas with strictly positive power, ascending.
    pub omega: Vec<usize>,
    /// `sum_{k in omega} p_kn * gamma_kn`.
    pub s: f64,
    /// Powers aligned with the user's serving set.
    pub powers: Vec<f64>,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
