//! Configuration-driven experiments: per-seed scenario generation, strategy
//! runs, CSV artifacts and a hashed manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{equal_power_allocation, no_interference_bound, oracle_solve, OracleConfig, OracleError};
use crate::distributed::{assign_hosts, run_distributed, DistributedError, MessageLedger};
use crate::engine::{run, write_trace_csv, EngineError, IterationRecord, RunConfig, RunOutcome};
use crate::evaluation::{
    conservative_rate, dual_gap_trace, iterations_to_gap, summarize, weighted_sum_rate, write_reports_csv,
    ThroughputReport,
};
use crate::model::{dbm_to_watts, ProblemInstance, StepSizes, ValidationReport};
use crate::scenario::{build_problem_instance, ChannelModel, ChannelScenario, NoiseModel, ScenarioError, ScenarioParams};

pub const SCHEMA_VERSION: u32 = 1;

/// Gap thresholds reported by [`compare_step_sizes`].
pub const GAP_THRESHOLDS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: ScenarioBlock,
    pub algorithm: AlgorithmBlock,
    pub strategies: Vec<Strategy>,
    pub runtime: Runtime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBlock {
    pub cells: usize,
    pub spacing_m: f64,
    pub users_per_cell: usize,
    pub seeds: Vec<u64>,
    pub p_dbm: f64,
    pub margin_db: f64,
    pub serving_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSizePolicy {
    Theorem1,
    Lin2006,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmBlock {
    pub c: f64,
    pub beta: f64,
    pub step_size_policy: StepSizePolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manual_alpha: Option<f64>,
    pub stop_tol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Proposed,
    Epa,
    Oracle,
    NoInterference,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::Epa => "epa",
            Strategy::Oracle => "oracle",
            Strategy::NoInterference => "no_interference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Runtime {
    Monolithic,
    Distributed,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Validation(#[from] ValidationReport),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Distributed(#[from] DistributedError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("not converged: {}", .0.join(", "))]
    NotConverged(Vec<String>),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for non-convergence, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::NotConverged(_) => 2,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let config: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Semantic checks beyond the schema; each message names its field.
    pub fn check(&self) -> Result<(), ExperimentError> {
        let fail = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.schema_version != SCHEMA_VERSION {
            return fail(&format!("schema_version: expected {SCHEMA_VERSION}, found {}", self.schema_version));
        }
        let s = &self.scenario;
        if s.seeds.is_empty() {
            return fail("scenario.seeds: must be nonempty");
        }
        if s.cells == 0 {
            return fail("scenario.cells: must be at least 1");
        }
        if s.users_per_cell == 0 {
            return fail("scenario.users_per_cell: must be at least 1");
        }
        if !(s.spacing_m > 0.0 && s.spacing_m.is_finite()) {
            return fail("scenario.spacing_m: must be positive");
        }
        if !s.p_dbm.is_finite() {
            return fail("scenario.p_dbm: must be finite");
        }
        if !s.margin_db.is_finite() {
            return fail("scenario.margin_db: must be finite");
        }
        if s.serving_count == 0 {
            return fail("scenario.serving_count: must be at least 1");
        }
        let a = &self.algorithm;
        if !(a.c > 0.0 && a.c.is_finite()) {
            return fail("algorithm.c: must be positive");
        }
        if !(a.beta > 0.0 && a.beta <= 1.0) {
            return fail("algorithm.beta: must lie in (0, 1]");
        }
        if !(a.stop_tol >= 0.0) {
            return fail("algorithm.stop_tol: must be nonnegative");
        }
        if a.max_iters == 0 {
            return fail("algorithm.max_iters: must be at least 1");
        }
        match (a.step_size_policy, a.manual_alpha) {
            (StepSizePolicy::Manual, None) => return fail("algorithm.manual_alpha: required by the manual policy"),
            (StepSizePolicy::Manual, Some(x)) if !(x > 0.0 && x.is_finite()) => {
                return fail("algorithm.manual_alpha: must be positive")
            }
            _ => {}
        }
        if self.strategies.is_empty() {
            return fail("strategies: must be nonempty");
        }
        Ok(())
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            cells: self.scenario.cells,
            spacing_m: self.scenario.spacing_m,
            users_per_cell: self.scenario.users_per_cell,
            serving_count: self.scenario.serving_count,
            channel: ChannelModel::default(),
            noise: NoiseModel {
                margin_db: self.scenario.margin_db,
                ..NoiseModel::default()
            },
        }
    }

    pub fn budget_watts(&self) -> f64 {
        dbm_to_watts(self.scenario.p_dbm)
    }

    pub fn step_sizes(&self, inst: &ProblemInstance, policy: StepSizePolicy) -> Result<StepSizes, ExperimentError> {
        let steps = match policy {
            StepSizePolicy::Theorem1 => StepSizes::theorem1(inst),
            StepSizePolicy::Lin2006 => StepSizes::lin2006(inst),
            StepSizePolicy::Manual => {
                let a = self
                    .algorithm
                    .manual_alpha
                    .ok_or_else(|| ExperimentError::Config("algorithm.manual_alpha: missing".into()))?;
                StepSizes::uniform(inst.num_antennas(), a, 1.0).map_err(EngineError::from)?
            }
        };
        Ok(steps.with_beta(self.algorithm.beta).map_err(EngineError::from)?)
    }

    /// Generates the scenario for `seed` and its normalized instance.
    pub fn build(&self, seed: u64) -> Result<(ChannelScenario, ProblemInstance), ExperimentError> {
        let scenario = ChannelScenario::generate(&self.scenario_params(), seed)?;
        let n = scenario.num_users();
        let k = scenario.num_antennas();
        let inst = build_problem_instance(
            &scenario,
            vec![1.0; n],
            vec![self.budget_watts(); k],
            vec![self.algorithm.c; n],
        )?;
        Ok((scenario, inst))
    }

    pub fn run_config(&self, inst: &ProblemInstance, policy: StepSizePolicy) -> Result<RunConfig, ExperimentError> {
        Ok(RunConfig::new(self.step_sizes(inst, policy)?)
            .max_iterations(self.algorithm.max_iters)
            .stop_tol(self.algorithm.stop_tol))
    }
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub reports: Vec<ThroughputReport>,
    pub trace: Option<Vec<IterationRecord>>,
    pub ledger: Option<MessageLedger>,
    /// Strategies that hit their iteration limit.
    pub nonconverged: Vec<String>,
}

fn run_proposed(
    config: &ExperimentConfig,
    inst: &ProblemInstance,
    scenario: &ChannelScenario,
) -> Result<(RunOutcome, Option<MessageLedger>), ExperimentError> {
    let run_config = config.run_config(inst, config.algorithm.step_size_policy)?;
    match config.runtime {
        Runtime::Monolithic => match run(inst, &run_config) {
            Ok(o) => Ok((o, None)),
            Err(e @ EngineError::NotConverged(_)) => Ok((e.into_outcome().expect("outcome"), None)),
            Err(e) => Err(e.into()),
        },
        Runtime::Distributed => {
            let topology = assign_hosts(inst, &scenario.topology.bs_of_antenna)?;
            let out = match run_distributed(inst, &topology, &run_config, true) {
                Ok(o) => o,
                Err(e @ DistributedError::NotConverged(_)) => e.into_outcome().expect("outcome"),
                Err(e) => return Err(e.into()),
            };
            Ok((out.outcome, Some(out.ledger)))
        }
    }
}

/// Runs every configured strategy on one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedResult, ExperimentError> {
    let (scenario, inst) = config.build(seed)?;
    let mut result = SeedResult {
        seed,
        reports: Vec::new(),
        trace: None,
        ledger: None,
        nonconverged: Vec::new(),
    };
    for &strategy in &config.strategies {
        let label = strategy.label();
        let report = match strategy {
            Strategy::Proposed => {
                let (outcome, ledger) = run_proposed(config, &inst, &scenario)?;
                if !outcome.converged() {
                    result.nonconverged.push(format!("seed {seed} {label}"));
                }
                let report = ThroughputReport::evaluate(label, outcome.solution(), &scenario, &inst);
                result.trace = Some(outcome.trace);
                result.ledger = ledger;
                report
            }
            Strategy::Epa => ThroughputReport::evaluate(label, &equal_power_allocation(&inst), &scenario, &inst),
            Strategy::Oracle => {
                let sol = match oracle_solve(&inst, &OracleConfig::default()) {
                    Ok(s) => s,
                    Err(e @ OracleError::NotConverged(_)) => {
                        result.nonconverged.push(format!("seed {seed} {label}"));
                        e.into_solution().expect("solution")
                    }
                    Err(e) => return Err(e.into()),
                };
                ThroughputReport::evaluate(label, &sol.p, &scenario, &inst)
            }
            Strategy::NoInterference => {
                let n = scenario.num_users();
                let bound = no_interference_bound(
                    &scenario,
                    vec![1.0; n],
                    vec![config.budget_watts(); scenario.num_antennas()],
                    vec![config.algorithm.c; n],
                    &OracleConfig::default(),
                )?;
                if !bound.converged {
                    result.nonconverged.push(format!("seed {seed} {label}"));
                }
                ThroughputReport {
                    seed,
                    strategy: label.to_string(),
                    per_user_conservative_rate: (0..n).map(|u| conservative_rate(&bound.p, &inst, u)).collect(),
                    weighted_sum: weighted_sum_rate(&inst, &bound.p),
                    per_user_true_rate: bound.per_user_rate,
                }
            }
        };
        result.reports.push(report);
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub files: Vec<ManifestEntry>,
    pub nonconverged: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `dir/name` through a temporary file and records it.
fn write_artifact(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<ManifestEntry>) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_err(&path))?;
    files.push(ManifestEntry {
        path: name.to_string(),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub manifest: Manifest,
    pub results: Vec<SeedResult>,
}

/// Runs all seeds and writes artifacts under `out_dir`. Non-converged runs are
/// still written; they turn into an error unless `allow_nonconverged`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    allow_nonconverged: bool,
) -> Result<ExperimentSummary, ExperimentError> {
    config.check()?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut files = Vec::new();
    let mut results = Vec::new();
    for &seed in &config.scenario.seeds {
        let r = run_seed(config, seed)?;
        for report in &r.reports {
            let bytes = csv_bytes(|b| write_reports_csv(std::slice::from_ref(report), b));
            write_artifact(out_dir, &format!("seed_{seed}_{}.csv", report.strategy), &bytes, &mut files)?;
        }
        if let Some(trace) = &r.trace {
            let bytes = csv_bytes(|b| write_trace_csv(trace, b));
            write_artifact(out_dir, &format!("seed_{seed}_trace.csv"), &bytes, &mut files)?;
        }
        if let Some(ledger) = &r.ledger {
            let bytes = csv_bytes(|b| ledger.write_csv(b));
            write_artifact(out_dir, &format!("seed_{seed}_ledger.csv"), &bytes, &mut files)?;
            let summary = serde_json::to_vec_pretty(&ledger.summary_json()).expect("json");
            write_artifact(out_dir, &format!("seed_{seed}_ledger_summary.json"), &summary, &mut files)?;
        }
        results.push(r);
    }
    let all: Vec<ThroughputReport> = results.iter().flat_map(|r| r.reports.iter().cloned()).collect();
    let summary = serde_json::to_vec_pretty(&summarize(&all)).expect("json");
    write_artifact(out_dir, "summary.json", &summary, &mut files)?;

    let config_bytes = serde_json::to_vec(config).expect("json");
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: sha256_hex(&config_bytes),
        seeds: config.scenario.seeds.clone(),
        files,
        nonconverged: results.iter().flat_map(|r| r.nonconverged.iter().cloned()).collect(),
    };
    let bytes = serde_json::to_vec_pretty(&manifest).expect("json");
    let path = out_dir.join("manifest.json");
    fs::write(&path, bytes).map_err(io_err(&path))?;

    if !manifest.nonconverged.is_empty() && !allow_nonconverged {
        return Err(ExperimentError::NotConverged(manifest.nonconverged));
    }
    Ok(ExperimentSummary { manifest, results })
}

/// One row of the step-size comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepComparisonRow {
    pub seed: u64,
    pub threshold: f64,
    pub theorem1_iters: Option<usize>,
    pub lin2006_iters: Option<usize>,
}

/// Iterations to reach each gap threshold under one policy, measured against
/// the reference optimum `f_star`.
pub fn iterations_to_thresholds(
    inst: &ProblemInstance,
    run_config: RunConfig,
    f_star: f64,
) -> Result<Vec<Option<usize>>, ExperimentError> {
    let run_config = run_config.record_trace(true).reference_value(f_star);
    let outcome = match run(inst, &run_config) {
        Ok(o) => o,
        Err(e @ EngineError::NotConverged(_)) => e.into_outcome().expect("outcome"),
        Err(e) => return Err(e.into()),
    };
    let gaps = dual_gap_trace(&outcome.trace, f_star);
    Ok(GAP_THRESHOLDS.iter().map(|&t| iterations_to_gap(&gaps, t)).collect())
}

/// `f(y*)` from a run at a much tighter tolerance than the experiment's.
pub fn reference_optimum(config: &ExperimentConfig, inst: &ProblemInstance) -> Result<f64, ExperimentError> {
    let tight = config
        .run_config(inst, StepSizePolicy::Theorem1)?
        .stop_tol(1e-13)
        .max_iterations(config.algorithm.max_iters.saturating_mul(5))
        .record_trace(false);
    let outcome = match run(inst, &tight) {
        Ok(o) => o,
        Err(e @ EngineError::NotConverged(_)) => e.into_outcome().expect("outcome"),
        Err(e) => return Err(e.into()),
    };
    Ok(weighted_sum_rate(inst, outcome.solution()))
}

/// Runs both step-size policies on every seed and tabulates iterations to
/// each gap threshold.
pub fn compare_step_sizes(config: &ExperimentConfig) -> Result<Vec<StepComparisonRow>, ExperimentError> {
    config.check()?;
    let mut rows = Vec::new();
    for &seed in &config.scenario.seeds {
        let (_, inst) = config.build(seed)?;
        let f_star = reference_optimum(config, &inst)?;
        let ours = iterations_to_thresholds(&inst, config.run_config(&inst, StepSizePolicy::Theorem1)?, f_star)?;
        let lin = iterations_to_thresholds(&inst, config.run_config(&inst, StepSizePolicy::Lin2006)?, f_star)?;
        for (j, &threshold) in GAP_THRESHOLDS.iter().enumerate() {
            rows.push(StepComparisonRow {
                seed,
                threshold,
                theorem1_iters: ours[j],
                lin2006_iters: lin[j],
            });
        }
    }
    Ok(rows)
}

/// CSV `seed,threshold,theorem1_iters,lin2006_iters`; unreached thresholds are
/// left empty.
pub fn write_comparison_csv<W: Write>(rows: &[StepComparisonRow], mut out: W) -> io::Result<()> {
    writeln!(out, "seed,threshold,theorem1_iters,lin2006_iters")?;
    let cell = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.seed,
            r.threshold,
            cell(r.theorem1_iters),
            cell(r.lin2006_iters)
        )?;
    }
    Ok(())
}

/// Parses and checks a config and builds every seed's instance.
pub fn validate(config: &ExperimentConfig) -> Result<usize, ExperimentError> {
    config.check()?;
    for &seed in &config.scenario.seeds {
        let (_, inst) = config.build(seed)?;
        config.step_sizes(&inst, config.algorithm.step_size_policy)?;
    }
    Ok(config.scenario.seeds.len())
}
