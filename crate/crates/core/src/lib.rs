//! Distributed proximal primal-dual power allocation for coordinated
//! multipoint transmission in distributed antenna systems.
//!
//! Each antenna has a power budget and each user is served jointly by a few
//! antennas. The crate maximizes the weighted sum of conservative user rates
//! with a single-layer primal-dual iteration whose per-user blocks have a
//! closed-form solution, and ships the pieces needed to study it: a
//! hexagonal multi-cell simulator, a message-passing runtime, centralized
//! reference solvers and an experiment harness.
//!
//! ```
//! use comp_power::{run, AccessMap, ProblemInstance, RunConfig, StepSizes};
//!
//! let access = AccessMap::new(2, vec![vec![0, 1], vec![1]]).unwrap();
//! let inst = ProblemInstance::new(access, vec![1.0, 2.0, 0.5], vec![1.0; 2], vec![1.0; 2], vec![3.0; 2]).unwrap();
//! let outcome = run(&inst, &RunConfig::new(StepSizes::theorem1(&inst))).unwrap();
//! assert!(outcome.converged());
//! ```

pub mod baselines;
pub mod distributed;
pub mod engine;
pub mod evaluation;
pub mod experiment;
pub mod local;
pub mod model;
pub mod scenario;

pub use baselines::{capped_simplex_project, equal_power_allocation, no_interference_bound, oracle_solve, OracleConfig};
pub use distributed::{assign_hosts, run_distributed, NodeTopology};
pub use engine::{check_stationary, run, EngineError, RunConfig, RunOutcome};
pub use evaluation::{conservative_rate, true_rate, weighted_sum_rate, ThroughputReport};
pub use experiment::{run_experiment, ExperimentConfig};
pub use local::{solve_subproblem, SubproblemInput};
pub use model::{AccessMap, AlgorithmState, ProblemInstance, StepSizes};
pub use scenario::{random_instance, ChannelScenario, InstanceShape, ScenarioParams};
