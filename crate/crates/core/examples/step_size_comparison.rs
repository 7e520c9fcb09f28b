//! Iterations to reach a dual gap threshold under the two step-size rules.
//!
//! cargo run --release --example step_size_comparison

use comp_power::experiment::{compare_step_sizes, write_comparison_csv, ExperimentConfig};

const CONFIG: &str = r#"{
    "schema_version": 1,
    "scenario": {"cells": 1, "spacing_m": 1000.0, "users_per_cell": 6, "seeds": [0, 1, 2, 3, 4, 5, 6, 7],
                 "p_dbm": 25.0, "margin_db": 5.0, "serving_count": 3},
    "algorithm": {"c": 3.0, "beta": 1.0, "step_size_policy": "theorem1", "stop_tol": 1e-10, "max_iters": 100000},
    "strategies": ["proposed"],
    "runtime": "monolithic"
}"#;

fn main() {
    let config = ExperimentConfig::from_json(CONFIG).unwrap();
    let rows = compare_step_sizes(&config).unwrap();
    write_comparison_csv(&rows, std::io::stdout().lock()).unwrap();
}
