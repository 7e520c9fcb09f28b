//! Full experiment from a JSON config: reports, traces, message ledgers and
//! the manifest.
//!
//! cargo run --release --example experiment_run -- configs/quick.json out/quick

use std::path::PathBuf;

use comp_power::experiment::{run_experiment, ExperimentConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let config_path = PathBuf::from(args.next().unwrap_or_else(|| "configs/quick.json".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/quick".into()));
    let config = ExperimentConfig::load(&config_path).unwrap_or_else(|e| panic!("{e}"));
    let summary = run_experiment(&config, &out, true).unwrap();
    for f in &summary.manifest.files {
        println!("{}  {}", &f.sha256[..12], f.path);
    }
    for r in &summary.results {
        for report in &r.reports {
            println!("seed {} {:>16}: {:.4} Mbit/s", r.seed, report.strategy, report.mean_throughput_bps() / 1e6);
        }
    }
}
