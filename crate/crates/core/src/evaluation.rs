//! Rate functions and the reported quantities: per-user throughput reports,
//! dual-gap traces and iterations-to-gap counts.

use std::io::{self, Write};

use serde::Serialize;

use crate::engine::IterationRecord;
use crate::model::ProblemInstance;
use crate::scenario::ChannelScenario;

/// Receiver bandwidth used to turn bit/s/Hz into bit/s.
pub const BANDWIDTH_HZ: f64 = 1e6;

/// `log2(1 + sum_{k in R(n)} p_kn gamma_kn)`.
pub fn conservative_rate(p: &[f64], inst: &ProblemInstance, user: usize) -> f64 {
    let vars = inst.access().user_vars(user);
    let s: f64 = inst.gains()[vars.clone()].iter().zip(&p[vars]).map(|(g, q)| g * q).sum();
    (1.0 + s).log2()
}

/// `sum_n w_n log2(1 + sum_k p_kn gamma_kn)`.
pub fn weighted_sum_rate(inst: &ProblemInstance, p: &[f64]) -> f64 {
    (0..inst.num_users())
        .map(|n| inst.weights()[n] * conservative_rate(p, inst, n))
        .sum()
}

/// Gradient of [`weighted_sum_rate`] with respect to the flat power vector.
pub fn weighted_sum_rate_gradient(inst: &ProblemInstance, p: &[f64], out: &mut [f64]) {
    let access = inst.access();
    for n in 0..inst.num_users() {
        let vars = access.user_vars(n);
        let s: f64 = inst.gains()[vars.clone()].iter().zip(&p[vars.clone()]).map(|(g, q)| g * q).sum();
        let scale = inst.weights()[n] / (std::f64::consts::LN_2 * (1.0 + s));
        for i in vars {
            out[i] = scale * inst.gains()[i];
        }
    }
}

/// Signal power `sum_{k in R(n)} |h_kn|^2 p_kn`.
pub fn signal_power(p: &[f64], scenario: &ChannelScenario, user: usize) -> f64 {
    let access = &scenario.access;
    access
        .serving(user)
        .iter()
        .zip(access.user_vars(user))
        .map(|(&k, i)| scenario.raw_gain.get(k, user) * p[i])
        .sum()
}

/// Achievable rate with the actual co-channel interference,
/// `log2(1 + S / (sigma^2 + I))`.
pub fn true_rate(p: &[f64], scenario: &ChannelScenario, user: usize) -> f64 {
    let signal = signal_power(p, scenario, user);
    (1.0 + signal / scenario.interference_plus_noise(p, user)).log2()
}

/// Rate with noise only, as if no co-channel user transmitted.
pub fn interference_free_rate(p: &[f64], scenario: &ChannelScenario, user: usize) -> f64 {
    (1.0 + signal_power(p, scenario, user) / scenario.noise_power).log2()
}

/// Per-user rates of one strategy on one realization. Rates are in bit/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub seed: u64,
    pub strategy: String,
    pub per_user_true_rate: Vec<f64>,
    pub per_user_conservative_rate: Vec<f64>,
    pub weighted_sum: f64,
}

impl ThroughputReport {
    /// Evaluates powers `p` (in the instance's flat layout) on a scenario.
    pub fn evaluate(
        strategy: &str,
        p: &[f64],
        scenario: &ChannelScenario,
        inst: &ProblemInstance,
    ) -> Self {
        let per_user_true_rate = (0..inst.num_users()).map(|n| true_rate(p, scenario, n)).collect();
        let per_user_conservative_rate = (0..inst.num_users()).map(|n| conservative_rate(p, inst, n)).collect();
        Self {
            seed: scenario.seed,
            strategy: strategy.to_string(),
            per_user_true_rate,
            per_user_conservative_rate,
            weighted_sum: weighted_sum_rate(inst, p),
        }
    }

    pub fn mean_true_rate(&self) -> f64 {
        mean(&self.per_user_true_rate)
    }

    /// Mean per-user throughput in bit/s.
    pub fn mean_throughput_bps(&self) -> f64 {
        self.mean_true_rate() * BANDWIDTH_HZ
    }

    pub fn per_user_throughput_bps(&self) -> Vec<f64> {
        self.per_user_true_rate.iter().map(|r| r * BANDWIDTH_HZ).collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub samples: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let m = mean(xs);
        let half_width = if n > 1 {
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Self {
            mean: m,
            half_width,
            samples: n,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }
}

/// Writes reports as CSV rows `seed,strategy,user,rate_conservative,rate_true`.
pub fn write_reports_csv<W: Write>(reports: &[ThroughputReport], mut out: W) -> io::Result<()> {
    writeln!(out, "seed,strategy,user,rate_conservative,rate_true")?;
    for r in reports {
        for (n, (c, t)) in r.per_user_conservative_rate.iter().zip(&r.per_user_true_rate).enumerate() {
            writeln!(out, "{},{},{},{},{}", r.seed, r.strategy, n, c, t)?;
        }
    }
    Ok(())
}

/// Per-strategy aggregate: realization means of the per-user throughput.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub mean_true_rate: MeanEstimate,
    pub mean_conservative_rate: MeanEstimate,
    pub mean_throughput_bps: f64,
}

/// Groups reports by strategy (in first-seen order) and averages over users
/// then realizations.
pub fn summarize(reports: &[ThroughputReport]) -> Vec<StrategySummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        if !names.contains(&r.strategy.as_str()) {
            names.push(&r.strategy);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let picked: Vec<_> = reports.iter().filter(|r| r.strategy == name).collect();
            let t: Vec<f64> = picked.iter().map(|r| r.mean_true_rate()).collect();
            let c: Vec<f64> = picked.iter().map(|r| mean(&r.per_user_conservative_rate)).collect();
            let mean_true_rate = MeanEstimate::from_samples(&t);
            StrategySummary {
                strategy: name.to_string(),
                mean_throughput_bps: mean_true_rate.mean * BANDWIDTH_HZ,
                mean_true_rate,
                mean_conservative_rate: MeanEstimate::from_samples(&c),
            }
        })
        .collect()
}

/// `L(p(t), lambda(t), y(t)) - f(y*)` per iteration.
pub fn dual_gap_trace(trace: &[IterationRecord], reference: f64) -> Vec<f64> {
    trace.iter().map(|r| r.lagrangian_value - reference).collect()
}

/// Number of iterations until `|gap|` drops to `threshold` and stays there
/// for the rest of the trace; `None` if the last entry is still above it.
pub fn iterations_to_gap(gaps: &[f64], threshold: f64) -> Option<usize> {
    match gaps.iter().rposition(|g| !(g.abs() <= threshold)) {
        None => Some(0),
        Some(last) if last + 1 < gaps.len() => Some(last + 1),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AccessMap;

    fn inst(gains: Vec<f64>) -> ProblemInstance {
        let access = AccessMap::new(2, vec![vec![0, 1]]).unwrap();
        ProblemInstance::new(access, gains, vec![1.0], vec![1.0, 1.0], vec![3.0]).unwrap()
    }

    #[test]
    fn conservative_rate_examples() {
        let i = inst(vec![1.0, 2.0]);
        assert_eq!(conservative_rate(&[0.0, 0.0], &i, 0), 0.0);
        assert!((conservative_rate(&[1.0, 0.0], &i, 0) - 1.0).abs() < 1e-15);
        assert!((conservative_rate(&[1.0, 1.0], &i, 0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gap_counting() {
        assert_eq!(iterations_to_gap(&[1.0, 0.5, 1e-5, -1e-5], 1e-4), Some(2));
        assert_eq!(iterations_to_gap(&[1e-6], 1e-4), Some(0));
        assert_eq!(iterations_to_gap(&[1e-6, 1.0], 1e-4), None);
        assert_eq!(iterations_to_gap(&[1.0, 1e-5, 1.0, 1e-6], 1e-4), Some(3));
    }

    #[test]
    fn confidence_interval() {
        let e = MeanEstimate::from_samples(&[1.0, 2.0, 3.0]);
        assert!((e.mean - 2.0).abs() < 1e-15);
        assert!((e.half_width - 1.96 / 3f64.sqrt()).abs() < 1e-12);
    }
}
