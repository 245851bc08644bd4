use serde::Serialize;

use super::run::RegretTrace;
use super::HarnessError;

pub const PERCENTILES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];

/// Below this many samples percentiles use the nearest-rank rule.
pub const INTERPOLATION_MIN_SAMPLES: usize = 20;

/// Percentile `q` (in percent) of sorted data: linear interpolation between
/// order statistics, or nearest rank for small samples.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "percentile of an empty sample");
    if n < INTERPOLATION_MIN_SAMPLES {
        let rank = ((q / 100.0) * n as f64).ceil().max(1.0) as usize;
        return sorted[rank.min(n) - 1];
    }
    let pos = q / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    /// `bands[t][i]` is percentile `PERCENTILES[i]` of the cumulative regret
    /// after round `t + 1`.
    pub bands: Vec<[f64; 5]>,
    pub runtime_mean_s: f64,
    pub runtime_std_s: f64,
    pub replications: usize,
}

impl AlgorithmSummary {
    pub fn median_at(&self, t: usize) -> f64 {
        self.bands[t - 1][2]
    }

    pub fn final_median(&self) -> f64 {
        self.bands.last().map_or(0.0, |b| b[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub algorithms: Vec<AlgorithmSummary>,
}

impl SummaryStats {
    pub fn get(&self, algorithm: &str) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.algorithm == algorithm)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-round percentile bands and runtime statistics, grouped by algorithm
/// in order of first appearance.
pub fn aggregate(traces: &[RegretTrace]) -> Result<SummaryStats, HarnessError> {
    if traces.is_empty() {
        return Err(HarnessError::NoTraces);
    }
    let mut names: Vec<&str> = Vec::new();
    for tr in traces {
        if !names.contains(&tr.algorithm.as_str()) {
            names.push(&tr.algorithm);
        }
    }
    let mut algorithms = Vec::new();
    for name in names {
        let group: Vec<&RegretTrace> = traces.iter().filter(|t| t.algorithm == name).collect();
        let horizon = group[0].cum_regret.len();
        if group.iter().any(|t| t.cum_regret.len() != horizon) {
            return Err(HarnessError::RaggedTraces(name.to_string()));
        }
        let mut column = vec![0.0; group.len()];
        let bands = (0..horizon)
            .map(|t| {
                for (slot, tr) in column.iter_mut().zip(&group) {
                    *slot = tr.cum_regret[t];
                }
                column.sort_by(f64::total_cmp);
                PERCENTILES.map(|q| percentile(&column, q))
            })
            .collect();
        let times: Vec<f64> = group.iter().map(|t| t.wall_clock_seconds).collect();
        let (runtime_mean_s, runtime_std_s) = mean_std(&times);
        algorithms.push(AlgorithmSummary {
            algorithm: name.to_string(),
            bands,
            runtime_mean_s,
            runtime_std_s,
            replications: group.len(),
        });
    }
    Ok(SummaryStats { algorithms })
}
