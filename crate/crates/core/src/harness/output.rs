use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::aggregate::SummaryStats;
use super::run::{RegretTrace, RunContext};
use super::HarnessError;
use crate::rng;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_csv(traces: &[RegretTrace]) -> String {
    let mut out = String::from("experiment,algorithm,replication,t,cum_regret\n");
    for tr in traces {
        for (i, v) in tr.cum_regret.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{},{}", tr.experiment, tr.algorithm, tr.replication, i + 1, fmt_f64(*v));
        }
    }
    out
}

pub fn summary_csv(summary: &SummaryStats, theory_bound: Option<&[Option<f64>]>) -> String {
    let mut out = String::from("algorithm,t,p5,p25,p50,p75,p95");
    if theory_bound.is_some() {
        out.push_str(",theory_bound");
    }
    out.push('\n');
    for alg in &summary.algorithms {
        for (i, band) in alg.bands.iter().enumerate() {
            let _ = write!(out, "{},{}", alg.algorithm, i + 1);
            for v in band {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            if let Some(bound) = theory_bound {
                out.push(',');
                if let Some(b) = bound.get(i).copied().flatten() {
                    out.push_str(&fmt_f64(b));
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn runtimes_csv(summary: &SummaryStats) -> String {
    let mut out = String::from("algorithm,mean_s,std_s\n");
    for alg in &summary.algorithms {
        let _ = writeln!(out, "{},{},{}", alg.algorithm, fmt_f64(alg.runtime_mean_s), fmt_f64(alg.runtime_std_s));
    }
    out
}

pub fn manifest(ctx: &RunContext, traces: &[RegretTrace]) -> serde_json::Value {
    let diagnostics: Vec<serde_json::Value> = ctx
        .config
        .algorithms
        .iter()
        .map(|alg| {
            let group: Vec<&RegretTrace> = traces.iter().filter(|t| t.algorithm == alg.name()).collect();
            let frac = |f: &dyn Fn(&RegretTrace) -> Option<bool>| {
                let flags: Vec<bool> = group.iter().filter_map(|t| f(t)).collect();
                (!flags.is_empty()).then(|| flags.iter().filter(|b| !**b).count() as f64 / flags.len() as f64)
            };
            json!({
                "algorithm": alg.name(),
                "elliptic_violations": group.iter().map(|t| t.elliptic_violations).sum::<usize>(),
                "eigenvalue_violation_fraction": frac(&|t| t.eigenvalue_held),
                "coverage_failure_fraction": frac(&|t| t.coverage_held),
            })
        })
        .collect();
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": ctx.config,
        "derived": ctx.derived,
        "seed_mixing": {
            "scheme": "splitmix64: child(seed, i) = mix(seed + gamma * (i + 1)); env stream i = 0, policy stream i = 1",
            "gamma": format!("{:#018x}", rng::SPLIT_GAMMA),
            "mix_mul_1": format!("{:#018x}", rng::MIX_MUL_1),
            "mix_mul_2": format!("{:#018x}", rng::MIX_MUL_2),
        },
        "diagnostics": diagnostics,
    })
}

/// Writes `trace.csv`, `summary.csv`, `runtimes.csv` and `manifest.json`.
pub fn write_outputs(ctx: &RunContext, traces: &[RegretTrace], summary: &SummaryStats, dir: &Path) -> Result<(), HarnessError> {
    if traces.is_empty() {
        return Err(HarnessError::NoTraces);
    }
    fs::create_dir_all(dir)?;
    let bound = ctx.theory_bound();
    fs::write(dir.join("trace.csv"), trace_csv(traces))?;
    fs::write(dir.join("summary.csv"), summary_csv(summary, bound.as_deref()))?;
    fs::write(dir.join("runtimes.csv"), runtimes_csv(summary))?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest(ctx, traces))? + "\n")?;
    Ok(())
}
