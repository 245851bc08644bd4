use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environments::ExperimentId;
use crate::loss::LossModel;
use crate::policies::{Algorithm, BonusMetric};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("invalid config: {0}")]
    Semantic(String),
}

fn default_alpha() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.1
}
fn default_warmup() -> usize {
    5
}
fn default_c_prime() -> f64 {
    1.0
}
fn default_eps_h() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Check the deterministic elliptic potential bound every round.
    #[serde(default = "default_true")]
    pub elliptic: bool,
    /// Check the smallest-eigenvalue line (stochastic action sets only).
    #[serde(default = "default_true")]
    pub eigenvalue: bool,
    /// Track whether θ* stays inside the confidence set.
    #[serde(default)]
    pub coverage: bool,
    /// Noise scale of the confidence set; derived from the reward noise
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_sigma: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { elliptic: true, eigenvalue: true, coverage: false, coverage_sigma: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub algorithms: Vec<Algorithm>,
    pub horizon: usize,
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Loss of the risk-aware policies; the environment's risk loss when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossModel>,
    pub sigma: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub s_radius: f64,
    /// Parameter radius of the mean baseline; `s_radius` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_s_radius: Option<f64>,
    /// OGD episode length; 5 in experiment mode, the episode-length formula
    /// in theory mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    /// OGD step numerator; 0.1 in experiment mode, `3/(m ε_h)` in theory mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_scale: Option<f64>,
    #[serde(default = "default_warmup")]
    pub warmup_pulls: usize,
    #[serde(default)]
    pub bonus_metric: BonusMetric,
    #[serde(default)]
    pub theory_mode: bool,
    #[serde(default = "default_c_prime")]
    pub ogd_c_prime: f64,
    #[serde(default = "default_eps_h")]
    pub eps_h: f64,
    /// Covariance floor of stochastic action sets; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_x: Option<f64>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

/// 1-based line of the first occurrence of `"key"` in `text`.
fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(1, |i| i + 1)
}

impl ExperimentConfig {
    /// Desk-scale defaults for the reference experiments.
    pub fn preset(id: ExperimentId) -> Self {
        let (sigma, s_radius, mean_s_radius) = match id {
            ExperimentId::Exp1 => (0.1, 1.5, 3.5),
            ExperimentId::Exp2 => (0.1, 1.5, 4.0),
            ExperimentId::Exp3 => (1.0, 1.0, 1.5),
        };
        ExperimentConfig {
            experiment: id,
            algorithms: vec![Algorithm::LinucbMean, Algorithm::LinucbCr, Algorithm::LinucbOgdCr],
            horizon: 1500,
            replications: 50,
            base_seed: 20_240_601,
            workers: None,
            loss: None,
            sigma,
            alpha: 0.1,
            delta: 0.1,
            s_radius,
            mean_s_radius: Some(mean_s_radius),
            h: None,
            step_scale: None,
            warmup_pulls: 5,
            bonus_metric: BonusMetric::Local,
            theory_mode: false,
            ogd_c_prime: 1.0,
            eps_h: 0.1,
            rho_x: None,
            diagnostics: DiagnosticsConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate().map_err(|(key, message)| ConfigError::Invalid { line: line_of(text, key), message })?;
        Ok(config)
    }

    /// Checks value ranges; errors name the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let fail = |key: &'static str, msg: String| Err((key, format!("{key}: {msg}")));
        if self.algorithms.is_empty() {
            return fail("algorithms", "at least one algorithm is required".into());
        }
        if self.replications == 0 {
            return fail("replications", "must be at least 1".into());
        }
        if self.horizon == 0 {
            return fail("horizon", "must be at least 1".into());
        }
        if !(self.sigma >= 0.0) {
            return fail("sigma", format!("must be >= 0, got {}", self.sigma));
        }
        if !(self.alpha > 0.0) {
            return fail("alpha", format!("must be > 0, got {}", self.alpha));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("delta", format!("must lie in (0, 1), got {}", self.delta));
        }
        if !(self.s_radius > 0.0) {
            return fail("s_radius", format!("must be > 0, got {}", self.s_radius));
        }
        if let Some(s) = self.mean_s_radius {
            if !(s > 0.0) {
                return fail("mean_s_radius", format!("must be > 0, got {s}"));
            }
        }
        if self.h == Some(0) {
            return fail("h", "must be at least 1".into());
        }
        if let Some(s) = self.step_scale {
            if !(s > 0.0) {
                return fail("step_scale", format!("must be > 0, got {s}"));
            }
        }
        if !(self.eps_h > 0.0) {
            return fail("eps_h", format!("must be > 0, got {}", self.eps_h));
        }
        if !(self.ogd_c_prime >= 0.0) {
            return fail("ogd_c_prime", format!("must be >= 0, got {}", self.ogd_c_prime));
        }
        if let Some(r) = self.rho_x {
            if !(r > 0.0 && r <= 1.0) {
                return fail("rho_x", format!("must lie in (0, 1], got {r}"));
            }
        }
        if self.workers == Some(0) {
            return fail("workers", "must be at least 1".into());
        }
        if let Some(loss) = &self.loss {
            if let Err(e) = loss.validate().and_then(|_| loss.curvature_bounds().map(|_| ())) {
                if !matches!(e, crate::loss::LossError::MissingSupportDiameter) {
                    return fail("loss", e.to_string());
                }
            }
        }
        Ok(())
    }
}
