//! Confidence radii, exploration bonuses, episode lengths and regret bounds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::CurvatureBounds;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfidenceError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("radius bracket {0} is negative")]
    NegativeBracket(f64),
    #[error("round {t} precedes the first OGD update at {h}")]
    BeforeFirstEpisode { t: usize, h: usize },
    #[error("horizon {horizon} is shorter than the burn-in {t0}")]
    HorizonTooShort { horizon: usize, t0: i64 },
    #[error("{0} lies outside [-1/e, 0)")]
    LambertDomain(f64),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfidenceError> {
    Err(ConfidenceError::InvalidParameter(msg.into()))
}

/// Problem constants shared by the bonus and bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub d: usize,
    pub alpha: f64,
    pub delta: f64,
    pub sigma: f64,
    pub s_radius: f64,
    pub l_bound: f64,
    pub curvature: CurvatureBounds,
}

impl BanditParams {
    pub fn validate(&self) -> Result<(), ConfidenceError> {
        if self.d == 0 {
            return invalid("d must be positive");
        }
        if !(self.alpha > 0.0) || !(self.sigma >= 0.0) || !(self.s_radius >= 0.0) || !(self.l_bound > 0.0) {
            return invalid(format!(
                "need alpha > 0, sigma >= 0, S >= 0, L > 0; got alpha={}, sigma={}, S={}, L={}",
                self.alpha, self.sigma, self.s_radius, self.l_bound
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        Ok(())
    }

    /// Additionally enforces `α ≥ max(1, L²)`.
    pub fn validate_strict(&self) -> Result<(), ConfidenceError> {
        self.validate()?;
        let floor = self.l_bound.powi(2).max(1.0);
        if self.alpha < floor {
            return invalid(format!("theory mode requires alpha >= {floor}, got {}", self.alpha));
        }
        Ok(())
    }

    /// Regularizer of the local metric, `β = κα`.
    pub fn beta(&self) -> f64 {
        self.curvature.kappa * self.alpha
    }

    /// Regularizer of the design matrix `V`, `α/m`.
    pub fn v_reg(&self) -> f64 {
        self.alpha / self.curvature.m
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        BanditParams { delta, ..*self }
    }
}

/// Constants of the stochastic action model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticActionParams {
    pub rho_x: f64,
    pub eps_h: f64,
}

impl StochasticActionParams {
    pub fn validate(&self, d: usize) -> Result<(), ConfidenceError> {
        if !(self.rho_x > 0.0) || self.rho_x * d as f64 > 1.0 + 1e-12 {
            return invalid(format!("rho_x must lie in (0, 1/d], got {}", self.rho_x));
        }
        if !(self.eps_h >= 0.0) {
            return invalid(format!("eps_h must be >= 0, got {}", self.eps_h));
        }
        Ok(())
    }
}

/// `c_t = 2κ(σ√(2 log(1/δ) + d log(m/α) + log det V) + √(α/κ) S)`, where
/// `logdet_v` is the log-determinant of `V` regularized by `α/m`.
pub fn radius_c(params: &BanditParams, logdet_v: f64) -> Result<f64, ConfidenceError> {
    let CurvatureBounds { m, kappa, .. } = params.curvature;
    let bracket = 2.0 * (1.0 / params.delta).ln() + params.d as f64 * (m / params.alpha).ln() + logdet_v;
    // log det V ≥ d log(α/m) makes the bracket at least 2 log(1/δ) in exact
    // arithmetic; only rounding can push it below
    if bracket < -1e-9 * logdet_v.abs().max(1.0) {
        return Err(ConfidenceError::NegativeBracket(bracket));
    }
    Ok(2.0 * kappa * (params.sigma * bracket.max(0.0).sqrt() + (params.alpha / kappa).sqrt() * params.s_radius))
}

/// Local bonus `c·‖x‖_{H⁻¹}`.
pub fn bonus(c: f64, h_inv_norm: f64) -> f64 {
    c * h_inv_norm
}

/// Global bonus `(c/√(κm))·‖x‖_{V⁻¹}`.
pub fn bonus_global(params: &BanditParams, c: f64, v_inv_norm: f64) -> f64 {
    c / (params.curvature.kappa * params.curvature.m).sqrt() * v_inv_norm
}

/// Extra radius of the OGD variant at round `t` of a horizon `horizon`
/// with episodes of length `h`; zero at `t = h`.
pub fn ogd_radius(
    params: &BanditParams,
    t: usize,
    horizon: usize,
    h: usize,
    eps_h: f64,
    c_prime: f64,
) -> Result<f64, ConfidenceError> {
    if h == 0 || !(eps_h > 0.0) || !(c_prime >= 0.0) {
        return invalid(format!("need h >= 1, eps_h > 0, C' >= 0; got {h}, {eps_h}, {c_prime}"));
    }
    if t < h {
        return Err(ConfidenceError::BeforeFirstEpisode { t, h });
    }
    let CurvatureBounds { m, big_m, kappa } = params.curvature;
    let (d, hf, tf) = (params.d as f64, h as f64, t as f64);
    let lead = params.l_bound.powi(2) + params.alpha / (m * big_m * tf);
    let scale = 2.0 * kappa * c_prime * d * hf * hf * params.sigma.powi(2) / (eps_h * eps_h);
    let log_horizon = (2.0 * d * horizon as f64 / (hf * params.delta)).ln().max(0.0);
    Ok((lead * scale * log_horizon * (tf / hf).ln()).max(0.0).sqrt())
}

/// Ceiling that ignores rounding noise just above an integer.
fn ceil_tolerant(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn check_episode_inputs(sap: &StochasticActionParams, l_bound: f64, delta: f64) -> Result<(), ConfidenceError> {
    if !(sap.rho_x > 0.0) || !(sap.eps_h >= 0.0) || !(l_bound > 0.0) || !(delta > 0.0 && delta < 2.0) {
        return invalid(format!("bad episode inputs rho={}, eps={}, L={l_bound}, delta={delta}", sap.rho_x, sap.eps_h));
    }
    Ok(())
}

/// `h = ⌈2ε_h/(ρ L²) + 8/ρ² · log(2/δ)⌉`.
pub fn episode_length_simple(sap: &StochasticActionParams, l_bound: f64, delta: f64) -> Result<usize, ConfidenceError> {
    check_episode_inputs(sap, l_bound, delta)?;
    let rho = sap.rho_x;
    let x = 2.0 * sap.eps_h / (rho * l_bound * l_bound) + 8.0 / (rho * rho) * (2.0 / delta).ln();
    Ok(ceil_tolerant(x).max(1.0) as usize)
}

/// Lower branch `W₋₁` of the Lambert W function on `[−1/e, 0)`.
pub fn lambert_w_minus1(z: f64) -> Result<f64, ConfidenceError> {
    let branch = -(-1.0f64).exp();
    if !(z >= branch - 1e-15 && z < 0.0) {
        return Err(ConfidenceError::LambertDomain(z));
    }
    if z <= branch {
        return Ok(-1.0);
    }
    let residual = |w: f64| w * w.exp() - z;
    let mut w = if z < -0.25 {
        // series around the branch point
        let p = -(2.0 * (1.0 + std::f64::consts::E * z)).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-z).ln();
        l1 - (-l1).ln()
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - z;
        let fp = ew * (w + 1.0);
        if fp == 0.0 {
            break;
        }
        let next = w - f / (fp - (w + 2.0) * f / (2.0 * (w + 1.0)));
        if !next.is_finite() || next > -1.0 {
            break;
        }
        let done = (next - w).abs() <= 1e-15 * w.abs();
        w = next;
        if done {
            return Ok(w);
        }
    }
    if residual(w).abs() <= 1e-13 * z.abs() && w <= -1.0 {
        return Ok(w);
    }
    // w e^w decreases on (−∞, −1]
    let (mut lo, mut hi) = (-750.0_f64, -1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-16 * mid.abs() {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `γ_δ = −1/(1 + W₋₁(−δ²/(4e)))`.
pub fn gamma_delta(delta: f64) -> Result<f64, ConfidenceError> {
    let w = lambert_w_minus1(-delta * delta / (4.0 * std::f64::consts::E))?;
    Ok(-1.0 / (1.0 + w))
}

/// Episode length from the Lambert-W refinement:
/// `h = ⌈(k + √(k + ρ ε_h/L²))² / (4ρ²)⌉` with
/// `k = √(2(1 + γ_δ) log((2/δ)√(1 + 1/γ_δ)))`.
pub fn episode_length_tight(sap: &StochasticActionParams, l_bound: f64, delta: f64) -> Result<usize, ConfidenceError> {
    check_episode_inputs(sap, l_bound, delta)?;
    if delta >= 1.0 {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    let g = gamma_delta(delta)?;
    let k = (2.0 * (1.0 + g) * ((2.0 / delta) * (1.0 + 1.0 / g).sqrt()).ln()).sqrt();
    let rho = sap.rho_x;
    let root = k + (k + rho * sap.eps_h / (l_bound * l_bound)).sqrt();
    Ok(ceil_tolerant(root * root / (4.0 * rho * rho)).max(1.0) as usize)
}

/// Burn-in round `t₀ = ⌈8/ρ² log(2/δ) − 2β/(m ρ L²)⌉` of the
/// stochastic-action regret bound, at least 1.
pub fn burn_in(params: &BanditParams, sap: &StochasticActionParams) -> i64 {
    let (rho, l2, m) = (sap.rho_x, params.l_bound.powi(2), params.curvature.m);
    let x = 8.0 / (rho * rho) * (2.0 / params.delta).ln() - 2.0 * params.beta() / (m * rho * l2);
    (ceil_tolerant(x) as i64).max(1)
}

/// Regret bound of LinUCB-CR under stochastic actions at horizon `horizon`,
/// `4 c_T √(2T/(mρ)) (1 + C/√T)`, with `c_T` evaluated at the largest
/// possible `log det V_T`.
pub fn stochastic_regret_bound(params: &BanditParams, sap: &StochasticActionParams, horizon: usize) -> Result<f64, ConfidenceError> {
    params.validate()?;
    sap.validate(params.d)?;
    let t0 = burn_in(params, sap);
    if (horizon as i64) < t0 {
        return Err(ConfidenceError::HorizonTooShort { horizon, t0 });
    }
    let (rho, l2, m, d) = (sap.rho_x, params.l_bound.powi(2), params.curvature.m, params.d as f64);
    let beta = params.beta();
    let tf = horizon as f64;
    let logdet_max = d * (params.v_reg() + tf * l2 / d).ln();
    let c_t = radius_c(params, logdet_max)?;

    let a = beta - 4.0 * m * l2 / rho * (2.0 / params.delta).ln();
    let b = m * rho * l2 / 2.0;
    let t0f = t0 as f64;
    let head = if a > 0.0 { (a / b).sqrt() } else { 0.0 };
    let tail = ((a + b * (t0f - 1.0)) / b).max(0.0).sqrt();
    let potential = rho.sqrt() / 2.0
        * 1f64.max(params.l_bound * (m / beta).sqrt())
        * (t0f * d * (1.0 + m * l2 * t0f / (d * beta)).ln()).sqrt();
    let c = head - tail + potential;
    Ok((4.0 * c_t * (2.0 * tf / (m * rho)).sqrt() * (1.0 + c / tf.sqrt())).max(0.0))
}

/// `σ_ξ √(2d log(2dT/δ))`.
pub fn ts_norm_bound(sigma_xi: f64, d: usize, horizon: usize, delta: f64) -> f64 {
    let d = d as f64;
    sigma_xi * (2.0 * d * (2.0 * d * horizon as f64 / delta).ln()).sqrt()
}

/// Right-hand side of the deterministic elliptic potential bound,
/// `max(1, L/√ε) √(2td log(1 + tL²/(dε)))`.
pub fn elliptic_potential_bound(t: usize, d: usize, l_bound: f64, eps: f64) -> f64 {
    let (tf, df) = (t as f64, d as f64);
    1f64.max(l_bound / eps.sqrt()) * (2.0 * tf * df * (1.0 + tf * l_bound * l_bound / (df * eps)).ln()).sqrt()
}

/// Lower line for `λ_min(Σ_{s≤t} X_s X_sᵀ)`, `−(4L²/ρ) log(2/δ) + (ρL²/2) t`.
pub fn eigenvalue_line(t: usize, l_bound: f64, rho_x: f64, delta: f64) -> f64 {
    let l2 = l_bound * l_bound;
    -(4.0 * l2 / rho_x) * (2.0 / delta).ln() + rho_x * l2 / 2.0 * t as f64
}

/// Radius of the confidence set around the ERM estimate, in the metric
/// `H^β(θ*)⁻¹`: `σ√(2 log(1/δ) + log det H − d log β) + α‖θ*‖_{H⁻¹}`.
pub fn coverage_radius(
    sigma: f64,
    delta: f64,
    d: usize,
    beta: f64,
    logdet_h: f64,
    alpha: f64,
    theta_h_inv_norm: f64,
) -> f64 {
    let bracket = 2.0 * (1.0 / delta).ln() + logdet_h - d as f64 * beta.ln();
    sigma * bracket.max(0.0).sqrt() + alpha * theta_h_inv_norm
}
