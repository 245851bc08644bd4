//! Ground-truth risk measures for the reward laws used by the simulators.
//!
//! Closed forms cover Gaussian expectiles and entropic risk of two-point
//! laws. [`risk_by_quadrature`] minimizes the expected loss numerically and
//! is the independent check for every closed form.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use thiserror::Error;

use crate::loss::{LossError, LossKind, LossModel};
use crate::quadrature::{self, QuadratureError};

const FIXED_POINT_CAP: usize = 200;
const FIXED_POINT_DAMPING: f64 = 0.5;
const GAUSSIAN_SPAN: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("expectile iteration did not converge for p = {p}")]
    NoConvergence { p: f64 },
    #[error("could not bracket the risk minimizer")]
    Bracketing,
    #[error("entropic exponent {exponent} exceeds cap {cap}")]
    Overflow { exponent: f64, cap: f64 },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Reward laws with known or numerically computable risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Gaussian { mean: f64, std: f64 },
    /// Two-piece Gaussian with density proportional to
    /// `exp(−|p − 1{y<μ}| (y − μ)² / (2σ²))`; its p-expectile is `μ`.
    ExpectileAsymmetric { mu: f64, sigma: f64, p: f64 },
    /// `p·δ_a + (1 − p)·δ_b`.
    TwoPoint { p: f64, a: f64, b: f64 },
    Shifted { base: Box<Distribution>, shift: f64 },
}

impl Distribution {
    pub fn gaussian(mean: f64, std: f64) -> Self {
        Distribution::Gaussian { mean, std }
    }

    pub fn expectile_asymmetric(mu: f64, sigma: f64, p: f64) -> Self {
        Distribution::ExpectileAsymmetric { mu, sigma, p }
    }

    pub fn two_point(p: f64, a: f64, b: f64) -> Self {
        Distribution::TwoPoint { p, a, b }
    }

    pub fn shifted(self, shift: f64) -> Self {
        Distribution::Shifted { base: Box::new(self), shift }
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        let bad = |msg: String| Err(RiskError::InvalidDistribution(msg));
        match self {
            Distribution::Gaussian { mean, std } => {
                if !mean.is_finite() || !(*std > 0.0 && std.is_finite()) {
                    return bad(format!("gaussian needs finite mean and std > 0, got ({mean}, {std})"));
                }
            }
            Distribution::ExpectileAsymmetric { mu, sigma, p } => {
                if !mu.is_finite() || !(*sigma > 0.0 && sigma.is_finite()) || !(*p > 0.0 && *p < 1.0) {
                    return bad(format!("expectile_asymmetric needs sigma > 0 and p in (0,1), got ({mu}, {sigma}, {p})"));
                }
            }
            Distribution::TwoPoint { p, a, b } => {
                if !(*p > 0.0 && *p < 1.0) || !a.is_finite() || !b.is_finite() || a == b {
                    return bad(format!("two_point needs p in (0,1) and distinct finite atoms, got ({p}, {a}, {b})"));
                }
            }
            Distribution::Shifted { base, shift } => {
                if !shift.is_finite() {
                    return bad(format!("shift must be finite, got {shift}"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Mixture weight of the left half-Gaussian of the asymmetric law and the
    /// standard deviations of both pieces.
    pub(crate) fn asymmetric_pieces(sigma: f64, p: f64) -> (f64, f64, f64) {
        let (sp, sq) = (p.sqrt(), (1.0 - p).sqrt());
        (sp / (sp + sq), sigma / sq, sigma / sp)
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Gaussian { mean, .. } => *mean,
            Distribution::ExpectileAsymmetric { mu, sigma, p } => {
                let (w_left, s_left, s_right) = Self::asymmetric_pieces(*sigma, *p);
                let half_normal = (2.0 / PI).sqrt();
                mu + half_normal * ((1.0 - w_left) * s_right - w_left * s_left)
            }
            Distribution::TwoPoint { p, a, b } => p * a + (1.0 - p) * b,
            Distribution::Shifted { base, shift } => base.mean() + shift,
        }
    }

    /// A length scale used to seed minimizer brackets.
    fn spread(&self) -> f64 {
        match self {
            Distribution::Gaussian { std, .. } => *std,
            Distribution::ExpectileAsymmetric { sigma, p, .. } => {
                let (_, l, r) = Self::asymmetric_pieces(*sigma, *p);
                l.max(r)
            }
            Distribution::TwoPoint { a, b, .. } => (a - b).abs(),
            Distribution::Shifted { base, .. } => base.spread(),
        }
    }

    /// `E[g(Y)]`, with `breaks` marking kinks of `g` that the integration
    /// grid must respect.
    pub fn expectation(&self, g: &mut dyn FnMut(f64) -> Result<f64, RiskError>, breaks: &[f64]) -> Result<f64, RiskError> {
        const ABS_TOL: f64 = 1e-15;
        const REL_TOL: f64 = 1e-14;
        match self {
            Distribution::Gaussian { mean, std } => {
                let (lo, hi) = (mean - GAUSSIAN_SPAN * std, mean + GAUSSIAN_SPAN * std);
                let grid = grid(lo, hi, breaks);
                let norm = 1.0 / (std * (2.0 * PI).sqrt());
                quadrature::integrate_pieces(
                    |y| {
                        let u = (y - mean) / std;
                        Ok(g(y)? * norm * (-0.5 * u * u).exp())
                    },
                    &grid,
                    ABS_TOL,
                    REL_TOL,
                )
            }
            Distribution::ExpectileAsymmetric { mu, sigma, p } => {
                let (_, s_left, s_right) = Self::asymmetric_pieces(*sigma, *p);
                let (lo, hi) = (mu - GAUSSIAN_SPAN * s_left, mu + GAUSSIAN_SPAN * s_right);
                let mut with_mu = breaks.to_vec();
                with_mu.push(*mu);
                let grid = grid(lo, hi, &with_mu);
                let norm = (2.0 * p * (1.0 - p)).sqrt() / (sigma * PI.sqrt() * (p.sqrt() + (1.0 - p).sqrt()));
                quadrature::integrate_pieces(
                    |y| {
                        let w = if y < *mu { 1.0 - p } else { *p };
                        let z = y - mu;
                        Ok(g(y)? * norm * (-w * z * z / (2.0 * sigma * sigma)).exp())
                    },
                    &grid,
                    ABS_TOL,
                    REL_TOL,
                )
            }
            Distribution::TwoPoint { p, a, b } => Ok(p * g(*a)? + (1.0 - p) * g(*b)?),
            Distribution::Shifted { base, shift } => {
                let moved: Vec<f64> = breaks.iter().map(|x| x - shift).collect();
                base.expectation(&mut |y| g(y + shift), &moved)
            }
        }
    }
}

fn grid(lo: f64, hi: f64, breaks: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(breaks.iter().copied().filter(|x| *x > lo && *x < hi));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

fn check_probability(p: f64) -> Result<(), RiskError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(RiskError::InvalidParameter(format!("p must lie in (0, 1), got {p}")))
    }
}

/// First-order condition of the standard normal p-expectile,
/// `e·((1 − 2p)Φ(e) + p) − (2p − 1)φ(e)`, increasing in `e`.
fn expectile_condition(p: f64, e: f64) -> f64 {
    e * ((1.0 - 2.0 * p) * std_normal_cdf(e) + p) - (2.0 * p - 1.0) * std_normal_pdf(e)
}

/// p-expectile of `N(0, 1)`.
pub fn standard_normal_expectile(p: f64) -> Result<f64, RiskError> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    let map = |e: f64| (2.0 * p - 1.0) * std_normal_pdf(e) / ((1.0 - 2.0 * p) * std_normal_cdf(e) + p);

    let mut e = 0.0;
    let mut last_step = f64::INFINITY;
    for _ in 0..FIXED_POINT_CAP {
        let next = (1.0 - FIXED_POINT_DAMPING) * e + FIXED_POINT_DAMPING * map(e);
        let step = (next - e).abs();
        e = next;
        if step <= 1e-15 * e.abs().max(1.0) {
            return Ok(polish(p, e));
        }
        if step > last_step {
            // oscillating: the damped map is not contracting here
            break;
        }
        last_step = step;
    }
    bisect_expectile(p)
}

fn polish(p: f64, e: f64) -> f64 {
    // one Newton step on the first-order condition cleans the last ulps
    let h = 1e-7 * e.abs().max(1.0);
    let slope = (expectile_condition(p, e + h) - expectile_condition(p, e - h)) / (2.0 * h);
    if slope > 0.0 {
        let next = e - expectile_condition(p, e) / slope;
        if expectile_condition(p, next).abs() <= expectile_condition(p, e).abs() {
            return next;
        }
    }
    e
}

fn bisect_expectile(p: f64) -> Result<f64, RiskError> {
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    if expectile_condition(p, lo) > 0.0 || expectile_condition(p, hi) < 0.0 {
        return Err(RiskError::NoConvergence { p });
    }
    for _ in 0..FIXED_POINT_CAP {
        let mid = 0.5 * (lo + hi);
        if expectile_condition(p, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * mid.abs().max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(RiskError::NoConvergence { p })
}

/// p-expectile of `N(μ, σ²)`, as `μ + σ·e_p(N(0, 1))`.
pub fn gaussian_expectile(p: f64, mu: f64, sigma: f64) -> Result<f64, RiskError> {
    if !(sigma > 0.0) || !mu.is_finite() {
        return Err(RiskError::InvalidParameter(format!("need finite mu and sigma > 0, got ({mu}, {sigma})")));
    }
    Ok(mu + sigma * standard_normal_expectile(p)?)
}

/// The mean `μ` for which `N(μ, σ²)` has zero p-expectile.
pub fn zero_expectile_mean(p: f64, sigma: f64) -> Result<f64, RiskError> {
    if !(sigma > 0.0) {
        return Err(RiskError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(-sigma * standard_normal_expectile(p)?)
}

/// Entropic risk `(1/γ) log(p e^{γa} + (1 − p) e^{γb})` of a two-point law.
pub fn entropic_two_point(p: f64, a: f64, b: f64, gamma: f64) -> Result<f64, RiskError> {
    entropic_two_point_capped(p, a, b, gamma, crate::loss::DEFAULT_EXPONENT_CAP)
}

pub fn entropic_two_point_capped(p: f64, a: f64, b: f64, gamma: f64, cap: f64) -> Result<f64, RiskError> {
    if !(0.0..=1.0).contains(&p) || !(gamma > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(RiskError::InvalidParameter(format!("bad entropic parameters ({p}, {a}, {b}, {gamma})")));
    }
    let exponent = gamma * a.max(b);
    if exponent > cap {
        return Err(RiskError::Overflow { exponent, cap });
    }
    // log-sum-exp over the atoms with positive weight
    let terms: Vec<f64> = [(p, a), (1.0 - p, b)]
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, x)| w.ln() + gamma * x)
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    Ok((top + sum.ln()) / gamma)
}

/// `argmin_ξ E[L(Y, ξ)]` computed by quadrature of the expected loss.
///
/// The minimizer is bracketed by widening until the expected derivative
/// changes sign, narrowed by golden-section search on the expected loss,
/// and finished by bisection on the expected derivative.
pub fn risk_by_quadrature(loss: &LossModel, dist: &Distribution) -> Result<f64, RiskError> {
    dist.validate()?;
    loss.validate()?;
    if let LossKind::Quantile { .. } = loss.kind {
        return Err(LossError::NotStronglyConvex("quantile").into());
    }
    let expected_loss = |xi: f64| -> Result<f64, RiskError> {
        dist.expectation(&mut |y| Ok(loss.evaluate(y, xi)?.value), &[xi])
    };
    let expected_slope = |xi: f64| -> Result<f64, RiskError> {
        dist.expectation(&mut |y| Ok(loss.evaluate(y, xi)?.d1), &[xi])
    };

    let center = dist.mean();
    let mut width = dist.spread().max(1e-3);
    let (mut lo, mut hi);
    let mut attempts = 0;
    loop {
        lo = center - width;
        hi = center + width;
        if expected_slope(lo)? < 0.0 && expected_slope(hi)? > 0.0 {
            break;
        }
        width *= 2.0;
        attempts += 1;
        if attempts > 60 {
            return Err(RiskError::Bracketing);
        }
    }

    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (expected_loss(c)?, expected_loss(d)?);
    while hi - lo > 1e-4 * width {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = expected_loss(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = expected_loss(d)?;
        }
    }

    // Restore a sign-changing bracket in case roundoff nudged it.
    let mut pad = hi - lo;
    while expected_slope(lo)? > 0.0 {
        lo -= pad;
        pad *= 2.0;
    }
    pad = hi - lo;
    while expected_slope(hi)? < 0.0 {
        hi += pad;
        pad *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if expected_slope(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * mid.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_expectile_is_the_mean() {
        assert_eq!(gaussian_expectile(0.5, 3.0, 2.0).unwrap(), 3.0);
        assert_eq!(zero_expectile_mean(0.5, 1.7).unwrap(), 0.0);
    }

    #[test]
    fn standard_normal_low_expectile() {
        // root of the first-order condition, cross-checked by direct
        // minimization of the expected asymmetric squared loss
        let e = gaussian_expectile(0.1, 0.0, 1.0).unwrap();
        assert!((e - (-0.861_592_112_4)).abs() < 1e-9, "{e}");
        assert!(expectile_condition(0.1, e).abs() < 1e-14);
    }

    #[test]
    fn experiment_one_noise_means() {
        let mu1 = zero_expectile_mean(0.1, 0.5).unwrap();
        let mu2 = zero_expectile_mean(0.1, 3.0).unwrap();
        assert!((0.43..=0.45).contains(&mu1), "{mu1}");
        assert!((mu2 - 2.584_776_337).abs() < 1e-8, "{mu2}");
        assert!(gaussian_expectile(0.1, mu1, 0.5).unwrap().abs() < 1e-8);
        assert!(gaussian_expectile(0.1, mu2, 3.0).unwrap().abs() < 1e-8);
    }

    #[test]
    fn expectile_monotone_in_sigma() {
        let lows: Vec<f64> = (1..20).map(|k| gaussian_expectile(0.2, 1.0, k as f64 * 0.3).unwrap()).collect();
        assert!(lows.windows(2).all(|w| w[1] < w[0]));
        let highs: Vec<f64> = (1..20).map(|k| gaussian_expectile(0.7, 1.0, k as f64 * 0.3).unwrap()).collect();
        assert!(highs.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn entropic_two_point_values() {
        let r1 = entropic_two_point(0.5, 1.0, -1.0, 1.0).unwrap();
        assert!((r1 - 1.0f64.cosh().ln()).abs() < 1e-15);
        let r2 = entropic_two_point(0.25, 2.0, -2.0, 1.0).unwrap();
        assert!((r2 - 0.667).abs() < 5e-3, "{r2}");
        assert_eq!(entropic_two_point(1.0, 0.7, -3.0, 2.0).unwrap(), 0.7);
    }

    #[test]
    fn entropic_two_point_overflow() {
        assert!(matches!(entropic_two_point(0.5, 60.0, 0.0, 1.0), Err(RiskError::Overflow { .. })));
    }

    #[test]
    fn asymmetric_left_weight() {
        let (w, _, _) = Distribution::asymmetric_pieces(1.0, 0.1);
        assert!((w - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quadrature_recovers_gaussian_mean() {
        let r = risk_by_quadrature(&LossModel::squared(), &Distribution::gaussian(1.3, 0.7)).unwrap();
        assert!((r - 1.3).abs() < 1e-8, "{r}");
    }

    #[test]
    fn quadrature_recovers_asymmetric_expectile() {
        let loss = LossModel::expectile(0.1).unwrap();
        let r = risk_by_quadrature(&loss, &Distribution::expectile_asymmetric(2.0, 1.0, 0.1)).unwrap();
        assert!((r - 2.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn quadrature_matches_entropic_closed_form() {
        let loss = LossModel::entropic(1.0, 4.0).unwrap();
        let r = risk_by_quadrature(&loss, &Distribution::two_point(0.5, 1.0, -1.0)).unwrap();
        assert!((r - 1.0f64.cosh().ln()).abs() < 1e-10, "{r}");
    }

    #[test]
    fn quadrature_rejects_quantile() {
        let loss = LossModel::quantile(0.5).unwrap();
        assert!(risk_by_quadrature(&loss, &Distribution::gaussian(0.0, 1.0)).is_err());
    }

    #[test]
    fn invalid_distributions() {
        assert!(Distribution::gaussian(0.0, 0.0).validate().is_err());
        assert!(Distribution::two_point(0.5, 1.0, 1.0).validate().is_err());
        assert!(Distribution::expectile_asymmetric(0.0, 1.0, 1.0).validate().is_err());
    }

    #[test]
    fn distribution_json() {
        let d: Distribution = serde_json::from_str(r#"{"kind": "two_point", "p": 0.25, "a": 2, "b": -2}"#).unwrap();
        assert_eq!(d, Distribution::two_point(0.25, 2.0, -2.0));
    }
}
