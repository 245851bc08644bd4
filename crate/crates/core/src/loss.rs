//! Convex losses that elicit scalar risk measures.
//!
//! A loss `L(y, ξ)` elicits `ρ(ν) = argmin_ξ E[L(Y, ξ)]`. Every loss here
//! exposes its value together with the first and second derivatives in the
//! prediction `ξ`, plus the curvature bounds `m ≤ ∂²L ≤ M` that drive the
//! exploration bonuses.
//!
//! Potential losses are written as `L(y, ξ) = ψ(y − ξ)`, so that
//! `∂L = −ψ′(y − ξ)` and `∂²L = ψ″(y − ξ)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest exponent `γ(y − ξ)` the entropic loss evaluates before failing.
pub const DEFAULT_EXPONENT_CAP: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("non-finite input: y = {y}, xi = {xi}")]
    NonFinite { y: f64, xi: f64 },
    #[error("entropic exponent {exponent} exceeds cap {cap} (curvature-bound violation)")]
    ExponentCap { exponent: f64, cap: f64 },
    #[error("invalid loss parameter: {0}")]
    InvalidParameter(String),
    #[error("{0} loss is not strongly convex")]
    NotStronglyConvex(&'static str),
    #[error("entropic curvature bounds need a finite support diameter")]
    MissingSupportDiameter,
}

/// Scalar map `T` for generalized moments `ρ(ν) = E[T(Y)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum MomentMap {
    Identity,
    Power { exponent: f64 },
    Exp { rate: f64 },
    Abs,
}

impl MomentMap {
    pub fn apply(&self, y: f64) -> f64 {
        match *self {
            MomentMap::Identity => y,
            MomentMap::Power { exponent } => y.powf(exponent),
            MomentMap::Exp { rate } => (rate * y).exp(),
            MomentMap::Abs => y.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `ψ(z) = z²/2`, elicits the mean.
    Squared,
    /// `ψ(z) = |p − 1{z<0}| z²`, elicits the p-expectile.
    Expectile { p: f64 },
    /// `L(y, ξ) = ξ + (e^{γ(y−ξ)} − 1)/γ`, elicits `(1/γ) log E[e^{γY}]`.
    Entropic { gamma: f64 },
    /// `ψ(z) = (p − 1{z<0}) z`. Evaluation only: zero curvature.
    Quantile { p: f64 },
    /// `L(y, ξ) = (T(y) − ξ)²/2`, elicits `E[T(Y)]`.
    GeneralizedMoment { transform: MomentMap },
}

/// A loss together with the metadata needed for its curvature bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    #[serde(flatten)]
    pub kind: LossKind,
    /// Range of `y − ξ` the entropic curvature bounds must cover.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_diameter: Option<f64>,
    #[serde(default = "default_cap")]
    pub exponent_cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_EXPONENT_CAP
}

/// Value and derivatives of `ξ ↦ L(y, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Curvature sandwich `m ≤ ∂²L ≤ M` with conditioning `κ = M/m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBounds {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    pub kappa: f64,
}

impl CurvatureBounds {
    pub fn new(m: f64, big_m: f64) -> Result<Self, LossError> {
        if !(m > 0.0 && big_m >= m && big_m.is_finite()) {
            return Err(LossError::InvalidParameter(format!(
                "curvature bounds need 0 < m <= M, got m = {m}, M = {big_m}"
            )));
        }
        Ok(Self { m, big_m, kappa: big_m / m })
    }

    /// Bounds of the unit-curvature losses (squared, generalized moment).
    pub fn unit() -> Self {
        Self { m: 1.0, big_m: 1.0, kappa: 1.0 }
    }
}

impl LossModel {
    pub fn new(kind: LossKind) -> Result<Self, LossError> {
        let model = Self { kind, support_diameter: None, exponent_cap: DEFAULT_EXPONENT_CAP };
        model.validate()?;
        Ok(model)
    }

    pub fn squared() -> Self {
        Self { kind: LossKind::Squared, support_diameter: None, exponent_cap: DEFAULT_EXPONENT_CAP }
    }

    pub fn expectile(p: f64) -> Result<Self, LossError> {
        Self::new(LossKind::Expectile { p })
    }

    pub fn entropic(gamma: f64, support_diameter: f64) -> Result<Self, LossError> {
        let model = Self {
            kind: LossKind::Entropic { gamma },
            support_diameter: Some(support_diameter),
            exponent_cap: DEFAULT_EXPONENT_CAP,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn quantile(p: f64) -> Result<Self, LossError> {
        Self::new(LossKind::Quantile { p })
    }

    pub fn generalized_moment(transform: MomentMap) -> Self {
        Self {
            kind: LossKind::GeneralizedMoment { transform },
            support_diameter: None,
            exponent_cap: DEFAULT_EXPONENT_CAP,
        }
    }

    pub fn with_support_diameter(mut self, diameter: f64) -> Result<Self, LossError> {
        self.support_diameter = Some(diameter);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let open_unit = |p: f64| p > 0.0 && p < 1.0;
        match self.kind {
            LossKind::Expectile { p } | LossKind::Quantile { p } if !open_unit(p) => {
                return Err(LossError::InvalidParameter(format!("p must lie in (0, 1), got {p}")));
            }
            LossKind::Entropic { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                return Err(LossError::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
            }
            _ => {}
        }
        if let Some(diameter) = self.support_diameter {
            if !(diameter >= 0.0) {
                return Err(LossError::InvalidParameter(format!(
                    "support diameter must be nonnegative, got {diameter}"
                )));
            }
        }
        if !(self.exponent_cap > 0.0) {
            return Err(LossError::InvalidParameter("exponent cap must be positive".into()));
        }
        Ok(())
    }

    /// Whether `L(y, ξ) = ψ(y − ξ)` for some potential `ψ`.
    pub fn is_potential(&self) -> bool {
        matches!(self.kind, LossKind::Squared | LossKind::Expectile { .. } | LossKind::Quantile { .. })
    }

    /// Whether the elicited risk shifts by `c` when rewards shift by `c`.
    pub fn is_translation_equivariant(&self) -> bool {
        self.is_potential() || matches!(self.kind, LossKind::Entropic { .. })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LossKind::Squared => "squared",
            LossKind::Expectile { .. } => "expectile",
            LossKind::Entropic { .. } => "entropic",
            LossKind::Quantile { .. } => "quantile",
            LossKind::GeneralizedMoment { .. } => "generalized_moment",
        }
    }

    pub fn evaluate(&self, y: f64, xi: f64) -> Result<LossEval, LossError> {
        if !y.is_finite() || !xi.is_finite() {
            return Err(LossError::NonFinite { y, xi });
        }
        let z = y - xi;
        let eval = match self.kind {
            LossKind::Squared => LossEval { value: 0.5 * z * z, d1: -z, d2: 1.0 },
            LossKind::Expectile { p } => {
                let w = if z < 0.0 { 1.0 - p } else { p };
                LossEval { value: w * z * z, d1: -2.0 * w * z, d2: 2.0 * w }
            }
            LossKind::Entropic { gamma } => {
                let exponent = gamma * z;
                if exponent > self.exponent_cap {
                    return Err(LossError::ExponentCap { exponent, cap: self.exponent_cap });
                }
                let e = exponent.exp();
                LossEval { value: xi + (e - 1.0) / gamma, d1: 1.0 - e, d2: gamma * e }
            }
            LossKind::Quantile { p } => {
                let w = if z < 0.0 { p - 1.0 } else { p };
                LossEval { value: w * z, d1: -w, d2: 0.0 }
            }
            LossKind::GeneralizedMoment { transform } => {
                let r = transform.apply(y) - xi;
                if !r.is_finite() {
                    return Err(LossError::NonFinite { y, xi });
                }
                LossEval { value: 0.5 * r * r, d1: -r, d2: 1.0 }
            }
        };
        Ok(eval)
    }

    pub fn curvature_bounds(&self) -> Result<CurvatureBounds, LossError> {
        match self.kind {
            LossKind::Squared | LossKind::GeneralizedMoment { .. } => Ok(CurvatureBounds::unit()),
            LossKind::Expectile { p } => CurvatureBounds::new(2.0 * p.min(1.0 - p), 2.0 * p.max(1.0 - p)),
            LossKind::Entropic { gamma } => {
                let diameter = self.support_diameter.ok_or(LossError::MissingSupportDiameter)?;
                if !diameter.is_finite() {
                    return Err(LossError::MissingSupportDiameter);
                }
                CurvatureBounds::new(gamma * (-gamma * diameter).exp(), gamma * (gamma * diameter).exp())
            }
            LossKind::Quantile { .. } => Err(LossError::NotStronglyConvex("quantile")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn expectile_reference_values() {
        let loss = LossModel::expectile(0.1).unwrap();
        let e = loss.evaluate(1.0, 0.0).unwrap();
        assert!(close(e.value, 0.1, 1e-15));
        assert!(close(e.d1, -0.2, 1e-15));
        assert!(close(e.d2, 0.2, 1e-15));
    }

    #[test]
    fn entropic_at_zero_residual() {
        let loss = LossModel::entropic(1.0, 4.0).unwrap();
        for c in [-3.0, 0.0, 2.5] {
            let e = loss.evaluate(c, c).unwrap();
            assert_eq!((e.value, e.d1, e.d2), (c, 0.0, 1.0));
        }
    }

    #[test]
    fn squared_reference_values() {
        let e = LossModel::squared().evaluate(2.0, 0.0).unwrap();
        assert_eq!((e.value, e.d1, e.d2), (2.0, -2.0, 1.0));
    }

    #[test]
    fn curvature_examples() {
        let b = LossModel::expectile(0.1).unwrap().curvature_bounds().unwrap();
        assert!(close(b.m, 0.2, 1e-15) && close(b.big_m, 1.8, 1e-15) && close(b.kappa, 9.0, 1e-12));

        let b = LossModel::squared().curvature_bounds().unwrap();
        assert_eq!((b.m, b.big_m, b.kappa), (1.0, 1.0, 1.0));

        let b = LossModel::entropic(1.0, 4.0).unwrap().curvature_bounds().unwrap();
        assert!(close(b.m, (-4.0f64).exp(), 1e-15));
        assert!(close(b.big_m, 4.0f64.exp(), 1e-12));
        assert!(close(b.kappa, 8.0f64.exp(), 1e-8));
    }

    #[test]
    fn quantile_is_rejected_for_curvature() {
        let loss = LossModel::quantile(0.3).unwrap();
        assert_eq!(loss.curvature_bounds(), Err(LossError::NotStronglyConvex("quantile")));
        assert_eq!(loss.evaluate(1.0, 0.0).unwrap().d2, 0.0);
    }

    #[test]
    fn entropic_needs_diameter_for_bounds() {
        let loss = LossModel::new(LossKind::Entropic { gamma: 1.0 }).unwrap();
        assert_eq!(loss.curvature_bounds(), Err(LossError::MissingSupportDiameter));
    }

    #[test]
    fn entropic_exponent_cap_is_an_error() {
        let loss = LossModel::entropic(1.0, 4.0).unwrap();
        assert!(matches!(loss.evaluate(51.0, 0.0), Err(LossError::ExponentCap { .. })));
        assert!(loss.evaluate(49.0, 0.0).is_ok());
    }

    #[test]
    fn invalid_parameters() {
        assert!(LossModel::expectile(0.0).is_err());
        assert!(LossModel::expectile(1.0).is_err());
        assert!(LossModel::entropic(0.0, 1.0).is_err());
        assert!(LossModel::entropic(1.0, -1.0).is_err());
        assert!(matches!(
            LossModel::squared().evaluate(f64::NAN, 0.0),
            Err(LossError::NonFinite { .. })
        ));
    }

    #[test]
    fn config_round_trip() {
        let loss: LossModel = serde_json::from_str(r#"{"kind": "expectile", "p": 0.1}"#).unwrap();
        assert_eq!(loss.kind, LossKind::Expectile { p: 0.1 });
        assert_eq!(loss.exponent_cap, DEFAULT_EXPONENT_CAP);
        let loss: LossModel =
            serde_json::from_str(r#"{"kind": "entropic", "gamma": 1.0, "support_diameter": 4.0}"#).unwrap();
        assert_eq!(loss.support_diameter, Some(4.0));
        let back: LossModel = serde_json::from_str(&serde_json::to_string(&loss).unwrap()).unwrap();
        assert_eq!(back, loss);
    }

    #[test]
    fn expectile_half_is_squared_up_to_scale() {
        let e = LossModel::expectile(0.5).unwrap();
        let s = LossModel::squared();
        for (y, xi) in [(1.0, 0.3), (-2.0, 0.7), (0.1, -4.0)] {
            let a = e.evaluate(y, xi).unwrap();
            let b = s.evaluate(y, xi).unwrap();
            assert!(close(a.value / b.value, 1.0, 1e-14));
            assert!(close(a.d1, b.d1, 1e-14));
        }
    }
}
