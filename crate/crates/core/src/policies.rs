//! Decision policies: LinUCB-CR, LinUCB-OGD-CR, LinTS-CR and the
//! mean-criterion LinUCB baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{self, BanditParams, ConfidenceError};
use crate::estimator::{self, cholesky, inverse_norm, project_ball, DesignState, Estimate, EstimatorError};
use crate::loss::{LossError, LossModel};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("empty action set")]
    EmptyActions,
    #[error("episode holds {got} observations, expected {expected}")]
    EpisodeLength { expected: usize, got: usize },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Confidence(#[from] ConfidenceError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    LinucbMean,
    LinucbCr,
    LinucbOgdCr,
    LintsCr,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LinucbMean => "linucb_mean",
            Algorithm::LinucbCr => "linucb_cr",
            Algorithm::LinucbOgdCr => "linucb_ogd_cr",
            Algorithm::LintsCr => "lints_cr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusMetric {
    #[default]
    Local,
    Global,
}

/// Round-robin warmup: `pulls_per_arm` sweeps over the arms.
pub fn warmup_schedule(arms: usize, pulls_per_arm: usize) -> Vec<usize> {
    (0..arms * pulls_per_arm).map(|i| i % arms).collect()
}

/// Index of the largest score; lowest index on ties.
fn best_index(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Picks an action for round `t` (1-based).
    fn choose(&mut self, actions: &[DVector<f64>], t: usize, rng: &mut SimRng) -> Result<usize, PolicyError>;

    fn observe(&mut self, x: &DVector<f64>, y: f64) -> Result<(), PolicyError>;

    /// The ERM estimate behind the last decision, when the policy keeps one.
    fn last_estimate(&self) -> Option<&Estimate> {
        None
    }
}

/// Shared state of the policies that refit the ERM every round.
#[derive(Debug, Clone)]
struct Refit {
    loss: LossModel,
    params: BanditParams,
    design: DesignState,
    estimate: Estimate,
}

impl Refit {
    fn new(loss: LossModel, params: BanditParams) -> Result<Self, PolicyError> {
        params.validate()?;
        let d = params.d;
        let zero = DVector::zeros(d);
        Ok(Refit {
            design: DesignState::new(d, params.v_reg(), params.l_bound)?,
            estimate: Estimate { theta_hat: zero.clone(), theta_bar: zero, grad_norm: 0.0, iterations: 0, projected: false },
            loss,
            params,
        })
    }

    fn refit(&mut self) -> Result<(), PolicyError> {
        self.estimate = self.design.fit_projected(
            &self.loss,
            self.params.alpha,
            &self.estimate.theta_hat,
            self.params.s_radius,
            self.params.beta(),
        )?;
        Ok(())
    }
}

/// LinUCB-CR: optimistic play around the projected ERM estimate.
#[derive(Debug, Clone)]
pub struct LinUcbCr {
    inner: Refit,
    metric: BonusMetric,
}

impl LinUcbCr {
    pub fn new(loss: LossModel, params: BanditParams, metric: BonusMetric) -> Result<Self, PolicyError> {
        Ok(LinUcbCr { inner: Refit::new(loss, params)?, metric })
    }

    pub fn design(&self) -> &DesignState {
        &self.inner.design
    }

    /// Optimistic indices `⟨θ̄, x⟩ + bonus(x)` under the current estimate.
    pub fn indices(&self, actions: &[DVector<f64>]) -> Result<Vec<f64>, PolicyError> {
        let Refit { loss, params, design, estimate } = &self.inner;
        let c = confidence::radius_c(params, design.logdet_v())?;
        let theta = &estimate.theta_bar;
        Ok(match self.metric {
            BonusMetric::Local => {
                let h = cholesky(design.hess_h(loss, theta, params.beta())?)?;
                actions.iter().map(|x| theta.dot(x) + confidence::bonus(c, inverse_norm(&h, x))).collect()
            }
            BonusMetric::Global => actions
                .iter()
                .map(|x| theta.dot(x) + confidence::bonus_global(params, c, inverse_norm(design.v_cholesky(), x)))
                .collect(),
        })
    }
}

impl Policy for LinUcbCr {
    fn name(&self) -> &'static str {
        Algorithm::LinucbCr.name()
    }

    fn choose(&mut self, actions: &[DVector<f64>], _t: usize, _rng: &mut SimRng) -> Result<usize, PolicyError> {
        if actions.is_empty() {
            return Err(PolicyError::EmptyActions);
        }
        self.inner.refit()?;
        Ok(best_index(self.indices(actions)?.into_iter()))
    }

    fn observe(&mut self, x: &DVector<f64>, y: f64) -> Result<(), PolicyError> {
        Ok(self.inner.design.update(x, y)?)
    }

    fn last_estimate(&self) -> Option<&Estimate> {
        Some(&self.inner.estimate)
    }
}

/// Mean-criterion LinUCB with Sherman–Morrison ridge updates.
#[derive(Debug, Clone)]
pub struct MeanLinUcb {
    params: BanditParams,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    b: DVector<f64>,
    logdet: f64,
    theta: DVector<f64>,
}

impl MeanLinUcb {
    /// `params.curvature` should be unit; the ridge regularizer is `α`.
    pub fn new(params: BanditParams) -> Result<Self, PolicyError> {
        params.validate()?;
        let (d, reg) = (params.d, params.v_reg());
        Ok(MeanLinUcb {
            params,
            v: DMatrix::identity(d, d) * reg,
            v_inv: DMatrix::identity(d, d) / reg,
            b: DVector::zeros(d),
            logdet: d as f64 * reg.ln(),
            theta: DVector::zeros(d),
        })
    }

    pub fn ridge_estimate(&self) -> DVector<f64> {
        &self.v_inv * &self.b
    }

    fn inv_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.v_inv * x)).max(0.0).sqrt()
    }
}

/// Minimizes `(θ − θ̂)ᵀ V (θ − θ̂)` over the ball of radius `radius`, the
/// projection problem of the quadratic loss.
pub fn project_quadratic(v: &DMatrix<f64>, theta_hat: &DVector<f64>, radius: f64) -> DVector<f64> {
    if !radius.is_finite() || theta_hat.norm() <= radius {
        return theta_hat.clone();
    }
    let objective = |z: &DVector<f64>| {
        let r = z - theta_hat;
        r.dot(&(v * &r))
    };
    let step = 1.0 / (2.0 * v.trace());
    let mut theta = project_ball(theta_hat, radius);
    let mut current = objective(&theta);
    for _ in 0..estimator::PROJECTION_ITERATIONS {
        let grad = v * (&theta - theta_hat) * 2.0;
        let candidate = project_ball(&(&theta - grad * step), radius);
        let value = objective(&candidate);
        if !(value < current) {
            break;
        }
        let shift = (&candidate - &theta).norm();
        theta = candidate;
        current = value;
        if shift < 1e-12 {
            break;
        }
    }
    theta
}

impl Policy for MeanLinUcb {
    fn name(&self) -> &'static str {
        Algorithm::LinucbMean.name()
    }

    fn choose(&mut self, actions: &[DVector<f64>], _t: usize, _rng: &mut SimRng) -> Result<usize, PolicyError> {
        if actions.is_empty() {
            return Err(PolicyError::EmptyActions);
        }
        self.theta = project_quadratic(&self.v, &self.ridge_estimate(), self.params.s_radius);
        let c = confidence::radius_c(&self.params, self.logdet)?;
        Ok(best_index(actions.iter().map(|x| self.theta.dot(x) + confidence::bonus(c, self.inv_norm(x)))))
    }

    fn observe(&mut self, x: &DVector<f64>, y: f64) -> Result<(), PolicyError> {
        let norm = x.norm();
        if norm > self.params.l_bound * (1.0 + 1e-12) {
            return Err(EstimatorError::ActionNorm { norm, bound: self.params.l_bound }.into());
        }
        let vx = &self.v_inv * x;
        let q = x.dot(&vx);
        self.v_inv.ger(-1.0 / (1.0 + q), &vx, &vx, 1.0);
        self.v.ger(1.0, x, x, 1.0);
        self.logdet += q.ln_1p();
        self.b.axpy(y, x, 1.0);
        Ok(())
    }
}

/// Online-gradient-descent state of LinUCB-OGD-CR.
#[derive(Debug, Clone)]
pub struct OgdState {
    pub theta: DVector<f64>,
    pub avg: DVector<f64>,
    /// Completed episodes.
    pub n: usize,
    pub h: usize,
    /// The n-th update uses step `step_scale / n`.
    pub step_scale: f64,
    /// Number of episodes in the horizon; the per-episode regularizer is `α/N`.
    pub episodes: usize,
    pub radius: f64,
    buffer: Vec<(DVector<f64>, f64)>,
}

impl OgdState {
    pub fn new(d: usize, h: usize, step_scale: f64, horizon: usize, radius: f64) -> Self {
        OgdState {
            theta: DVector::zeros(d),
            avg: DVector::zeros(d),
            n: 0,
            h,
            step_scale,
            episodes: horizon.saturating_sub(1).div_ceil(h.max(1)).max(1),
            radius,
            buffer: Vec::with_capacity(h),
        }
    }

    /// Records an observation; returns true once the episode is full.
    pub fn push(&mut self, x: DVector<f64>, y: f64) -> bool {
        self.buffer.push((x, y));
        self.buffer.len() == self.h
    }

    /// Gradient of the episode loss `Σ L(Y, ⟨θ, X⟩) + (α/2N)‖θ‖²` at `theta`.
    pub fn episode_gradient(
        episode: &[(DVector<f64>, f64)],
        loss: &LossModel,
        theta: &DVector<f64>,
        reg: f64,
    ) -> Result<DVector<f64>, PolicyError> {
        let mut g = theta * reg;
        for (x, y) in episode {
            g.axpy(loss.evaluate(*y, theta.dot(x))?.d1, x, 1.0);
        }
        Ok(g)
    }

    /// One projected gradient step on the buffered episode, followed by the
    /// running-average update.
    pub fn episode_update(&mut self, loss: &LossModel, alpha: f64) -> Result<(), PolicyError> {
        if self.buffer.len() != self.h {
            return Err(PolicyError::EpisodeLength { expected: self.h, got: self.buffer.len() });
        }
        let reg = alpha / self.episodes as f64;
        let grad = Self::episode_gradient(&self.buffer, loss, &self.theta, reg)?;
        self.n += 1;
        let step = self.step_scale / self.n as f64;
        self.theta = project_ball(&(&self.theta - grad * step), self.radius);
        self.avg += (&self.theta - &self.avg) / self.n as f64;
        self.buffer.clear();
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OgdSettings {
    pub h: usize,
    pub step_scale: f64,
    pub eps_h: f64,
    pub c_prime: f64,
}

/// LinUCB-OGD-CR: the parameter is the OGD average, refreshed once per
/// episode of `h` rounds.
#[derive(Debug, Clone)]
pub struct LinUcbOgdCr {
    loss: LossModel,
    params: BanditParams,
    settings: OgdSettings,
    horizon: usize,
    design: DesignState,
    ogd: OgdState,
    /// `H^{κα}(avg)` over the history so far.
    h_avg: DMatrix<f64>,
}

impl LinUcbOgdCr {
    pub fn new(loss: LossModel, params: BanditParams, settings: OgdSettings, horizon: usize) -> Result<Self, PolicyError> {
        params.validate()?;
        if settings.h == 0 {
            return Err(ConfidenceError::InvalidParameter("episode length must be positive".into()).into());
        }
        let d = params.d;
        Ok(LinUcbOgdCr {
            design: DesignState::new(d, params.v_reg(), params.l_bound)?,
            ogd: OgdState::new(d, settings.h, settings.step_scale, horizon, params.s_radius),
            h_avg: DMatrix::identity(d, d) * params.beta(),
            loss,
            params,
            settings,
            horizon,
        })
    }

    pub fn ogd(&self) -> &OgdState {
        &self.ogd
    }

    /// Total radius: the LinUCB-CR radius plus the OGD correction once the
    /// first episode has completed.
    pub fn radius(&self, t: usize) -> Result<f64, PolicyError> {
        let c = confidence::radius_c(&self.params, self.design.logdet_v())?;
        if t < self.settings.h || self.settings.c_prime == 0.0 {
            return Ok(c);
        }
        let extra = confidence::ogd_radius(
            &self.params,
            t,
            self.horizon.max(t),
            self.settings.h,
            self.settings.eps_h,
            self.settings.c_prime,
        )?;
        Ok(c + extra)
    }
}

impl Policy for LinUcbOgdCr {
    fn name(&self) -> &'static str {
        Algorithm::LinucbOgdCr.name()
    }

    fn choose(&mut self, actions: &[DVector<f64>], t: usize, _rng: &mut SimRng) -> Result<usize, PolicyError> {
        if actions.is_empty() {
            return Err(PolicyError::EmptyActions);
        }
        let c = self.radius(t)?;
        let h = cholesky(self.h_avg.clone())?;
        let theta = &self.ogd.avg;
        Ok(best_index(actions.iter().map(|x| theta.dot(x) + confidence::bonus(c, inverse_norm(&h, x)))))
    }

    fn observe(&mut self, x: &DVector<f64>, y: f64) -> Result<(), PolicyError> {
        self.design.update(x, y)?;
        let curvature = self.loss.evaluate(y, self.ogd.avg.dot(x))?.d2;
        self.h_avg.ger(curvature, x, x, 1.0);
        if self.ogd.push(x.clone(), y) {
            self.ogd.episode_update(&self.loss, self.params.alpha)?;
            // the average moved, so the curvature weights are rebuilt
            self.h_avg = self.design.hess_h(&self.loss, &self.ogd.avg, self.params.beta())?;
        }
        Ok(())
    }
}

/// LinTS-CR: Thompson sampling around the projected ERM estimate with
/// perturbation covariance `c²·H⁻¹`.
#[derive(Debug, Clone)]
pub struct LinTsCr {
    inner: Refit,
    horizon: usize,
    max_xi_norm: f64,
}

impl LinTsCr {
    pub fn new(loss: LossModel, params: BanditParams, horizon: usize) -> Result<Self, PolicyError> {
        Ok(LinTsCr { inner: Refit::new(loss, params)?, horizon: horizon.max(1), max_xi_norm: 0.0 })
    }

    /// Largest `‖ξ_t‖` drawn so far.
    pub fn max_xi_norm(&self) -> f64 {
        self.max_xi_norm
    }

    /// `c_t` at confidence `δ/(4T)`.
    pub fn radius(&self) -> Result<f64, PolicyError> {
        let p = self.inner.params.with_delta(self.inner.params.delta / (4.0 * self.horizon as f64));
        Ok(confidence::radius_c(&p, self.inner.design.logdet_v())?)
    }

    /// `c·η` with `H = L Lᵀ` and `Lᵀ η = ξ`, so that `Cov η = H⁻¹`.
    pub fn perturbation(&self, xi: &DVector<f64>) -> Result<DVector<f64>, PolicyError> {
        let Refit { loss, params, design, estimate } = &self.inner;
        let h = cholesky(design.hess_h(loss, &estimate.theta_bar, params.beta())?)?;
        let eta = h.l().transpose().solve_upper_triangular(xi).ok_or(EstimatorError::NotPositiveDefinite)?;
        Ok(eta * self.radius()?)
    }

    /// Decision for a given standard normal draw `xi`.
    pub fn choose_with(&mut self, actions: &[DVector<f64>], xi: &DVector<f64>) -> Result<usize, PolicyError> {
        if actions.is_empty() {
            return Err(PolicyError::EmptyActions);
        }
        self.inner.refit()?;
        self.max_xi_norm = self.max_xi_norm.max(xi.norm());
        let theta = &self.inner.estimate.theta_bar + self.perturbation(xi)?;
        Ok(best_index(actions.iter().map(|x| theta.dot(x))))
    }
}

impl Policy for LinTsCr {
    fn name(&self) -> &'static str {
        Algorithm::LintsCr.name()
    }

    fn choose(&mut self, actions: &[DVector<f64>], _t: usize, rng: &mut SimRng) -> Result<usize, PolicyError> {
        let xi = DVector::from_fn(self.inner.params.d, |_, _| rng.normal());
        self.choose_with(actions, &xi)
    }

    fn observe(&mut self, x: &DVector<f64>, y: f64) -> Result<(), PolicyError> {
        Ok(self.inner.design.update(x, y)?)
    }

    fn last_estimate(&self) -> Option<&Estimate> {
        Some(&self.inner.estimate)
    }
}
