//! Observation history, design matrices and the regularized convex ERM.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::loss::{LossError, LossModel};

const NEWTON_CAP: usize = 100;
const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
pub const PROJECTION_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("action norm {norm} exceeds the bound {bound}")]
    ActionNorm { norm: f64, bound: f64 },
    #[error("expected a vector of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite observation")]
    NonFinite,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("Newton did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error(transparent)]
    Loss(#[from] LossError),
}

pub fn cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, EstimatorError> {
    Cholesky::new(m).ok_or(EstimatorError::NotPositiveDefinite)
}

/// `‖x‖_{A⁻¹}` for `A` given by its Cholesky factor.
pub fn inverse_norm(chol: &Cholesky<f64, Dyn>, x: &DVector<f64>) -> f64 {
    x.dot(&chol.solve(x)).max(0.0).sqrt()
}

/// Euclidean projection onto the ball of radius `radius`.
pub fn project_ball(theta: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = theta.norm();
    if norm <= radius {
        theta.clone()
    } else {
        theta * (radius / norm)
    }
}

/// Output of [`DesignState::erm_fit`] and [`DesignState::fit_projected`].
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta_hat: DVector<f64>,
    pub theta_bar: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub projected: bool,
}

/// History of (action, reward) pairs with `V = Σ X Xᵀ + v_reg·I` kept in
/// factored form.
#[derive(Debug, Clone)]
pub struct DesignState {
    d: usize,
    v_reg: f64,
    l_bound: f64,
    xs: Vec<DVector<f64>>,
    ys: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    logdet: f64,
}

impl DesignState {
    /// Empty history; `v_reg` is the regularizer of `V` (`α/m` in the
    /// confidence radius) and `l_bound` the admissible action norm.
    pub fn new(d: usize, v_reg: f64, l_bound: f64) -> Result<Self, EstimatorError> {
        let chol = cholesky(DMatrix::identity(d, d) * v_reg)?;
        Ok(DesignState { d, v_reg, l_bound, xs: Vec::new(), ys: Vec::new(), chol, logdet: d as f64 * v_reg.ln() })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn v_reg(&self) -> f64 {
        self.v_reg
    }

    pub fn actions(&self) -> &[DVector<f64>] {
        &self.xs
    }

    pub fn rewards(&self) -> &[f64] {
        &self.ys
    }

    pub fn logdet_v(&self) -> f64 {
        self.logdet
    }

    pub fn v_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// `V` rebuilt densely from the history.
    pub fn v_matrix(&self) -> DMatrix<f64> {
        let mut v = DMatrix::identity(self.d, self.d) * self.v_reg;
        for x in &self.xs {
            v.ger(1.0, x, x, 1.0);
        }
        v
    }

    pub fn check_action(&self, x: &DVector<f64>) -> Result<(), EstimatorError> {
        if x.len() != self.d {
            return Err(EstimatorError::Dimension { expected: self.d, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite);
        }
        let norm = x.norm();
        if norm > self.l_bound * (1.0 + 1e-12) {
            return Err(EstimatorError::ActionNorm { norm, bound: self.l_bound });
        }
        Ok(())
    }

    pub fn update(&mut self, x: &DVector<f64>, y: f64) -> Result<(), EstimatorError> {
        self.check_action(x)?;
        if !y.is_finite() {
            return Err(EstimatorError::NonFinite);
        }
        self.chol.rank_one_update(x, 1.0);
        self.logdet = self.chol.ln_determinant();
        self.xs.push(x.clone());
        self.ys.push(y);
        Ok(())
    }

    /// `F(θ) = Σ ∂L(Y_s, ⟨θ, X_s⟩) X_s + α θ`.
    pub fn grad_f(&self, loss: &LossModel, theta: &DVector<f64>, alpha: f64) -> Result<DVector<f64>, EstimatorError> {
        let mut g = theta * alpha;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let e = loss.evaluate(*y, theta.dot(x))?;
            g.axpy(e.d1, x, 1.0);
        }
        Ok(g)
    }

    /// `H^β(θ) = Σ ∂²L(Y_s, ⟨θ, X_s⟩) X_s X_sᵀ + β I`.
    pub fn hess_h(&self, loss: &LossModel, theta: &DVector<f64>, beta: f64) -> Result<DMatrix<f64>, EstimatorError> {
        let mut h = DMatrix::identity(self.d, self.d) * beta;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let e = loss.evaluate(*y, theta.dot(x))?;
            h.ger(e.d2, x, x, 1.0);
        }
        Ok(h)
    }

    /// `Σ L(Y_s, ⟨θ, X_s⟩) + (α/2)‖θ‖²`.
    pub fn objective(&self, loss: &LossModel, theta: &DVector<f64>, alpha: f64) -> Result<f64, EstimatorError> {
        let mut total = 0.5 * alpha * theta.norm_squared();
        for (x, y) in self.xs.iter().zip(&self.ys) {
            total += loss.evaluate(*y, theta.dot(x))?.value;
        }
        Ok(total)
    }

    /// Value, gradient and Hessian of the ERM objective in one pass.
    fn local_model(
        &self,
        loss: &LossModel,
        theta: &DVector<f64>,
        alpha: f64,
    ) -> Result<(f64, DVector<f64>, DMatrix<f64>), EstimatorError> {
        let mut value = 0.5 * alpha * theta.norm_squared();
        let mut g = theta * alpha;
        let mut h = DMatrix::identity(self.d, self.d) * alpha;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let e = loss.evaluate(*y, theta.dot(x))?;
            value += e.value;
            g.axpy(e.d1, x, 1.0);
            h.ger(e.d2, x, x, 1.0);
        }
        Ok((value, g, h))
    }

    pub fn tolerance(&self) -> f64 {
        1e-9 * (self.len() as f64).sqrt().max(1.0)
    }

    /// Damped Newton minimization of the ERM objective from `warm`.
    pub fn erm_fit(&self, loss: &LossModel, alpha: f64, warm: &DVector<f64>) -> Result<Estimate, EstimatorError> {
        let tol = self.tolerance();
        let mut theta = warm.clone();
        let (mut value, mut grad, mut hess) = self.local_model(loss, &theta, alpha)?;
        for iteration in 0..=NEWTON_CAP {
            let grad_norm = grad.norm();
            if grad_norm <= tol {
                return Ok(Estimate {
                    theta_bar: theta.clone(),
                    theta_hat: theta,
                    grad_norm,
                    iterations: iteration,
                    projected: false,
                });
            }
            if iteration == NEWTON_CAP {
                break;
            }
            let direction = -cholesky(hess.clone())?.solve(&grad);
            let slope = grad.dot(&direction);
            // Near the optimum the objective decrease drowns in roundoff, so a
            // trial within rounding of the current value that shrinks the
            // gradient is accepted as well.
            let rounding = 1e-13 * value.abs().max(1.0);
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-16 {
                let trial = &theta + &direction * step;
                // points where the loss leaves its representable range are
                // treated as infinitely bad
                if let Ok(model) = self.local_model(loss, &trial, alpha) {
                    let armijo = model.0 <= value + ARMIJO_SLOPE * step * slope && model.0 < value;
                    let flat = model.0 <= value + rounding && model.1.norm() < grad_norm;
                    if armijo || flat {
                        accepted = Some((trial, model));
                        break;
                    }
                }
                step *= BACKTRACK;
            }
            let Some((next, model)) = accepted else {
                return Err(EstimatorError::NoConvergence { iterations: iteration, grad_norm });
            };
            theta = next;
            (value, grad, hess) = model;
        }
        Err(EstimatorError::NoConvergence { iterations: NEWTON_CAP, grad_norm: grad.norm() })
    }

    /// `‖F(θ) − F(θ̂)‖²` in the metric `H^β(θ)⁻¹`.
    pub fn projection_objective(
        &self,
        loss: &LossModel,
        theta: &DVector<f64>,
        target: &DVector<f64>,
        alpha: f64,
        beta: f64,
    ) -> Result<f64, EstimatorError> {
        let r = self.grad_f(loss, theta, alpha)? - target;
        let w = cholesky(self.hess_h(loss, theta, beta)?)?;
        Ok(r.dot(&w.solve(&r)))
    }

    /// Maps `theta_hat` into the ball of radius `s_radius` by approximately
    /// minimizing [`Self::projection_objective`]; returns `theta_hat` when it
    /// is already feasible.
    pub fn project(
        &self,
        loss: &LossModel,
        alpha: f64,
        theta_hat: &DVector<f64>,
        s_radius: f64,
        beta: f64,
    ) -> Result<DVector<f64>, EstimatorError> {
        if !s_radius.is_finite() || theta_hat.norm() <= s_radius {
            return Ok(theta_hat.clone());
        }
        let target = self.grad_f(loss, theta_hat, alpha)?;
        let mut theta = project_ball(theta_hat, s_radius);
        let mut current = self.projection_objective(loss, &theta, &target, alpha, beta)?;
        for _ in 0..PROJECTION_ITERATIONS {
            let r = self.grad_f(loss, &theta, alpha)? - &target;
            let w = cholesky(self.hess_h(loss, &theta, beta)?)?;
            let h_alpha = self.hess_h(loss, &theta, alpha)?;
            let w_r = w.solve(&r);
            let grad = &h_alpha * &w_r * 2.0;
            // curvature of the frozen-metric quadratic is 2·H W H, whose
            // spectral norm is bounded by its trace
            let curvature = 2.0 * (&h_alpha * w.solve(&h_alpha)).trace();
            if grad.norm() == 0.0 || !(curvature > 0.0) {
                break;
            }
            let mut step = 1.0 / curvature;
            let mut moved = None;
            for _ in 0..30 {
                let candidate = project_ball(&(&theta - &grad * step), s_radius);
                if let Ok(value) = self.projection_objective(loss, &candidate, &target, alpha, beta) {
                    if value < current {
                        moved = Some((candidate, value));
                        break;
                    }
                }
                step *= BACKTRACK;
            }
            let Some((candidate, value)) = moved else { break };
            let shift = (&candidate - &theta).norm();
            theta = candidate;
            current = value;
            if shift < 1e-12 {
                break;
            }
        }
        Ok(theta)
    }

    /// ERM fit followed by projection onto the parameter ball.
    pub fn fit_projected(
        &self,
        loss: &LossModel,
        alpha: f64,
        warm: &DVector<f64>,
        s_radius: f64,
        beta: f64,
    ) -> Result<Estimate, EstimatorError> {
        let mut est = self.erm_fit(loss, alpha, warm)?;
        if s_radius.is_finite() && est.theta_hat.norm() > s_radius {
            est.theta_bar = self.project(loss, alpha, &est.theta_hat, s_radius, beta)?;
            est.projected = true;
        }
        Ok(est)
    }
}
