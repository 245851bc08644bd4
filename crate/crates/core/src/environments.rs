//! Simulated bandits whose action risks are linear in a known parameter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{LossKind, LossModel};
use crate::risk_oracle::{self, Distribution, RiskError};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("arm {arm}: risk {risk} differs from the linear model value {linear}")]
    RiskMismatch { arm: usize, risk: f64, linear: f64 },
    #[error("mean-optimal and risk-optimal arms coincide (arm {0})")]
    NotDeceptive(usize),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    GaussianExpectileArms,
    ExpectileLinear,
    BernoulliEntropicArms,
    Generic,
}

/// The three reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
}

impl ExperimentId {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exp1" => Ok(ExperimentId::Exp1),
            "exp2" => Ok(ExperimentId::Exp2),
            "exp3" => Ok(ExperimentId::Exp3),
            other => Err(format!("unknown experiment '{other}' (expected exp1, exp2 or exp3)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionModel {
    /// The same action list every round.
    Fixed(Vec<DVector<f64>>),
    /// Arm `k` is `Z/‖Z‖` with `Z ~ N(center_k, std²·I)`.
    NormalizedGaussian { centers: Vec<DVector<f64>>, std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RewardLaw {
    /// `Y = ⟨θ*, x⟩ + η` with `η` of zero risk.
    LinearPlusNoise(Distribution),
    /// `Y` drawn from the law regardless of `x`; its risk equals `⟨θ*, x⟩`
    /// for the arm's fixed action.
    Direct(Distribution),
}

impl RewardLaw {
    fn law(&self) -> &Distribution {
        match self {
            RewardLaw::LinearPlusNoise(d) | RewardLaw::Direct(d) => d,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiskEnvironment {
    pub kind: EnvKind,
    pub theta_star: DVector<f64>,
    pub actions: ActionModel,
    pub laws: Vec<RewardLaw>,
    /// Loss whose risk measure defines regret.
    pub risk_loss: LossModel,
    pub l_bound: f64,
}

pub fn sample_expectile_asymmetric(mu: f64, sigma: f64, p: f64, rng: &mut SimRng) -> f64 {
    let (w_left, s_left, s_right) = Distribution::asymmetric_pieces(sigma, p);
    if rng.bernoulli(w_left) {
        mu - (s_left * rng.normal()).abs()
    } else {
        mu + (s_right * rng.normal()).abs()
    }
}

pub fn sample_distribution(dist: &Distribution, rng: &mut SimRng) -> f64 {
    match dist {
        Distribution::Gaussian { mean, std } => mean + std * rng.normal(),
        Distribution::ExpectileAsymmetric { mu, sigma, p } => sample_expectile_asymmetric(*mu, *sigma, *p, rng),
        Distribution::TwoPoint { p, a, b } => {
            if rng.bernoulli(*p) {
                *a
            } else {
                *b
            }
        }
        Distribution::Shifted { base, shift } => sample_distribution(base, rng) + shift,
    }
}

/// Risk of `dist` under `loss`, by closed form where one exists.
pub fn risk_of(loss: &LossModel, dist: &Distribution) -> Result<f64, RiskError> {
    match (&loss.kind, dist) {
        (LossKind::Squared, d) => Ok(d.mean()),
        (LossKind::Expectile { p }, Distribution::Gaussian { mean, std }) => risk_oracle::gaussian_expectile(*p, *mean, *std),
        (LossKind::Expectile { p: lp }, Distribution::ExpectileAsymmetric { mu, p, .. }) if lp == p => Ok(*mu),
        (LossKind::Entropic { gamma }, Distribution::TwoPoint { p, a, b }) => {
            risk_oracle::entropic_two_point_capped(*p, *a, *b, *gamma, loss.exponent_cap)
        }
        (LossKind::Entropic { gamma }, Distribution::Gaussian { mean, std }) => Ok(mean + gamma * std * std / 2.0),
        (_, Distribution::Shifted { base, shift }) if loss.is_translation_equivariant() => Ok(risk_of(loss, base)? + shift),
        _ => risk_oracle::risk_by_quadrature(loss, dist),
    }
}

fn unit(d: usize, k: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[k] = 1.0;
    e
}

impl RiskEnvironment {
    /// Validates the model: action norms, zero-risk noise, linear risks of
    /// direct laws, and that mean and risk disagree on the best arm.
    pub fn new(
        kind: EnvKind,
        theta_star: DVector<f64>,
        actions: ActionModel,
        laws: Vec<RewardLaw>,
        risk_loss: LossModel,
        l_bound: f64,
    ) -> Result<Self, EnvError> {
        let env = RiskEnvironment { kind, theta_star, actions, laws, risk_loss, l_bound };
        env.validate()?;
        Ok(env)
    }

    fn validate(&self) -> Result<(), EnvError> {
        let d = self.theta_star.len();
        let n_arms = self.arm_count();
        if n_arms == 0 || self.laws.len() != n_arms {
            return Err(EnvError::Invalid(format!("{} reward laws for {n_arms} arms", self.laws.len())));
        }
        let check_dim = |x: &DVector<f64>| -> Result<(), EnvError> {
            if x.len() != d {
                return Err(EnvError::Invalid(format!("action dimension {} != {d}", x.len())));
            }
            Ok(())
        };
        match &self.actions {
            ActionModel::Fixed(xs) => {
                for x in xs {
                    check_dim(x)?;
                    if x.norm() > self.l_bound * (1.0 + 1e-12) {
                        return Err(EnvError::Invalid(format!("action norm {} exceeds L = {}", x.norm(), self.l_bound)));
                    }
                }
            }
            ActionModel::NormalizedGaussian { centers, std } => {
                for c in centers {
                    check_dim(c)?;
                }
                if !(*std > 0.0) || self.l_bound < 1.0 {
                    return Err(EnvError::Invalid("normalized actions need std > 0 and L >= 1".into()));
                }
            }
        }
        for (arm, law) in self.laws.iter().enumerate() {
            law.law().validate()?;
            let risk = risk_of(&self.risk_loss, law.law())?;
            match law {
                RewardLaw::LinearPlusNoise(_) => {
                    if risk.abs() > 1e-6 {
                        return Err(EnvError::RiskMismatch { arm, risk, linear: 0.0 });
                    }
                }
                RewardLaw::Direct(_) => {
                    let ActionModel::Fixed(xs) = &self.actions else {
                        return Err(EnvError::Invalid("direct reward laws need fixed actions".into()));
                    };
                    let linear = self.theta_star.dot(&xs[arm]);
                    if (risk - linear).abs() > 1e-6 {
                        return Err(EnvError::RiskMismatch { arm, risk, linear });
                    }
                }
            }
        }
        if self.kind != EnvKind::Generic {
            let risks = self.nominal_risks();
            let means = self.nominal_means();
            let (best_risk, best_mean) = (argmax(&risks), argmax(&means));
            if best_risk == best_mean {
                return Err(EnvError::NotDeceptive(best_risk));
            }
        }
        Ok(())
    }

    pub fn preset(id: ExperimentId) -> Result<Self, EnvError> {
        match id {
            ExperimentId::Exp1 => Self::experiment1(0.1, 0.5, 3.0),
            ExperimentId::Exp2 => Self::experiment2(0.1, 0.5, 1.5, 0.1),
            ExperimentId::Exp3 => Self::experiment3(1.0),
        }
    }

    /// Two orthonormal arms with Gaussian noise of zero p-expectile; arm
    /// risks are 1 and 0.
    pub fn experiment1(p: f64, sigma1: f64, sigma2: f64) -> Result<Self, EnvError> {
        let laws = [sigma1, sigma2]
            .iter()
            .map(|&s| Ok(RewardLaw::LinearPlusNoise(Distribution::gaussian(risk_oracle::zero_expectile_mean(p, s)?, s))))
            .collect::<Result<Vec<_>, RiskError>>()?;
        Self::new(
            EnvKind::GaussianExpectileArms,
            DVector::from_vec(vec![1.0, 0.0]),
            ActionModel::Fixed(vec![unit(2, 0), unit(2, 1)]),
            laws,
            LossModel::expectile(p).map_err(RiskError::from)?,
            1.0,
        )
    }

    /// Linear bandit in ℝ³ with random unit actions around `e₁`, `e₂` and
    /// asymmetric noise whose p-expectile is zero.
    pub fn experiment2(p: f64, sigma1: f64, sigma2: f64, action_var: f64) -> Result<Self, EnvError> {
        let laws = vec![
            RewardLaw::LinearPlusNoise(Distribution::expectile_asymmetric(0.0, sigma1, p)),
            RewardLaw::LinearPlusNoise(Distribution::expectile_asymmetric(0.0, sigma2, p)),
        ];
        Self::new(
            EnvKind::ExpectileLinear,
            DVector::from_vec(vec![0.9, 0.0, 1.0]),
            ActionModel::NormalizedGaussian { centers: vec![unit(3, 0), unit(3, 1)], std: action_var.sqrt() },
            laws,
            LossModel::expectile(p).map_err(RiskError::from)?,
            1.0,
        )
    }

    /// Two-point arms `½δ₁ + ½δ₋₁` and `¼δ₂ + ¾δ₋₂` scored by entropic risk.
    pub fn experiment3(gamma: f64) -> Result<Self, EnvError> {
        let arms = [Distribution::two_point(0.5, 1.0, -1.0), Distribution::two_point(0.25, 2.0, -2.0)];
        let risks = arms
            .iter()
            .map(|d| match d {
                Distribution::TwoPoint { p, a, b } => risk_oracle::entropic_two_point(*p, *a, *b, gamma),
                _ => unreachable!(),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let diameter = 4.0;
        Self::new(
            EnvKind::BernoulliEntropicArms,
            DVector::from_vec(risks),
            ActionModel::Fixed(vec![unit(2, 0), unit(2, 1)]),
            arms.into_iter().map(RewardLaw::Direct).collect(),
            LossModel::entropic(gamma, diameter).map_err(RiskError::from)?,
            1.0,
        )
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn arm_count(&self) -> usize {
        match &self.actions {
            ActionModel::Fixed(xs) => xs.len(),
            ActionModel::NormalizedGaussian { centers, .. } => centers.len(),
        }
    }

    pub fn has_stochastic_actions(&self) -> bool {
        matches!(self.actions, ActionModel::NormalizedGaussian { .. })
    }

    /// Smallest and largest possible rewards, when bounded.
    pub fn reward_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for law in &self.laws {
            match law {
                RewardLaw::Direct(Distribution::TwoPoint { a, b, .. }) => {
                    lo = lo.min(a.min(*b));
                    hi = hi.max(a.max(*b));
                }
                _ => return None,
            }
        }
        Some((lo, hi))
    }

    pub fn sample_action_set(&self, rng: &mut SimRng) -> Vec<DVector<f64>> {
        match &self.actions {
            ActionModel::Fixed(xs) => xs.clone(),
            ActionModel::NormalizedGaussian { centers, std } => centers
                .iter()
                .map(|c| {
                    let z = c.map(|ci| ci + std * rng.normal());
                    let norm = z.norm();
                    z / norm
                })
                .collect(),
        }
    }

    pub fn sample_reward(&self, arm: usize, x: &DVector<f64>, rng: &mut SimRng) -> f64 {
        match &self.laws[arm] {
            RewardLaw::LinearPlusNoise(noise) => self.theta_star.dot(x) + sample_distribution(noise, rng),
            RewardLaw::Direct(law) => sample_distribution(law, rng),
        }
    }

    pub fn true_risk(&self, x: &DVector<f64>) -> f64 {
        self.theta_star.dot(x)
    }

    /// Best risk in the set minus the risk of the chosen action.
    pub fn instantaneous_regret(&self, actions: &[DVector<f64>], chosen: usize) -> f64 {
        let risks: Vec<f64> = actions.iter().map(|x| self.true_risk(x)).collect();
        let best = risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (best - risks[chosen]).max(0.0)
    }

    fn nominal_actions(&self) -> &[DVector<f64>] {
        match &self.actions {
            ActionModel::Fixed(xs) => xs,
            ActionModel::NormalizedGaussian { centers, .. } => centers,
        }
    }

    /// Risk of each arm at its fixed action or action-set center.
    pub fn nominal_risks(&self) -> Vec<f64> {
        self.nominal_actions().iter().map(|x| self.true_risk(x)).collect()
    }

    /// Mean reward of each arm at its fixed action or action-set center.
    pub fn nominal_means(&self) -> Vec<f64> {
        self.nominal_actions()
            .iter()
            .zip(&self.laws)
            .map(|(x, law)| match law {
                RewardLaw::LinearPlusNoise(noise) => self.theta_star.dot(x) + noise.mean(),
                RewardLaw::Direct(law) => law.mean(),
            })
            .collect()
    }

    /// Per-arm noise means estimated from `n` draws.
    pub fn monte_carlo_noise_means(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SimRng::seed_from(seed);
        self.laws
            .iter()
            .map(|law| (0..n).map(|_| sample_distribution(law.law(), &mut rng)).sum::<f64>() / n as f64)
            .collect()
    }

    /// Expected per-round regret of always playing `arm`, from `n` action
    /// sets.
    pub fn monte_carlo_gap(&self, arm: usize, n: usize, seed: u64) -> f64 {
        let mut rng = SimRng::seed_from(seed);
        (0..n).map(|_| self.instantaneous_regret(&self.sample_action_set(&mut rng), arm)).sum::<f64>() / n as f64
    }

    /// `min_k λ_min(E[X_k X_kᵀ]) / L²` from `n` action sets.
    pub fn monte_carlo_rho_x(&self, n: usize, seed: u64) -> f64 {
        let mut rng = SimRng::seed_from(seed);
        let d = self.dim();
        let mut moments = vec![DMatrix::<f64>::zeros(d, d); self.arm_count()];
        for _ in 0..n {
            for (m, x) in moments.iter_mut().zip(self.sample_action_set(&mut rng)) {
                m.ger(1.0, &x, &x, 1.0);
            }
        }
        moments
            .into_iter()
            .map(|m| min_eigenvalue(&(m / n as f64)))
            .fold(f64::INFINITY, f64::min)
            / (self.l_bound * self.l_bound)
    }

    /// Index of the arm with the highest nominal mean.
    pub fn mean_optimal_arm(&self) -> usize {
        argmax(&self.nominal_means())
    }

    pub fn risk_optimal_arm(&self) -> usize {
        argmax(&self.nominal_risks())
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Index of the largest entry; lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
