use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::confidence::{self, BanditParams, StochasticActionParams};
use crate::environments::{min_eigenvalue, RewardLaw, RiskEnvironment};
use crate::estimator::{cholesky, inverse_norm, DesignState};
use crate::loss::{CurvatureBounds, LossKind, LossModel};
use crate::policies::{self, Algorithm, LinTsCr, LinUcbCr, LinUcbOgdCr, MeanLinUcb, OgdSettings, Policy};
use crate::risk_oracle::Distribution;
use crate::rng::{self, SimRng};

/// Sample sizes and seeds of the Monte Carlo constants in the manifest.
const MC_SAMPLES: usize = 200_000;
const MC_SEED: u64 = 0x5eed_0fc0_ffee;

/// Cumulative risk-regret of one replication plus diagnostic flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RegretTrace {
    pub experiment: String,
    pub algorithm: String,
    pub replication: usize,
    pub cum_regret: Vec<f64>,
    /// Wall-clock seconds spent inside the policy.
    pub wall_clock_seconds: f64,
    /// Rounds at which the elliptic potential bound failed.
    pub elliptic_violations: usize,
    /// Whether `λ_min` of the unregularized design stayed above its line.
    pub eigenvalue_held: Option<bool>,
    /// Whether θ* stayed inside the confidence set at every round.
    pub coverage_held: Option<bool>,
}

/// Constants derived once per configuration and echoed in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedConstants {
    pub experiment: String,
    pub dimension: usize,
    pub arms: usize,
    pub theta_star: Vec<f64>,
    pub arm_risks: Vec<f64>,
    pub arm_means: Vec<f64>,
    pub noise_means: Vec<f64>,
    pub noise_means_monte_carlo: Vec<f64>,
    pub gaussian_noise_mu: Vec<f64>,
    pub risk_optimal_arm: usize,
    pub mean_optimal_arm: usize,
    /// Expected per-round regret of always playing the mean-optimal arm.
    pub mean_arm_gap: f64,
    pub loss: LossModel,
    pub curvature: CurvatureBounds,
    pub beta: f64,
    pub h: usize,
    pub ogd_episodes: usize,
    pub step_scale: f64,
    pub rho_x: Option<f64>,
    pub coverage_sigma: Option<f64>,
    pub warmup_rounds: usize,
}

/// Everything needed to run replications of one configuration.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub env: RiskEnvironment,
    /// Loss of the risk-aware policies, with support diameter resolved.
    pub loss: LossModel,
    pub derived: DerivedConstants,
}

fn noise_scale(law: &Distribution) -> f64 {
    match law {
        Distribution::Gaussian { std, .. } => *std,
        Distribution::ExpectileAsymmetric { sigma, p, .. } => {
            let (_, l, r) = Distribution::asymmetric_pieces(*sigma, *p);
            l.max(r)
        }
        Distribution::TwoPoint { a, b, .. } => (a - b).abs() / 2.0,
        Distribution::Shifted { base, .. } => noise_scale(base),
    }
}

impl RunContext {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate().map_err(|(_, msg)| HarnessError::Config(super::config::ConfigError::Semantic(msg)))?;
        let env = RiskEnvironment::preset(config.experiment)?;
        let arms = env.arm_count();
        if config.horizon < arms * config.warmup_pulls {
            return Err(HarnessError::Invalid(format!(
                "horizon {} is shorter than the warmup of {} rounds",
                config.horizon,
                arms * config.warmup_pulls
            )));
        }
        let mut loss = config.loss.unwrap_or(env.risk_loss);
        if let LossKind::Entropic { .. } = loss.kind {
            if config.loss.and_then(|l| l.support_diameter).is_none() {
                let (lo, hi) = env.reward_range().ok_or_else(|| {
                    HarnessError::Invalid("entropic loss needs bounded rewards or an explicit support_diameter".into())
                })?;
                loss = loss.with_support_diameter(hi - lo + 2.0 * config.s_radius * env.l_bound)?;
            }
        }
        let curvature = loss.curvature_bounds()?;

        let rho_x = if env.has_stochastic_actions() {
            Some(config.rho_x.unwrap_or_else(|| env.monte_carlo_rho_x(MC_SAMPLES, MC_SEED)))
        } else {
            config.rho_x
        };
        let h = match (config.h, config.theory_mode) {
            (Some(h), _) => h,
            (None, false) => 5,
            (None, true) => {
                let rho = rho_x.ok_or_else(|| HarnessError::Invalid("theory mode needs rho_x".into()))?;
                let sap = StochasticActionParams { rho_x: rho, eps_h: config.eps_h };
                confidence::episode_length_simple(&sap, env.l_bound, config.delta)?
            }
        };
        let step_scale = match (config.step_scale, config.theory_mode) {
            (Some(s), _) => s,
            (None, false) => 0.1,
            (None, true) => 3.0 / (curvature.m * config.eps_h),
        };
        let coverage_sigma = if config.diagnostics.coverage {
            Some(config.diagnostics.coverage_sigma.unwrap_or_else(|| {
                let scale = env
                    .laws
                    .iter()
                    .map(|l| match l {
                        RewardLaw::LinearPlusNoise(d) | RewardLaw::Direct(d) => noise_scale(d),
                    })
                    .fold(0.0, f64::max);
                curvature.big_m * scale / curvature.m.sqrt()
            }))
        } else {
            None
        };

        let noise_means = env
            .laws
            .iter()
            .map(|l| match l {
                RewardLaw::LinearPlusNoise(d) | RewardLaw::Direct(d) => d.mean(),
            })
            .collect();
        let gaussian_noise_mu = env
            .laws
            .iter()
            .filter_map(|l| match l {
                RewardLaw::LinearPlusNoise(Distribution::Gaussian { mean, .. }) => Some(*mean),
                _ => None,
            })
            .collect();
        let mean_arm = env.mean_optimal_arm();
        let mean_arm_gap = if env.has_stochastic_actions() {
            env.monte_carlo_gap(mean_arm, MC_SAMPLES, MC_SEED)
        } else {
            let risks = env.nominal_risks();
            risks[env.risk_optimal_arm()] - risks[mean_arm]
        };
        let horizon = config.horizon;
        let derived = DerivedConstants {
            experiment: config.experiment.name().to_string(),
            dimension: env.dim(),
            arms,
            theta_star: env.theta_star.iter().copied().collect(),
            arm_risks: env.nominal_risks(),
            arm_means: env.nominal_means(),
            noise_means,
            noise_means_monte_carlo: env.monte_carlo_noise_means(MC_SAMPLES, MC_SEED),
            gaussian_noise_mu,
            risk_optimal_arm: env.risk_optimal_arm(),
            mean_optimal_arm: mean_arm,
            mean_arm_gap,
            loss,
            curvature,
            beta: curvature.kappa * config.alpha,
            h,
            ogd_episodes: horizon.saturating_sub(1).div_ceil(h).max(1),
            step_scale,
            rho_x,
            coverage_sigma,
            warmup_rounds: arms * config.warmup_pulls,
        };
        Ok(RunContext { config, env, loss, derived })
    }

    pub fn params(&self, algorithm: Algorithm) -> BanditParams {
        let c = &self.config;
        let (curvature, s_radius) = match algorithm {
            Algorithm::LinucbMean => (CurvatureBounds::unit(), c.mean_s_radius.unwrap_or(c.s_radius)),
            _ => (self.derived.curvature, c.s_radius),
        };
        BanditParams {
            d: self.env.dim(),
            alpha: c.alpha,
            delta: c.delta,
            sigma: c.sigma,
            s_radius,
            l_bound: self.env.l_bound,
            curvature,
        }
    }

    pub fn build_policy(&self, algorithm: Algorithm) -> Result<Box<dyn Policy>, HarnessError> {
        let params = self.params(algorithm);
        if self.config.theory_mode {
            params.validate_strict()?;
        }
        let horizon = self.config.horizon;
        Ok(match algorithm {
            Algorithm::LinucbMean => Box::new(MeanLinUcb::new(params)?),
            Algorithm::LinucbCr => Box::new(LinUcbCr::new(self.loss, params, self.config.bonus_metric)?),
            Algorithm::LinucbOgdCr => {
                let settings = OgdSettings {
                    h: self.derived.h,
                    step_scale: self.derived.step_scale,
                    eps_h: self.config.eps_h,
                    c_prime: self.config.ogd_c_prime,
                };
                Box::new(LinUcbOgdCr::new(self.loss, params, settings, horizon)?)
            }
            Algorithm::LintsCr => Box::new(LinTsCr::new(self.loss, params, horizon)?),
        })
    }

    /// Stream seeds of replication `r`: (environment, policy).
    pub fn seeds(&self, replication: usize) -> (u64, u64) {
        let seed = rng::split(self.config.base_seed, replication as u64);
        (rng::split(seed, 0), rng::split(seed, 1))
    }

    /// Values of the stochastic-action regret bound per round, when the
    /// configuration calls for them.
    pub fn theory_bound(&self) -> Option<Vec<Option<f64>>> {
        let rho_x = self.derived.rho_x?;
        if !self.config.theory_mode || !self.env.has_stochastic_actions() {
            return None;
        }
        let params = self.params(Algorithm::LinucbCr);
        let sap = StochasticActionParams { rho_x, eps_h: self.config.eps_h };
        Some((1..=self.config.horizon).map(|t| confidence::stochastic_regret_bound(&params, &sap, t).ok()).collect())
    }

    pub fn run_replication(&self, algorithm: Algorithm, replication: usize) -> Result<RegretTrace, HarnessError> {
        let config = &self.config;
        let env = &self.env;
        let d = env.dim();
        let (env_seed, policy_seed) = self.seeds(replication);
        let mut env_rng = SimRng::seed_from(env_seed);
        let mut policy_rng = SimRng::seed_from(policy_seed);
        let mut policy = self.build_policy(algorithm)?;
        let warmup = policies::warmup_schedule(env.arm_count(), config.warmup_pulls);

        let diag = &config.diagnostics;
        let curvature = self.derived.curvature;
        let alpha = config.alpha;
        let beta = self.derived.beta;
        // elliptic potential with regularizer κα/m
        let eps = beta / curvature.m;
        let mut elliptic = diag.elliptic.then(|| DesignState::new(d, eps, env.l_bound)).transpose()?;
        let mut potential = 0.0;
        let mut elliptic_violations = 0;
        let eigen_rho = self.derived.rho_x.filter(|_| diag.eigenvalue && env.has_stochastic_actions());
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut eigenvalue_held = eigen_rho.map(|_| true);
        let coverage_sigma = self.derived.coverage_sigma.filter(|_| algorithm != Algorithm::LinucbMean);
        let mut coverage = coverage_sigma
            .map(|_| DesignState::new(d, alpha / curvature.m, env.l_bound))
            .transpose()?;
        let mut coverage_held = coverage_sigma.map(|_| true);
        let mut theta_hat = DVector::zeros(d);

        let mut cum_regret = Vec::with_capacity(config.horizon);
        let mut total = 0.0;
        let mut busy = 0.0;
        for t in 1..=config.horizon {
            let actions = env.sample_action_set(&mut env_rng);
            let chosen = match warmup.get(t - 1) {
                Some(&k) => k,
                None => {
                    let start = Instant::now();
                    let k = policy.choose(&actions, t, &mut policy_rng)?;
                    busy += start.elapsed().as_secs_f64();
                    k
                }
            };
            let x = &actions[chosen];
            let y = env.sample_reward(chosen, x, &mut env_rng);
            total += env.instantaneous_regret(&actions, chosen);
            cum_regret.push(total);
            let start = Instant::now();
            policy.observe(x, y)?;
            busy += start.elapsed().as_secs_f64();

            if let Some(state) = elliptic.as_mut() {
                potential += inverse_norm(state.v_cholesky(), x);
                if potential > confidence::elliptic_potential_bound(t, d, env.l_bound, eps) * (1.0 + 1e-12) {
                    elliptic_violations += 1;
                }
                state.update(x, y)?;
            }
            if let Some(rho) = eigen_rho {
                gram.ger(1.0, x, x, 1.0);
                if min_eigenvalue(&gram) <= confidence::eigenvalue_line(t, env.l_bound, rho, config.delta) {
                    eigenvalue_held = Some(false);
                }
            }
            if let (Some(state), Some(sigma)) = (coverage.as_mut(), coverage_sigma) {
                state.update(x, y)?;
                theta_hat = state.erm_fit(&self.loss, alpha, &theta_hat)?.theta_hat;
                if !in_confidence_set(state, &self.loss, &env.theta_star, &theta_hat, alpha, beta, sigma, config.delta)? {
                    coverage_held = Some(false);
                }
            }
        }
        Ok(RegretTrace {
            experiment: config.experiment.name().to_string(),
            algorithm: algorithm.name().to_string(),
            replication,
            cum_regret,
            wall_clock_seconds: busy,
            elliptic_violations,
            eigenvalue_held,
            coverage_held,
        })
    }
}

/// Whether `‖F(θ*) − F(θ̂)‖_{H^β(θ*)⁻¹}` is within the confidence radius.
#[allow(clippy::too_many_arguments)]
pub fn in_confidence_set(
    state: &DesignState,
    loss: &LossModel,
    theta_star: &DVector<f64>,
    theta_hat: &DVector<f64>,
    alpha: f64,
    beta: f64,
    sigma: f64,
    delta: f64,
) -> Result<bool, HarnessError> {
    let h = cholesky(state.hess_h(loss, theta_star, beta)?)?;
    let r = state.grad_f(loss, theta_star, alpha)? - state.grad_f(loss, theta_hat, alpha)?;
    let radius = confidence::coverage_radius(
        sigma,
        delta,
        state.dim(),
        beta,
        h.ln_determinant(),
        alpha,
        inverse_norm(&h, theta_star),
    );
    Ok(inverse_norm(&h, &r) <= radius)
}

/// All replications of all configured algorithms, ordered by algorithm then
/// replication regardless of completion order.
pub fn run_experiment(ctx: &RunContext) -> Result<Vec<RegretTrace>, HarnessError> {
    let jobs: Vec<(Algorithm, usize)> = ctx
        .config
        .algorithms
        .iter()
        .flat_map(|&a| (0..ctx.config.replications).map(move |r| (a, r)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = ctx.config.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| HarnessError::Invalid(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(|&(a, r)| ctx.run_replication(a, r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::ExperimentId;

    fn small(id: ExperimentId) -> ExperimentConfig {
        let mut c = ExperimentConfig::preset(id);
        c.horizon = 60;
        c.replications = 3;
        c.workers = Some(2);
        c.algorithms = vec![Algorithm::LinucbMean, Algorithm::LinucbCr, Algorithm::LinucbOgdCr, Algorithm::LintsCr];
        c
    }

    #[test]
    fn replications_are_deterministic() {
        let ctx = RunContext::new(small(ExperimentId::Exp2)).unwrap();
        let a = run_experiment(&ctx).unwrap();
        let b = run_experiment(&ctx).unwrap();
        assert_eq!(a.len(), 12);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.cum_regret, y.cum_regret);
        }
    }

    #[test]
    fn traces_are_monotone_and_sized() {
        let ctx = RunContext::new(small(ExperimentId::Exp3)).unwrap();
        for tr in run_experiment(&ctx).unwrap() {
            assert_eq!(tr.cum_regret.len(), 60);
            assert!(tr.cum_regret.windows(2).all(|w| w[1] >= w[0]));
            assert_eq!(tr.elliptic_violations, 0);
        }
    }

    #[test]
    fn warmup_only_run() {
        let mut c = small(ExperimentId::Exp1);
        c.horizon = 10;
        c.replications = 1;
        let ctx = RunContext::new(c).unwrap();
        for tr in run_experiment(&ctx).unwrap() {
            // five pulls of the zero-risk arm, each costing the unit gap
            assert_eq!(tr.cum_regret.last().copied(), Some(5.0));
        }
    }

    #[test]
    fn horizon_shorter_than_warmup_is_rejected() {
        let mut c = small(ExperimentId::Exp1);
        c.horizon = 9;
        assert!(RunContext::new(c).is_err());
    }

    #[test]
    fn derived_constants() {
        let ctx = RunContext::new(small(ExperimentId::Exp1)).unwrap();
        assert!((ctx.derived.gaussian_noise_mu[0] - 0.4308).abs() < 1e-3);
        assert_eq!(ctx.derived.mean_arm_gap, 1.0);
        let ctx3 = RunContext::new(small(ExperimentId::Exp3)).unwrap();
        assert_eq!(ctx3.loss.support_diameter, Some(6.0));
        assert!((ctx3.derived.mean_arm_gap - 0.2334).abs() < 1e-4);
    }
}
