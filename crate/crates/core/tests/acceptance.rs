use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risk_bandit::confidence::{self, StochasticActionParams};
use risk_bandit::environments::ExperimentId;
use risk_bandit::harness::{aggregate, run_experiment, ExperimentConfig, RegretTrace, RunContext};
use risk_bandit::loss::LossModel;
use risk_bandit::policies::{Algorithm, OgdState};
use risk_bandit::risk_oracle::{self, Distribution};
use risk_bandit::DesignState;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let r1 = risk_oracle::entropic_two_point(0.5, 1.0, -1.0, 1.0).unwrap();
    let r2 = risk_oracle::entropic_two_point(0.25, 2.0, -2.0, 1.0).unwrap();
    let mu1 = risk_oracle::zero_expectile_mean(0.1, 0.5).unwrap();
    let mu2 = risk_oracle::zero_expectile_mean(0.1, 3.0).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = (r1 - 0.4338).abs() <= 5e-3
        && (r2 - 0.667).abs() <= 5e-3
        && (0.43..=0.45).contains(&mu1)
        && (2.60..=2.64).contains(&mu2)
        && elapsed < 1.0;
    outcome(ok, format!("rho1={r1:.5} rho2={r2:.5} mu1={mu1:.5} mu2={mu2:.5} in {elapsed:.3}s"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst_grid = 0.0f64;
    for &p in &[0.05, 0.1, 0.3, 0.7, 0.95] {
        for &sigma in &[0.2, 0.5, 1.0, 2.0, 3.0] {
            let closed = risk_oracle::gaussian_expectile(p, 0.7, sigma).unwrap();
            let loss = LossModel::expectile(p).unwrap();
            let quad = risk_oracle::risk_by_quadrature(&loss, &Distribution::gaussian(0.7, sigma)).unwrap();
            worst_grid = worst_grid.max((closed - quad).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_shift = 0.0f64;
    for case in 0..50 {
        let loss = match case % 3 {
            0 => LossModel::squared(),
            1 => LossModel::expectile(rng.random_range(0.05..0.95)).unwrap(),
            _ => LossModel::entropic(rng.random_range(0.1..1.0), 10.0).unwrap(),
        };
        assert!(loss.is_translation_equivariant());
        let dist = match case % 5 {
            0 | 3 => Distribution::gaussian(rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0)),
            1 => Distribution::expectile_asymmetric(rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0), rng.random_range(0.05..0.95)),
            _ => {
                let a = rng.random_range(-3.0..3.0);
                Distribution::two_point(rng.random_range(0.05..0.95), a, a - rng.random_range(0.5..3.0))
            }
        };
        let c = rng.random_range(-5.0..5.0);
        let base = risk_oracle::risk_by_quadrature(&loss, &dist).unwrap();
        let moved = risk_oracle::risk_by_quadrature(&loss, &dist.clone().shifted(c)).unwrap();
        worst_shift = worst_shift.max((moved - base - c).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst_grid <= 1e-6 && worst_shift <= 1e-7 && elapsed < 10.0;
    outcome(ok, format!("grid max err {worst_grid:.2e}, translation max err {worst_shift:.2e} in {elapsed:.2}s"))
}

fn random_history(rng: &mut ChaCha8Rng, d: usize, n: usize, v_reg: f64) -> DesignState {
    let theta: DVector<f64> = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let mut state = DesignState::new(d, v_reg, 1.0).unwrap();
    for _ in 0..n {
        let mut x: DVector<f64> = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        x /= x.norm().max(1.0);
        let noise: f64 = rng.random_range(-1.0..1.0);
        state.update(&x, theta.dot(&x) + noise.powi(3) * 2.0).unwrap();
    }
    state
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_ratio = 0.0f64;
    for i in 0..100 {
        let d = 2 + i % 4;
        let n = rng.random_range(5..200);
        let state = random_history(&mut rng, d, n, 1.0);
        let loss = LossModel::expectile(rng.random_range(0.05..0.95)).unwrap();
        let est = state.erm_fit(&loss, 0.1, &DVector::zeros(d)).unwrap();
        let g = state.grad_f(&loss, &est.theta_hat, 0.1).unwrap().norm();
        worst_ratio = worst_ratio.max(g / (1e-9 * (n as f64).sqrt()));
    }
    let mut worst_ridge = 0.0f64;
    for _ in 0..20 {
        let state = random_history(&mut rng, 3, 60, 1.0);
        let alpha = 0.1;
        let mut gram = DMatrix::identity(3, 3) * alpha;
        let mut b = DVector::zeros(3);
        for (x, y) in state.actions().iter().zip(state.rewards()) {
            gram.ger(1.0, x, x, 1.0);
            b.axpy(*y, x, 1.0);
        }
        let ridge = gram.lu().solve(&b).unwrap();
        let est = state.erm_fit(&LossModel::squared(), alpha, &DVector::zeros(3)).unwrap();
        worst_ridge = worst_ridge.max((est.theta_hat - ridge).amax());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = worst_ratio <= 1.0 && worst_ridge <= 1e-8 && elapsed < 10.0;
    outcome(
        ok,
        format!("max grad/(1e-9 sqrt t) {worst_ratio:.3}, ridge max err {worst_ridge:.2e} in {elapsed:.2}s"),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let losses = [
        LossModel::squared(),
        LossModel::expectile(0.1).unwrap(),
        LossModel::expectile(0.8).unwrap(),
        LossModel::entropic(0.5, 10.0).unwrap(),
        LossModel::quantile(0.3).unwrap(),
    ];
    let mut loss_failures = 0;
    for loss in &losses {
        for _ in 0..10_000 {
            let y: f64 = rng.random_range(-3.0..3.0);
            let xi: f64 = rng.random_range(-3.0..3.0);
            let h = 1e-5;
            if (y - xi).abs() < 4.0 * h {
                continue;
            }
            let e = loss.evaluate(y, xi).unwrap();
            let plus = loss.evaluate(y, xi + h).unwrap();
            let minus = loss.evaluate(y, xi - h).unwrap();
            let fd1 = (plus.value - minus.value) / (2.0 * h);
            let fd2 = (plus.d1 - minus.d1) / (2.0 * h);
            if (e.d1 - fd1).abs() > 1e-6 * (1.0 + e.d1.abs()) || (e.d2 - fd2).abs() > 1e-6 * (1.0 + e.d2.abs()) {
                loss_failures += 1;
            }
        }
    }

    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for case in 0..20 {
        let d = 2 + case % 3;
        let state = random_history(&mut rng, d, 3 + case, 1.0);
        let loss = if case % 2 == 0 { LossModel::expectile(0.2).unwrap() } else { LossModel::entropic(0.7, 10.0).unwrap() };
        let theta: DVector<f64> = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));
        let alpha = 0.3;
        let g = state.grad_f(&loss, &theta, alpha).unwrap();
        let hmat = state.hess_h(&loss, &theta, alpha).unwrap();
        let u: DVector<f64> = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let h = 1e-6;
        let fd = (state.objective(&loss, &(&theta + &u * h), alpha).unwrap()
            - state.objective(&loss, &(&theta - &u * h), alpha).unwrap())
            / (2.0 * h);
        worst_grad = worst_grad.max((fd - g.dot(&u)).abs() / g.dot(&u).abs().max(1.0));
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = h;
            let col = (state.grad_f(&loss, &(&theta + &e), alpha).unwrap() - state.grad_f(&loss, &(&theta - &e), alpha).unwrap())
                / (2.0 * h);
            jac.set_column(j, &col);
        }
        worst_hess = worst_hess.max((jac - hmat).amax());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = loss_failures == 0 && worst_grad <= 1e-6 && worst_hess <= 1e-5 && elapsed < 10.0;
    outcome(
        ok,
        format!(
            "loss FD failures {loss_failures}, grad_F rel err {worst_grad:.2e}, hess_H err {worst_hess:.2e} in {elapsed:.2}s"
        ),
    )
}

struct ExperimentRun {
    id: ExperimentId,
    gap: f64,
    horizon: usize,
    warmup: usize,
    traces: Vec<RegretTrace>,
}

fn run_preset(id: ExperimentId, algorithms: Vec<Algorithm>, replications: usize, edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentRun {
    let mut config = ExperimentConfig::preset(id);
    config.algorithms = algorithms;
    config.replications = replications;
    edit(&mut config);
    let ctx = RunContext::new(config).unwrap();
    let traces = run_experiment(&ctx).unwrap();
    ExperimentRun {
        id,
        gap: ctx.derived.mean_arm_gap,
        horizon: ctx.config.horizon,
        warmup: ctx.config.warmup_pulls,
        traces,
    }
}

fn criterion_5(runs: &[ExperimentRun]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for run in runs {
        let summary = aggregate(&run.traces).unwrap();
        let base = summary.get("linucb_mean").unwrap().final_median();
        let cr = summary.get("linucb_cr").unwrap().final_median();
        let ogd = summary.get("linucb_ogd_cr").unwrap().final_median();
        let floor = 0.5 * run.gap * (run.horizon - run.warmup) as f64 * 0.5;
        let a = base > floor;
        let b = cr < 0.3 * base;
        let c = cr < ogd && ogd < base;
        ok &= a && b && c;
        parts.push(format!(
            "{}: mean {base:.1} (floor {floor:.1}) {}, cr {cr:.1} (< {:.1}) {}, ogd {ogd:.1} {}",
            run.id.name(),
            mark(a),
            0.3 * base,
            mark(b),
            mark(c)
        ));
    }
    outcome(ok, parts.join("; "))
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn criterion_6(runs: &[ExperimentRun]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for run in runs {
        let summary = aggregate(&run.traces).unwrap();
        let t = |name: &str| summary.get(name).unwrap().runtime_mean_s;
        let (mean, cr, ogd) = (t("linucb_mean"), t("linucb_cr"), t("linucb_ogd_cr"));
        let this = mean < ogd && ogd < cr && cr / ogd >= 2.0;
        ok &= this;
        parts.push(format!("{}: {mean:.4}s < {ogd:.4}s < {cr:.4}s ratio {:.1} {}", run.id.name(), cr / ogd, mark(this)));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_7(runs: &[&ExperimentRun]) -> Outcome {
    let (mut checked, mut violations) = (0, 0);
    for run in runs {
        for trace in &run.traces {
            checked += 1;
            violations += trace.elliptic_violations;
        }
    }
    outcome(violations == 0, format!("{violations} violations over {checked} runs"))
}

fn criterion_8() -> (Outcome, ExperimentRun) {
    let run = run_preset(ExperimentId::Exp1, vec![Algorithm::LinucbCr], 200, |c| c.diagnostics.coverage = true);
    let exits = run.traces.iter().filter(|t| t.coverage_held == Some(false)).count();
    let fraction = exits as f64 / run.traces.len() as f64;
    (outcome(fraction <= 0.1 + 0.05, format!("theta* left the set in {exits}/200 runs ({fraction:.3})")), run)
}

fn criterion_9() -> (Outcome, ExperimentRun) {
    let run = run_preset(ExperimentId::Exp2, vec![Algorithm::LinucbOgdCr], 200, |_| {});
    let violated = run.traces.iter().filter(|t| t.eigenvalue_held == Some(false)).count();
    let fraction = violated as f64 / run.traces.len() as f64;

    let mut lengths_ok = true;
    let mut lengths = Vec::new();
    for d in 2..=10 {
        let sap = StochasticActionParams { rho_x: 1.0 / d as f64, eps_h: 0.1 };
        let tight = confidence::episode_length_tight(&sap, 1.0, 0.05).unwrap();
        let simple = confidence::episode_length_simple(&sap, 1.0, 0.05).unwrap();
        lengths_ok &= tight <= simple;
        lengths.push(format!("{tight}/{simple}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z = -rng.random_range(1e-12..(-1.0f64).exp());
        let w = confidence::lambert_w_minus1(z).unwrap();
        worst = worst.max(((w * w.exp() - z) / z).abs());
    }
    let ok = fraction <= 0.1 + 0.05 && lengths_ok && worst <= 1e-12;
    (
        outcome(
            ok,
            format!(
                "line violated in {violated}/200 runs, tight/simple h {}, Lambert rel err {worst:.1e}",
                lengths.join(" ")
            ),
        ),
        run,
    )
}

fn ogd_regret(episodes: usize, seed: u64) -> f64 {
    let d = 3;
    let p = 0.3;
    let loss = LossModel::expectile(p).unwrap();
    let a = 2.0 * p.min(1.0 - p);
    let alpha = 0.1;
    let theta_star = DVector::from_vec(vec![1.0, -0.5, 0.3]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis: Vec<DVector<f64>> = (0..d).map(|i| DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    let stream: Vec<Vec<(DVector<f64>, f64)>> = (0..episodes)
        .map(|_| {
            basis
                .iter()
                .map(|x| {
                    let noise: f64 = rng.random_range(-1.0..1.0) + rng.random_range(-1.0..1.0);
                    (x.clone(), theta_star.dot(x) + noise)
                })
                .collect()
        })
        .collect();

    let mut ogd = OgdState::new(d, d, 3.0 / a, episodes * d + 1, 10.0);
    assert_eq!(ogd.episodes, episodes);
    let reg = alpha / episodes as f64;
    let episode_loss = |episode: &[(DVector<f64>, f64)], theta: &DVector<f64>| {
        0.5 * reg * theta.norm_squared()
            + episode.iter().map(|(x, y)| loss.evaluate(*y, theta.dot(x)).unwrap().value).sum::<f64>()
    };
    let mut batch = DesignState::new(d, 1.0, 1.0).unwrap();
    let mut played = 0.0;
    for episode in &stream {
        played += episode_loss(episode, &ogd.theta);
        for (x, y) in episode {
            batch.update(x, *y).unwrap();
            ogd.push(x.clone(), *y);
        }
        ogd.episode_update(&loss, alpha).unwrap();
    }
    let best = batch.erm_fit(&loss, alpha, &DVector::zeros(d)).unwrap().theta_hat;
    let optimum: f64 = stream.iter().map(|e| episode_loss(e, &best)).sum();
    played - optimum
}

fn criterion_10() -> Outcome {
    let sizes = [100usize, 400, 1600];
    let seeds = 30;
    let regrets: Vec<f64> = sizes
        .iter()
        .map(|&n| (0..seeds).map(|s| ogd_regret(n, 1000 + s)).sum::<f64>() / seeds as f64)
        .collect();
    let log2 = |n: usize| (n as f64).ln().powi(2);
    let allowed = log2(1600) / log2(100) * 1.5;
    let ratio = regrets[2] / regrets[0];
    let monotone_ok = regrets[1] / regrets[0] <= log2(400) / log2(100) * 1.5;
    outcome(
        ratio <= allowed && monotone_ok,
        format!(
            "mean regret N=100/400/1600: {:.3}/{:.3}/{:.3}, ratio {ratio:.3} <= {allowed:.3}",
            regrets[0], regrets[1], regrets[2]
        ),
    )
}

fn criterion_11() -> Outcome {
    let (d, horizon, delta, runs) = (3usize, 100usize, 0.1, 1000);
    let bound = confidence::ts_norm_bound(1.0, d, horizon, delta);
    let mut rng = risk_bandit::rng::SimRng::seed_from(11);
    let mut exceeded = 0;
    for _ in 0..runs {
        let mut max_norm = 0.0f64;
        for _ in 0..horizon {
            let xi = DVector::from_fn(d, |_, _| rng.normal());
            max_norm = max_norm.max(xi.norm());
        }
        if max_norm > bound {
            exceeded += 1;
        }
    }
    let fraction = exceeded as f64 / runs as f64;
    outcome(fraction <= delta + 0.05, format!("bound {bound:.3} exceeded in {exceeded}/{runs} runs"))
}

fn report(index: usize, o: &Outcome) {
    println!("criterion {index:>2}: {} | {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
}

fn main() {
    let mut outcomes: Vec<(usize, Outcome)> = Vec::new();
    let mut record = |i: usize, o: Outcome| {
        report(i, &o);
        outcomes.push((i, o));
    };
    record(1, criterion_1());
    record(2, criterion_2());
    record(3, criterion_3());
    record(4, criterion_4());

    let all = vec![Algorithm::LinucbMean, Algorithm::LinucbCr, Algorithm::LinucbOgdCr];
    let runs: Vec<ExperimentRun> = [ExperimentId::Exp1, ExperimentId::Exp2, ExperimentId::Exp3]
        .into_iter()
        .map(|id| run_preset(id, all.clone(), 50, |_| {}))
        .collect();
    record(5, criterion_5(&runs));
    record(6, criterion_6(&runs));
    let (c8, coverage_run) = criterion_8();
    let (c9, eigen_run) = criterion_9();
    let mut every: Vec<&ExperimentRun> = runs.iter().collect();
    every.push(&coverage_run);
    every.push(&eigen_run);
    record(7, criterion_7(&every));
    record(8, c8);
    record(9, c9);
    record(10, criterion_10());
    record(11, criterion_11());

    outcomes.sort_by_key(|(i, _)| *i);
    let failed: Vec<usize> = outcomes.iter().filter(|(_, o)| !o.passed).map(|(i, _)| *i).collect();
    println!("acceptance: {}/{} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
