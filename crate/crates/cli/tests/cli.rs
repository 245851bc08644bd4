use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_risk-bandit"))
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"experiment": "exp1", "algorithms": ["linucb_mean", "linucb_cr"], "horizon": 40,
            "replications": 3, "sigma": 0.1, "s_radius": 1.5, "mean_s_radius": 3.5}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--reps", "2", "--workers", "1", "--seed", "9"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("experiment,algorithm,replication,t,cum_regret\n"));
    // header plus 2 algorithms × 2 replications × 40 rounds
    assert_eq!(trace.lines().count(), 1 + 2 * 2 * 40);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("algorithm,t,p5,p25,p50,p75,p95\n"));
    let runtimes = std::fs::read_to_string(out.join("runtimes.csv")).unwrap();
    assert_eq!(runtimes.lines().count(), 3);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["replications"], 2);
    assert_eq!(manifest["config"]["base_seed"], 9);
}

#[test]
fn bad_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        "{\n  \"experiment\": \"exp1\",\n  \"algorithms\": [\"linucb_cr\"],\n  \"horizon\": 40,\n  \"replications\": 1,\n  \"sigma\": 0.1,\n  \"s_radius\": -1\n}",
    )
    .unwrap();
    let output = bin().args(["run", "--config"]).arg(&config).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("line 7") && stderr.contains("s_radius"), "{stderr}");
}

#[test]
fn risk_eval_on_a_preset_and_on_json() {
    let output = bin().args(["risk", "eval", "--loss", r#"{"kind": "entropic", "gamma": 1.0}"#, "--dist", "exp3-arm2"]).output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let v: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let want = (0.25 * 2f64.exp() + 0.75 * (-2f64).exp()).ln();
    assert!((v["risk"].as_f64().unwrap() - want).abs() < 1e-12);

    let output = bin()
        .args(["risk", "eval", "--loss", r#"{"kind": "squared"}"#, "--dist", r#"{"kind": "gaussian", "mean": 1.5, "std": 2.0}"#])
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(v["risk"].as_f64().unwrap(), 1.5);
    assert!((v["risk_quadrature"].as_f64().unwrap() - 1.5).abs() < 1e-8);
}

#[test]
fn env_describe_lists_the_arms() {
    let output = bin().args(["env", "describe", "--experiment", "exp3"]).output().unwrap();
    assert!(output.status.success());
    let v: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let arms = v["arms"].as_array().unwrap();
    assert_eq!(arms.len(), 2);
    let gap = arms[1]["risk"].as_f64().unwrap() - arms[0]["risk"].as_f64().unwrap();
    let want = (0.25 * 2f64.exp() + 0.75 * (-2f64).exp()).ln() - (0.5 * 1f64.exp() + 0.5 * (-1f64).exp()).ln();
    assert!((gap - want).abs() < 1e-12);
}
