use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nash_queue(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nash-queue"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const COARSE_MODEL: &str =
    r#"{"lambda": 5, "mu": 1, "alpha": 2, "beta": 0.2, "delta": 0.01, "horizon": 20}"#;

#[test]
fn solve_simulate_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("model.json"), COARSE_MODEL).unwrap();

    let stdout = ok(&nash_queue(
        d,
        &[
            "solve",
            "--config",
            "model.json",
            "--out",
            "eq.json",
            "--density-csv",
            "density.csv",
            "--dynamics-csv",
            "dynamics.csv",
        ],
    ));
    assert!(stdout.contains("support"));
    assert!(fs::read_to_string(d.join("density.csv"))
        .unwrap()
        .starts_with("time,density\n"));
    assert!(fs::read_to_string(d.join("dynamics.csv"))
        .unwrap()
        .starts_with("time,p0,mean,var\n"));

    ok(&nash_queue(
        d,
        &[
            "simulate",
            "--equilibrium",
            "eq.json",
            "--spacing",
            "1",
            "--days",
            "400",
            "--seed",
            "5",
        ],
    ));
    let csv = fs::read_to_string(d.join("observations.csv")).unwrap();
    assert_eq!(csv.lines().count(), 401);

    ok(&nash_queue(
        d,
        &[
            "estimate",
            "--observations",
            "observations.csv",
            "--equilibrium",
            "eq.json",
            "-o",
            "est.json",
        ],
    ));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("est.json")).unwrap()).unwrap();
    assert_eq!(report["success"], true);
    let theta_hat = report["theta_hat"].as_f64().unwrap();
    assert!((theta_hat - 1.0 / 11.0).abs() < 0.03, "{theta_hat}");
    let ci = report["confidence_interval_95"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() < theta_hat && theta_hat < ci[1].as_f64().unwrap());
    assert!(report["asymptotic_variance"].as_f64().unwrap() > 0.0);
    assert!(report["support"]["a_tilde_index"].is_u64());

    // Without an artifact there is no variance and μ must be given.
    let plain = ok(&nash_queue(
        d,
        &[
            "estimate",
            "--observations",
            "observations.csv",
            "--mu",
            "1",
        ],
    ));
    let plain: serde_json::Value = serde_json::from_str(&plain).unwrap();
    assert_eq!(plain["theta_hat"].as_f64().unwrap(), theta_hat);
    assert!(plain["asymptotic_variance"].is_null());
    let missing_mu = nash_queue(d, &["estimate", "--observations", "observations.csv"]);
    assert!(!missing_mu.status.success());
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("model.json"), COARSE_MODEL).unwrap();
    ok(&nash_queue(d, &["solve", "--config", "model.json"]));
    for name in ["a.csv", "b.csv"] {
        ok(&nash_queue(
            d,
            &[
                "simulate",
                "--equilibrium",
                "equilibrium.json",
                "--times",
                "0,2.5,5,10",
                "-d",
                "50",
                "--seed",
                "9",
                "-o",
                name,
            ],
        ));
    }
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );
}

#[test]
fn experiment_reports_failures_as_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let plan = format!(
        r#"{{"model": {COARSE_MODEL}, "n_values": [20], "schedules": [{{"m": 5, "spacing": 5.0}}], "replications": 3}}"#
    );
    fs::write(d.join("plan.json"), plan).unwrap();
    let stdout = ok(&nash_queue(
        d,
        &[
            "experiment",
            "--plan",
            "plan.json",
            "-o",
            "out",
            "--tables",
            "--seed",
            "4",
        ],
    ));
    assert!(stdout.contains("η ="), "{stdout}");
    assert!(d.join("out/table_cells.csv").exists());
    assert!(d.join("out/summary.csv").exists());
    assert!(!d.join("out/fig_equilibrium.csv").exists());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("bad.json"),
        r#"{"lambda": -1, "mu": 1, "alpha": 2, "beta": 0.2, "horizon": 20}"#,
    )
    .unwrap();
    let out = nash_queue(d, &["solve", "--config", "bad.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = nash_queue(
        d,
        &[
            "simulate",
            "--equilibrium",
            "nope.json",
            "--spacing",
            "1",
            "-d",
            "5",
        ],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
}
