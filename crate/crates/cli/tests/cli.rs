use std::fs;
use std::process::{Command, Output};

fn ecga(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecga"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_prints_one_json_object() {
    let o = ecga(&["run", "--problem", "trap:4x4", "--algo", "ecga", "--n", "400", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(v["success"].is_boolean());
    assert!(v["n_fe"].as_u64().unwrap() >= 400);
    assert!(v["generations"].as_u64().unwrap() >= 1);
    assert_eq!(v["problem"], "trap:4x4");
    assert!(v["final_model"]["partitions"].is_array());
}

#[test]
fn run_output_is_byte_identical_for_identical_arguments() {
    let args = ["run", "--problem", "onemax:30", "--p-i", "0.5", "--n", "200", "--seed", "9"];
    let a = ecga(&args);
    let b = ecga(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["algorithm"], "ecga_inheritance");
    assert!(v["inherited_assignments"].as_u64().unwrap() > 0);
}

#[test]
fn verbose_logs_generations_on_stderr() {
    let o = ecga(&["run", "--problem", "onemax:20", "--n", "100", "--verbose"]);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.lines().next().unwrap().starts_with("generation=0 "));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(err.lines().count() as u64, v["generations"].as_u64().unwrap());
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["run", "--bogus"][..],
        &["run", "--problem", "trap:4"],
        &["run", "--problem", "knapsack:5"],
        &["run", "--algo", "ecga", "--p-i", "0.5"],
        &["run", "--algo", "ecga-inheritance", "--p-i", "1.5"],
        &["sweep-pi", "--problem", "onemax:10"],
        &["sweep-pi", "--grid", "0:0.99:0.33", "--out", "x.csv"],
        &["bisect", "--problem", "onemax:10"],
        &["predict", "--eq", "99"],
        &[],
    ] {
        let o = ecga(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn help_exits_zero() {
    assert_eq!(ecga(&["--help"]).status.code(), Some(0));
    assert_eq!(ecga(&["sweep-m", "--help"]).status.code(), Some(0));
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = ecga(&[
        "bisect", "--problem", "trap:6x5", "--algo", "ecga", "--probe-runs", "3", "--n-low", "8",
        "--n-high", "16", "--cap", "40", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn predict_ratio_grid() {
    let o = ecga(&["predict", "--eq", "16", "--grid", "0:0.9:0.05"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p_i,ratio"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 19);
    assert_eq!(rows[0], (0.0, 1.0));
    let at = rows.iter().find(|r| r.0 == 0.2).unwrap();
    assert!((at.1 - 1.0516).abs() < 1e-3);
}

#[test]
fn predict_other_forms() {
    let o = ecga(&["predict", "--eq", "bounds", "--k", "4", "--grid", "5,10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("m,lower,nominal,upper\n5,"));
    let o = ecga(&["predict", "--eq", "13", "--k", "4", "--m", "10", "--grid", "0,1"]);
    assert_eq!(o.status.code(), Some(1), "p_i = 1 is outside the predictor grid");
    let o = ecga(&["predict", "--eq", "13", "--k", "4", "--m", "10", "--grid", "0"]);
    let text = stdout(&o);
    let v: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 16.0 * 10f64.ln()).abs() < 1e-9);
}

#[test]
fn sweep_pi_writes_inheritance_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pi.csv");
    let args = [
        "sweep-pi", "--problem", "onemax:16", "--grid", "0:0.4:0.2", "--runs", "5",
        "--probe-runs", "5", "--out", out.to_str().unwrap(),
    ];
    let o = ecga(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("p_i,n,runs,success_rate,mean_nfe,stderr_nfe,ratio_empirical,ratio_eq16,speedup_empirical,speedup_eq17")
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[6], "1");
    assert_eq!(text.lines().count(), 4);
    // Same command line, same bytes.
    let again = dir.path().join("pi2.csv");
    let mut args2 = args;
    args2[10] = again.to_str().unwrap();
    assert_eq!(ecga(&args2).status.code(), Some(0));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn config_file_fills_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# defaults\nproblem = onemax:10\nn = 64\nseed = 3\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = ecga(&["run", "--config", c]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 64);
    assert_eq!(v["seed"], 3);
    let o = ecga(&["run", "--config", c, "--n", "80"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 80, "flags win over the config file");

    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(ecga(&["run", "--config", c]).status.code(), Some(1));
}

#[test]
fn sweep_m_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = ecga(&[
        "sweep-m", "--k", "3", "--m-grid", "2,3,5,8", "--runs", "4", "--probe-runs", "4",
        "--alpha", "0.25", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("m,k,n_ecga,nfe_ecga,n_mut,nfe_mut,eta_empirical,eta_fit\n"));
    assert_eq!(text.lines().count(), 5);
    let fit = fs::read_to_string(dir.path().join("m_fit.csv")).unwrap();
    assert!(fit.starts_with("series,exponent,constant,r2,ci_low,ci_high\n"));
    assert_eq!(fit.lines().count(), 4);
}
