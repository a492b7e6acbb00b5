use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn aeb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aeb"))
        .args(args)
        .current_dir(cwd)
        .env_remove("AEB_OUT_DIR")
        .output()
        .expect("spawn aeb")
}

fn entries(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn run_writes_trace_metrics_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = aeb(&["run", "--controller", "lqr", "--out", "res"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    assert_eq!(entries(&res), ["config_lqr.toml", "metrics_lqr.toml", "trace_lqr.csv"]);
    let metrics: toml::Table = fs::read_to_string(res.join("metrics_lqr.toml")).unwrap().parse().unwrap();
    assert_eq!(metrics["collision"].as_bool(), Some(false));
    assert_eq!(metrics["controller"].as_str(), Some("lqr"));
}

#[test]
fn missing_scenario_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = aeb(&["run", "--scenario", "absent.toml", "--out", "res"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
    assert!(!dir.path().join("res").exists());
}

#[test]
fn invalid_field_is_named_and_nothing_is_written() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[scenario]\ndt = 0.5\n").unwrap();
    let out = aeb(&["run", "--scenario", "bad.toml", "--out", "res"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.dt"));
    assert!(!dir.path().join("res").exists());
}

#[test]
fn effective_config_reruns_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.toml"),
        "[scenario]\ngap0 = 14.0\nv0_ego = 25.0\n",
    )
    .unwrap();
    let first = aeb(&["run", "--scenario", "s.toml", "--out", "a"], dir.path());
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = aeb(&["run", "--scenario", "a/config_smc.toml", "--out", "b"], dir.path());
    assert!(second.status.success(), "{}", String::from_utf8_lossy(&second.stderr));
    for name in ["trace_smc.csv", "metrics_smc.toml", "config_smc.toml"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn compare_writes_both_runs_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aeb"))
        .arg("compare")
        .current_dir(dir.path())
        .env("AEB_OUT_DIR", "cmp")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().next().unwrap().contains("smc"));
    assert!(stdout.lines().next().unwrap().contains("lqr"));
    let names = entries(&dir.path().join("cmp"));
    for expected in [
        "comparison.txt",
        "config_lqr.toml",
        "config_smc.toml",
        "metrics_lqr.toml",
        "metrics_smc.toml",
        "plot.csv",
        "trace_lqr.csv",
        "trace_smc.csv",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
}

#[test]
fn verify_single_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = aeb(&["verify", "--only", "care"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 2);
    assert!(!stdout.contains("pacejka"));
}

#[test]
fn verify_reports_failure_with_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("neg.toml"), "[vehicle]\ntire_b = -24.0\n").unwrap();
    let out = aeb(&["verify", "--only", "pacejka", "--scenario", "neg.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn config_prints_reference_and_effective() {
    let dir = tempfile::tempdir().unwrap();
    let out = aeb(&["config"], dir.path());
    assert!(out.status.success());
    let reference = String::from_utf8(out.stdout).unwrap();
    assert!(reference.contains("[scenario]"));
    fs::write(dir.path().join("c.toml"), reference).unwrap();
    let out = aeb(&["config", "--scenario", "c.toml"], dir.path());
    assert!(out.status.success());
    let effective: toml::Table = String::from_utf8(out.stdout).unwrap().parse().unwrap();
    assert_eq!(effective["scenario"]["controller"].as_str(), Some("smc"));
}

#[test]
fn unknown_controller_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = aeb(&["run", "--controller", "mpc"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
