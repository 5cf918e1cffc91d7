use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn satsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_satsplit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("matrix.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
[[scenario]]
name = "leo"
preset = "leo"
loss_pct = 0.1
measurements = ["quic-bulk", "h1-web"]
repetitions = 2
duration_s = 2
"#;

#[test]
fn presets_lists_eight_scenarios() {
    let out = satsplit(&["presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.contains("geo-loss1 "));
    assert!(text.contains("leo-loss0.01 "));
    assert!(text.contains("580.0"));
    assert!(text.contains("112.0"));
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), SMALL);
    let out = satsplit(&["validate", "--config", &good]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let bad = write_config(dir.path(), "[[scenario]]\nname = 'x'\npreset = 'geo'\nattenuation_db = 3\n");
    let out = satsplit(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("attenuation_db"));

    let out = satsplit(&["validate", "--config", "/nonexistent/matrix.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let out = satsplit(&["run", "--config"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_results_and_respects_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let seq = dir.path().join("seq");
    let par = dir.path().join("par");
    let out = satsplit(&[
        "run", "--config", &cfg, "--out", seq.to_str().unwrap(), "--repetitions", "3", "--seed", "40",
        "--event-logs",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("12 runs, 0 failed"));
    let out = satsplit(&[
        "run", "--config", &cfg, "--out", par.to_str().unwrap(), "--repetitions", "3", "--seed", "40",
        "--jobs", "3",
    ]);
    assert!(out.status.success());
    for name in ["goodput.csv", "cwnd.csv", "web.csv", "bulk.csv", "runs.csv"] {
        assert_eq!(fs::read(seq.join(name)).unwrap(), fs::read(par.join(name)).unwrap(), "{name}");
    }
    let runs = fs::read_to_string(seq.join("runs.csv")).unwrap();
    assert!(runs.contains(",40,ok,"));
    assert!(runs.contains(",42,ok,"));
    assert_eq!(fs::read_dir(seq.join("events")).unwrap().count(), 12);
    assert!(!par.join("events").exists());
}

#[test]
fn failed_runs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[[scenario]]\nname = 'slow'\npreset = 'geo'\nloss_pct = 0\nmeasurements = ['h3-web']\nrepetitions = 1\nweb_timeout_s = 1\n",
    );
    let out_dir = dir.path().join("out");
    let out = satsplit(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("incomplete"));
    assert!(out_dir.join("runs.csv").exists());
}
