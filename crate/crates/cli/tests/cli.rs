use std::path::Path;
use std::process::{Command, Output};

fn ebaloha(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebaloha")).args(args).output().expect("spawn ebaloha")
}

fn stdout(args: &[&str]) -> String {
    let out = ebaloha(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    ebaloha(args).status.code().expect("exit code")
}

#[test]
fn classify_examples() {
    let ergodic = stdout(&["classify", "--b", "2", "--i0", "1.5", "--n", "5"]);
    assert!(ergodic.contains("\"joint_regime\":\"ergodic\""), "{ergodic}");
    let transient = stdout(&["classify", "--b", "2", "--i0", "0", "--n", "2"]);
    assert!(transient.contains("\"joint_regime\":\"transient\""), "{transient}");
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["classify", "--b", "0.9"]), 2);
    assert_eq!(code(&["classify", "--no-such-flag", "1"]), 2);
    assert_eq!(code(&["classify", "--format", "xml"]), 2);
    assert_eq!(code(&["sim-sat", "--n", "2", "--start", "1,2,3"]), 2);
    assert_eq!(code(&["oracle", "--budget", "100"]), 3);
    assert_eq!(code(&["mg1", "--lambda", "0.5", "--r0", "10", "--r-cap", "10"]), 4);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "global.seed = 3\nclassify.bogus = 1\n").unwrap();
    assert_eq!(code(&["classify", "--config", path.to_str().unwrap()]), 2);
    // keys of other subcommands are ignored
    std::fs::write(&path, "global.seed = 3\nsim-sat.n = 4\nclassify.n = 7\n").unwrap();
    let out = stdout(&["classify", "--config", path.to_str().unwrap()]);
    assert!(out.contains("\"n\":7"), "{out}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# classify settings\nclassify.n = 7\nclassify.i0 = 2\n").unwrap();
    let out = stdout(&["classify", "--config", path.to_str().unwrap(), "--n", "3"]);
    assert!(out.contains("\"n\":3") && out.contains("\"i0\":2.0"), "{out}");
}

fn write(path: &Path, args: &[&str]) -> Vec<u8> {
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--out", path.to_str().unwrap()]);
    let out = ebaloha(&full);
    assert!(out.status.success(), "{full:?}: {}", String::from_utf8_lossy(&out.stderr));
    std::fs::read(path).unwrap()
}

#[test]
fn outputs_rerun_from_their_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.csv");
    let args = ["sim-sat", "--format", "csv", "--n", "3", "--i0", "1.5", "--horizon", "50000", "--replicas", "3"];
    let first = write(&a, &args);
    // CSV echo -> JSON lines with the format overridden -> back to CSV
    write(&b, &["sim-sat", "--config", a.to_str().unwrap(), "--format", "jsonl"]);
    let third = write(&c, &["sim-sat", "--config", b.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(first, third);
}

#[test]
fn sim_sat_is_deterministic() {
    let args = ["sim-sat", "--n", "2", "--b", "2", "--i0", "0", "--horizon", "1000000", "--seed", "7"];
    assert_eq!(stdout(&args), stdout(&args));
    let other = stdout(&["sim-sat", "--n", "2", "--b", "2", "--i0", "0", "--horizon", "1000000", "--seed", "8"]);
    assert_ne!(stdout(&args), other);
}

#[test]
fn csv_layout() {
    let out = stdout(&["mg1", "--service", "det:1", "--lambda", "0.5", "--kind", "modified", "--format", "csv"]);
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("# ebaloha "));
    assert!(lines[1].starts_with("# config: ") && lines[1].contains("mg1.kind=modified"));
    assert_eq!(lines[2], "type,arrivals,prob");
    assert!(lines.contains(&"type,position,prob"));
    let summary = lines.last().unwrap();
    assert!(summary.starts_with("summary,") && summary.contains(",modified,"), "{summary}");
}

#[test]
fn oracle_reports_throughput() {
    let out = stdout(&["oracle", "--n", "2", "--m-cap", "40", "--b", "2", "--i0", "2"]);
    let summary: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    let thr = summary["throughput"].as_f64().unwrap();
    assert!((thr - 0.308809102264).abs() < 1e-9, "{thr}");
    assert!(summary["boundary_mass"].as_f64().unwrap() < 1e-6);
    assert!(summary["first_success_time"].is_null());
}
