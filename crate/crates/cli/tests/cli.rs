use std::process::{Command, Output};

use serde_json::Value;

fn permlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_permlab")).args(args).output().expect("binary runs")
}

fn payload(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

#[test]
fn pk_exact_value() {
    let v = payload(&permlab(&["pk-exact", "--k", "2"]));
    let p = v["p_k"].as_f64().unwrap();
    assert!((p - 0.553_739_679_7).abs() < 1e-9, "{p}");
}

#[test]
fn pk_mc_is_reproducible() {
    let args = ["pk-mc", "--k", "1", "--samples", "1000000", "--seed", "7"];
    let a = permlab(&args);
    let b = permlab(&[&args[..], &["--threads", "3"]].concat());
    assert_eq!(a.stdout, b.stdout);
    let p = payload(&a)["p_k"].as_f64().unwrap();
    assert!((p - (1.0 - (-1f64).exp())).abs() < 5.0 * 0.5 / 1000.0);
}

#[test]
fn run_record_schema() {
    let dir = std::env::temp_dir().join(format!("permlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("record.json");
    let out = permlab(&["ink-exact", "--n", "4", "--k", "2", "--out", path.to_str().unwrap()]);
    let v = payload(&out);
    assert_eq!(v["numerator"], "5");
    assert_eq!(v["denominator"], "12");
    let rec: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["command", "params", "build_id", "seed", "wall_time_s", "payload"] {
        assert!(rec.get(key).is_some(), "missing {key}");
    }
    assert_eq!(rec["command"], "ink-exact");
    assert_eq!(rec["payload"], v);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn verify_all_schema() {
    let v = payload(&permlab(&["verify-all", "--budget", "60", "--only", "1,4"]));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row["status"], "pass");
        assert!(row["measurements"].as_array().is_some_and(|m| !m.is_empty()));
    }
    assert_eq!(v["passed"], true);
}

#[test]
fn csv_output() {
    let out = permlab(&["gfun-fourier", "--m", "1", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("abs,decay_bound,im,m,re"));
    assert_eq!(lines.next().unwrap().split(',').count(), 5);
}

#[test]
fn exit_codes() {
    assert_eq!(permlab(&["pk-exact", "--k", "0"]).status.code(), Some(2));
    assert_eq!(permlab(&["pk-exact", "--k", "21"]).status.code(), Some(3));
    assert_eq!(permlab(&["gfun-fourier", "--m", "65"]).status.code(), Some(2));
    assert_eq!(permlab(&["no-such-command"]).status.code(), Some(64));
    assert_eq!(permlab(&["pk-exact", "--k", "x"]).status.code(), Some(64));
    assert_eq!(permlab(&[]).status.code(), Some(64));
    assert_eq!(permlab(&["--help"]).status.code(), Some(0));
    assert_eq!(permlab(&["--version"]).status.code(), Some(0));
    let huge: Vec<String> = (0..23).map(|i| ((1u64 << 40) + i).to_string()).collect();
    let x = huge.join(",");
    assert_eq!(permlab(&["tau", "--x", &x, "--ell", "23"]).status.code(), Some(3));
}
