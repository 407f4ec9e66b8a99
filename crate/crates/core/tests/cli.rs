use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SRF: &str = env!("CARGO_BIN_EXE_srf");

fn srf(args: &[&str]) -> Output {
    Command::new(SRF).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn map_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = srf(&["map", "--fn", "builtin:constant:0.5", "--domain", "0:360,-10:90", "--grid", "61,26", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# srf-map v1 n=2 grid=61,26 domain=0:360,-10:90\n"), "{text:.80}");
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 1586);
    assert_eq!(rows[0], "0,-10,0.5");
    assert_eq!(rows[1585], "360,90,0.5");
}

#[test]
fn map_over_budget_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = srf(&["map", "--fn", "builtin:constant:0.5", "--domain", "0:1,0:1,0:1", "--grid", "1000", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn map_through_an_exec_evaluator() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let spec = format!("exec:{SRF} serve --fn builtin:gaussian_bump --domain 0:10");
    let o = srf(&["map", "--fn", &spec, "--grid", "180", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&out).len(), 180);
    let local = dir.path().join("l.csv");
    srf(&["map", "--fn", "builtin:gaussian_bump", "--domain", "0:10", "--grid", "180", "--out", p(&local)]);
    assert_eq!(data_rows(&out), data_rows(&local));
}

#[test]
fn find_writes_a_trace_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.json"), dir.path().join("y.json"));
    for out in [&x, &y] {
        let o = srf(&[
            "find", "--fn", "builtin:step_box", "--domain", "0:10,0:10", "--u0", "4,4", "--method", "oirb", "--steps", "100", "--out", p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&y).unwrap());
    let t = json(&x);
    assert_eq!(t["method"], "oirb");
    assert_eq!(t["steps"].as_array().unwrap().len(), 101);
    assert_eq!(t["counters"]["forward"], 800);
    assert_eq!(t["counters"]["backward"], 0);
    for key in ["params", "u0", "domain", "final"] {
        assert!(t.get(key).is_some(), "{key}");
    }
}

#[test]
fn find_with_several_seeds_writes_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let o = srf(&[
        "find", "--fn", "builtin:smooth_plateau", "--domain", "0:10", "--u0", "3", "--u0", "5", "--method", "naive", "--steps", "20", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0);
    assert!(out.join("naive_0.json").exists() && out.join("naive_1.json").exists());
}

#[test]
fn find_exit_codes() {
    let base = ["find", "--fn", "builtin:smooth_plateau", "--domain", "0:10,0:10", "--u0", "4,4", "--steps", "5"];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        code(&srf(&a))
    };
    assert_eq!(with(&["--method", "oirw", "--beta", "0.7"]), 4);
    assert_eq!(with(&["--method", "oirw", "--beta", "0.5"]), 0);
    assert_eq!(with(&["--method", "bogus"]), 2);
    assert_eq!(with(&["--eta", "-1"]), 2);
    assert_eq!(code(&srf(&["find", "--fn", "builtin:nope", "--u0", "1,1"])), 2);
    assert_eq!(code(&srf(&["find", "--fn", "builtin:step_box", "--u0", "1"])), 2);

    let no_grad = format!("exec:{SRF} serve --fn builtin:step_box --domain 0:10,0:10 --no-grad");
    assert_eq!(code(&srf(&["find", "--fn", &no_grad, "--u0", "4,4", "--method", "oirw"])), 2);
    assert_eq!(code(&srf(&["find", "--fn", &no_grad, "--u0", "4,4", "--method", "oirb", "--steps", "5"])), 0);
}

#[test]
fn evaluator_failure_exits_3_with_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("dies.sh");
    std::fs::write(
        &script,
        "#!/bin/sh\necho '{\"op\":\"ready\",\"n\":1,\"grad\":false,\"domain\":[[0,10]]}'\nread -r line\nexit 1\n",
    )
    .unwrap();
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let out = dir.path().join("t.json");
    let spec = format!("exec:{}", p(&script));
    let o = srf(&["find", "--fn", &spec, "--u0", "5", "--method", "naive", "--out", p(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
    let partial = json(&dir.path().join("t.json.partial"));
    assert_eq!(partial["steps"].as_array().unwrap().len(), 1);
}

#[test]
fn adversarial_flag_searches_the_complement() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = srf(&[
        "find", "--fn", "builtin:step_box", "--domain", "0:10", "--adversarial", "--u0", "8", "--method", "naive", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0);
    let t = json(&out);
    let (a, b) = (t["final"]["a"][0].as_f64().unwrap(), t["final"]["b"][0].as_f64().unwrap());
    // grows right of the plateau, where the complement is high
    assert!(a > 5.5 && b > 9.0, "{a} {b}");
}

#[test]
fn validate_verdicts() {
    let run = |region: &str, extra: &[&str]| {
        let mut a = vec!["validate", "--fn", "builtin:step_box", "--domain", "0:10,0:10", "--region", region];
        a.extend_from_slice(extra);
        let o = srf(&a);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_slice::<Value>(&o.stdout).unwrap()
    };
    let r = run("2:6,2:6", &[]);
    assert_eq!(r["verdict"], "robust");
    assert_eq!(r["samples_used"], 33 * 33);
    assert_eq!(run("0:4,0:4", &[])["verdict"], "neither");
    let whole = run("0:10,0:10", &["--samples", "10"]);
    assert_eq!(whole["volume"], 25.0);
    assert_eq!(whole["verdict"], "neither");
}

#[test]
fn validate_takes_domain_from_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    srf(&["find", "--fn", "builtin:step_box", "--domain", "0:10", "--u0", "4", "--method", "naive", "--out", p(&trace)]);
    let o = srf(&["validate", "--fn", "builtin:step_box", "--trace", p(&trace)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["contains_u0"], true);

    std::fs::write(&trace, "{\"not\": \"a trace\"}").unwrap();
    assert_eq!(code(&srf(&["validate", "--fn", "builtin:step_box", "--trace", p(&trace)])), 2);
}

#[test]
fn srvr_of_whole_domain_runs_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let o = srf(&[
        "find", "--fn", "builtin:constant:0.5", "--domain", "0:360,-10:90", "--u0", "100,40", "--u0", "200,10", "--method", "naive", "--lambda", "0",
        "--eta", "50", "--steps", "200", "--out", p(&runs),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("s.json");
    let o = srf(&["srvr", p(&runs), "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["srvr"], 1.0);
    assert_eq!(s["runs"], 2);
    assert_eq!(s["per_method"]["naive"], 1.0);
    assert_eq!(json(&out), s);
}

#[test]
fn srvr_without_traces_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&srf(&["srvr", p(dir.path())])), 2);
    assert_eq!(code(&srf(&["srvr"])), 2);
}
