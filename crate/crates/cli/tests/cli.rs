use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "scenario,policy,run,step,mean_expected_clicks,ci_low,ci_high,samples";

fn slatelab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slatelab")).args(args).current_dir(dir).output().unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = slatelab(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = slatelab(&[], dir.path());
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    for cmd in ["simulate", "ingest", "train", "eval", "experiment", "report"] {
        assert!(text.contains(cmd), "usage lacks {cmd}");
    }
}

#[test]
fn bad_input_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = slatelab(&["simulate", "--n", "0"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error:") && err.trim_end().lines().count() == 1, "{err}");
    assert!(!slatelab(&["experiment", "huge"], dir.path()).status.success());
    assert!(!slatelab(&["simulate", "--n", "ten"], dir.path()).status.success());
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "11", "simulate", "--n", "25", "--k", "4", "--count", "50"];
    let a = ok(&args, dir.path());
    assert_eq!(a, ok(&args, dir.path()));
    assert_eq!(a.lines().count(), 51);
    assert_ne!(a, ok(&["--seed", "12", "simulate", "--n", "25", "--k", "4", "--count", "50"], dir.path()));
}

#[test]
fn flags_override_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# defaults\nseed = 4\nn = 15\nk = 2\ncount = 3\n").unwrap();
    let from_config = ok(&["--config", "run.cfg", "simulate"], dir.path());
    assert!(from_config.starts_with("slatelab-dataset v1 n=15 k=2 seed=4"));
    assert_eq!(from_config.lines().count(), 4);
    let overridden = ok(&["--config", "run.cfg", "simulate", "--k", "3"], dir.path());
    assert!(overridden.starts_with("slatelab-dataset v1 n=15 k=3 seed=4"));
}

#[test]
fn train_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["--out", "data.txt", "simulate", "--n", "20", "--k", "3", "--count", "400"], d);
    ok(&["--out", "rm.ckpt", "train", "response-model", "--data", "data.txt", "--steps", "30", "--embeddings-out", "emb.txt"], d);
    assert!(std::fs::read_to_string(d.join("emb.txt")).unwrap().starts_with("20 8\n"));
    for policy in ["list-cvae", "greedy-mlp", "ar-lstm"] {
        ok(&["--out", "p.ckpt", "train", policy, "--data", "data.txt", "--response-model", "rm.ckpt", "--steps", "20"], d);
        let csv = ok(&["eval", "--policy", policy, "--model", "p.ckpt", "--response-model", "rm.ckpt", "--samples", "50"], d);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(HEADER));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&row[..4], &["eval", policy, "0", "20"]);
    }
    let csv = ok(&["eval", "--policy", "random", "--data", "data.txt", "--response-model", "rm.ckpt", "--samples", "50"], d);
    assert!(csv.lines().nth(1).unwrap().starts_with("eval,random,0,0,"));
    assert!(!slatelab(&["eval", "--policy", "greedy-mlp", "--response-model", "rm.ckpt"], d).status.success());
}

#[test]
fn experiment_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "--seed", "2", "--out", "exp.csv", "experiment", "small", "--runs", "2", "--steps", "60", "--n", "20", "--k", "3",
        "--train-size", "500", "--oracle-size", "500", "--oracle-steps", "50", "--eval-samples", "40",
        "--policies", "list-cvae,greedy-mlp,random",
    ];
    ok(&args, d);
    let csv = std::fs::read_to_string(d.join("exp.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(HEADER));
    for policy in ["list-cvae", "greedy-mlp", "random"] {
        assert!(csv.lines().any(|l| l.starts_with(&format!("small,{policy},1,60,"))), "{policy} missing");
        assert!(csv.lines().any(|l| l.starts_with(&format!("small,{policy},all,60,"))), "{policy} aggregate missing");
    }
    let agg = ok(&["report", "--input", "exp.csv"], d);
    assert_eq!(agg.lines().next(), Some(HEADER));
    assert!(agg.lines().skip(1).all(|l| l.split(',').nth(2) == Some("all")));
    let expected: Vec<&str> = csv.lines().filter(|l| l.split(',').nth(2) == Some("all")).collect();
    let mut got: Vec<&str> = agg.lines().skip(1).collect();
    let mut want = expected.clone();
    got.sort();
    want.sort();
    assert_eq!(got, want);
}
