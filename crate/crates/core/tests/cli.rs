mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use routecap::checkpoint::load_checkpoint;
use routecap::interpret::{parse_csv, LocalContribution};

use common::bin;

fn routecap(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("ROUTECAP_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = routecap(args, &[]);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str]) -> i32 {
    routecap(args, &[]).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a small dataset and trains a small model on it.
fn fixture(dir: &Path) -> (String, String) {
    let data = dir.join("d.jsonl");
    let ck = dir.join("m.ckpt");
    ok(&["gen-data", "--plant", "unimodal:t", "--n", "60", "--seed", "1", "--out", s(&data)]);
    ok(&["train", "--data", s(&data), "--epochs", "2", "--d-f", "4", "--d-c", "4", "--ckpt-out", s(&ck)]);
    (s(&data).to_string(), s(&ck).to_string())
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = fixture(dir.path());
    let out = dir.path().join("x.jsonl");

    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["gen-data", "--plant", "trimodal"]), 1, "missing --out");
    assert_eq!(code(&["gen-data", "--plant", "trimodal", "--sigma", "-1", "--out", s(&out)]), 1);
    assert_eq!(code(&["gen-data", "--plant", "tetramodal", "--out", s(&out)]), 1);
    assert_eq!(code(&["train", "--data", &data, "--mode", "routing-star", "--iters", "5", "--ckpt-out", s(&out)]), 1);
    assert_eq!(code(&["train", "--data", &data, "--iters", "0", "--ckpt-out", s(&out)]), 1);
    assert_eq!(code(&["eval", "--ckpt", &ck, "--data", &data, "--frobnicate"]), 1);
    assert_eq!(code(&["interpret-global", "--ckpt", &ck, "--data", &data, "--level", "1.5"]), 1);

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json\n").unwrap();
    fs::copy(dir.path().join("d.manifest.json"), dir.path().join("bad.manifest.json")).unwrap();
    assert_eq!(code(&["eval", "--ckpt", &ck, "--data", s(&bad)]), 2);
    assert_eq!(code(&["eval", "--ckpt", s(&bad), "--data", &data]), 2, "not a checkpoint");
    assert_eq!(code(&["eval", "--ckpt", &ck, "--data", s(&dir.path().join("missing.jsonl"))]), 2);

    let unknown = routecap(&["interpret-local", "--ckpt", &ck, "--data", &data, "--ids", "s000001,nope,zilch"], &[]);
    assert_eq!(unknown.status.code(), Some(2));
    let err = String::from_utf8_lossy(&unknown.stderr);
    assert!(err.contains("nope") && err.contains("zilch") && !err.contains("s000001"), "{err}");
}

#[test]
fn train_reports_resolved_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = fixture(dir.path());
    let ck = dir.path().join("n.ckpt");
    let out = ok(&["train", "--data", &data, "--epochs", "0", "--d-f", "2", "--d-c", "2", "--ckpt-out", s(&ck)]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("mode=routing ") && err.contains("iters=2"), "{err}");
    let out = ok(&["train", "--data", &data, "--epochs", "0", "--mode", "routing-star", "--ckpt-out", s(&ck)]);
    assert!(String::from_utf8(out.stderr).unwrap().contains("iters=1"));
    assert_eq!(load_checkpoint(&ck).unwrap().config.iterations, 1);
}

#[test]
fn gen_data_is_deterministic_and_honours_the_seed_variable() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    ok(&["gen-data", "--plant", "bimodal:ta", "--n", "100", "--seed", "5", "--out", s(&p("a.jsonl"))]);
    ok(&["gen-data", "--plant", "bimodal:ta", "--n", "100", "--seed", "5", "--out", s(&p("b.jsonl"))]);
    let a = fs::read_to_string(p("a.jsonl")).unwrap();
    assert_eq!(a.lines().count(), 100);
    assert_eq!(a, fs::read_to_string(p("b.jsonl")).unwrap());
    assert!(p("a.manifest.json").exists());

    let env = routecap(&["gen-data", "--plant", "bimodal:ta", "--n", "100", "--out", s(&p("c.jsonl"))], &[("ROUTECAP_SEED", "5")]);
    assert!(env.status.success());
    assert_eq!(a, fs::read_to_string(p("c.jsonl")).unwrap());
    ok(&["gen-data", "--plant", "bimodal:ta", "--n", "100", "--seed", "6", "--out", s(&p("d.jsonl"))]);
    assert_ne!(a, fs::read_to_string(p("d.jsonl")).unwrap());
}

#[test]
fn end_to_end_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = fixture(dir.path());
    let log = dir.path().join("log.csv");
    let ck2 = dir.path().join("m2.ckpt");
    ok(&["train", "--data", &data, "--epochs", "2", "--d-f", "4", "--d-c", "4", "--ckpt-out", s(&ck2), "--log", s(&log)]);
    let log = fs::read_to_string(log).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,loss,train_acc"));
    assert_eq!(log.lines().count(), 3);
    assert_eq!(fs::read(&ck).unwrap(), fs::read(&ck2).unwrap());

    let loaded = load_checkpoint(&ck).unwrap();
    assert_eq!(loaded.epoch, 2);
    let eval: serde_json::Value = serde_json::from_slice(&ok(&["eval", "--ckpt", &ck, "--data", &data]).stdout).unwrap();
    assert_eq!(eval["n"], 60);
    assert!(eval["metrics"]["acc"].as_f64().is_some_and(|a| (0.0..=1.0).contains(&a)), "{eval}");
}

#[test]
fn interpret_local_verifies_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = fixture(dir.path());
    let args = ["interpret-local", "--ckpt", &ck, "--data", &data, "--ids", "s000003,s000000", "--verify"];
    let first = ok(&args);
    assert!(String::from_utf8_lossy(&first.stderr).contains("verified"));
    assert_eq!(first.stdout, ok(&args).stdout);
    let recs: Vec<LocalContribution> =
        String::from_utf8(first.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["s000003", "s000000"]);
    assert!(recs.iter().all(|r| r.decomposition_gap() < 1e-6 && r.truth.is_some()));

    let out = dir.path().join("all.jsonl");
    ok(&["interpret-local", "--ckpt", &ck, "--data", &data, "--out", s(&out)]);
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 60);
}

#[test]
fn interpret_global_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ck) = fixture(dir.path());
    let csv = |extra: &[&str]| {
        let mut args = vec!["interpret-global", "--ckpt", &ck, "--data", &data];
        args.extend(extra);
        parse_csv(&String::from_utf8(ok(&args).stdout).unwrap()).unwrap()
    };
    let p = csv(&["--quantity", "p"]);
    assert_eq!(p.len(), 7);
    assert!(p.iter().all(|r| r.label == "all" && !r.significant));
    assert_eq!(csv(&["--quantity", "r"]).len(), 14);
    assert_eq!(csv(&["--quantity", "pr", "--group-by", "true-label"]).len(), 14);

    let text = String::from_utf8(ok(&["interpret-global", "--ckpt", &ck, "--data", &data, "--format", "text"]).stdout).unwrap();
    assert!(text.starts_with("quantity=r"));
    assert_eq!(text.lines().count(), 9);
    let out = dir.path().join("g.csv");
    ok(&["interpret-global", "--ckpt", &ck, "--data", &data, "--out", s(&out)]);
    assert!(fs::read_to_string(out).unwrap().starts_with("feature,label,mean,lo,hi,significant"));
}
