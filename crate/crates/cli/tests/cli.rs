use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn iqprint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iqprint"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["synth", "--tx", "10", "--msgs", "100", "--osr", "4", "--seed", "5", "--out", s(&out)];
    args.extend_from_slice(extra);
    json(&iqprint(&args));
    out
}

fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let data = synth(dir, "data.siq", &[]);
    let model = dir.join("m.ckpt");
    let v = json(&iqprint(&["train", "--data", s(&data), "--epochs", "2", "--lr", "0.01", "--out", s(&model)]));
    assert_eq!(v["command"], "train");
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    (data, model)
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&iqprint(&["--help"])), 0);
    assert_eq!(code(&iqprint(&["--version"])), 0);
    assert_eq!(code(&iqprint(&["frobnicate"])), 1);
    assert_eq!(code(&iqprint(&["synth"])), 1);
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.siq", &[]);
    let b = synth(dir.path(), "b.siq", &[]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let d = dir.path().join("d.siq");
    let v = json(&iqprint(&["synth", "--tx", "8", "--msgs", "20", "--osr", "40", "--seed", "1", "--out", s(&d)]));
    assert_eq!(v["command"], "synth");
    assert_eq!(v["reports"][0]["records"], 160);
    assert_eq!(v["config"]["generator"]["oversampling"], 40);
    assert_eq!(iqprint::datapipe::read_records(&d).unwrap().len(), 160);
}

#[test]
fn train_eval_attack_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (data, model) = trained(d);
    let again = d.join("again.ckpt");
    json(&iqprint(&["train", "--data", s(&data), "--epochs", "2", "--lr", "0.01", "--out", s(&again)]));
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());

    let out_dir = d.join("eval");
    std::fs::create_dir(&out_dir).unwrap();
    let v = json(&iqprint(&[
        "eval", "--model", s(&model), "--data", s(&data), "--scenario", "closed", "--anchors", "1,4", "--out-dir",
        s(&out_dir),
    ]));
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[1]["anchors"], 4);
    assert!(out_dir.join("closed-4.json").is_file());
    let csv = std::fs::read_to_string(out_dir.join("closed-1-roc.csv")).unwrap();
    assert!(csv.starts_with("threshold,fpr,tpr,fnr\n"));

    let v = json(&iqprint(&["eval", "--model", s(&model), "--data", s(&data), "--scenario", "replay", "--anchors", "1,32"]));
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r["scenario"] == "replay"));

    let later = synth(d, "later.siq", &["--start-day", "60", "--first-message-id", "1000"]);
    let v = json(&iqprint(&[
        "eval", "--model", s(&model), "--data", s(&data), "--later", s(&later), "--scenario", "timegap", "--anchors", "4",
    ]));
    assert_eq!(v["reports"][0]["scenario"], "timegap-stale");
    assert_eq!(v["reports"][1]["scenario"], "timegap-fresh");

    let replayed = d.join("replayed.siq");
    json(&iqprint(&["attack", "--input", s(&data), "--out", s(&replayed), "--severity", "1.0"]));
    let anchors = synth(d, "anchors.siq", &["--msgs", "8", "--first-message-id", "500"]);

    let strict = iqprint(&[
        "verify", "--model", s(&model), "--anchors", s(&anchors), "--input", s(&replayed), "--threshold", "0",
        "--strict",
    ]);
    assert_eq!(code(&strict), 4);
    let v: Value = serde_json::from_slice(&strict.stdout).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 1000);
    assert_eq!(v["reports"][0]["accept"], false);

    let lenient = json(&iqprint(&[
        "verify", "--model", s(&model), "--anchors", s(&anchors), "--input", s(&replayed), "--threshold", "2",
        "--strict",
    ]));
    assert!(lenient["reports"].as_array().unwrap().iter().all(|r| r["accept"] == true));
}

#[test]
fn exit_codes_by_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (data, model) = trained(d);

    let eval = |m: &Path, data: &Path, scenario: &str| {
        code(&iqprint(&["eval", "--model", s(m), "--data", s(data), "--scenario", scenario, "--anchors", "4"]))
    };
    assert_eq!(eval(&model, &data, "timegap"), 1);
    assert_eq!(eval(&model, &data, "open"), 1);
    assert_eq!(eval(&model, &d.join("missing.siq"), "closed"), 2);

    let junk = d.join("junk.siq");
    std::fs::write(&junk, b"not a dataset").unwrap();
    assert_eq!(eval(&model, &junk, "closed"), 2);

    let mut bytes = std::fs::read(&model).unwrap();
    bytes.truncate(bytes.len() - 3);
    let broken = d.join("broken.ckpt");
    std::fs::write(&broken, bytes).unwrap();
    assert_eq!(eval(&broken, &data, "closed"), 3);
    assert_eq!(eval(&d.join("missing.ckpt"), &data, "closed"), 3);

    let out = d.join("x.ckpt");
    assert_eq!(code(&iqprint(&["train", "--data", s(&data), "--lr", "-1", "--out", s(&out)])), 1);
    assert_eq!(code(&iqprint(&["train", "--data", s(&data), "--epochs", "2", "--lr", "1e30", "--out", s(&out)])), 3);
    assert!(!out.exists());
}
