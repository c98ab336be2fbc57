use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lmax"));
    c.env_remove("LMAX_WORKERS");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("lmax-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&p);
    std::fs::create_dir_all(&p).unwrap();
    p
}

fn run(c: &mut Command) -> (i32, Output) {
    let o = c.output().unwrap();
    (o.status.code().unwrap_or(-1), o)
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn distance_from_a_preset_writes_manifest_and_outputs() {
    let dir = scratch("distance");
    let cfg = dir.join("domain.json");
    std::fs::write(&cfg, r#"{"preset": "punctured-square", "cells": 16, "dimension": 2}"#).unwrap();
    let out = dir.join("out");
    let (code, o) = run(bin().args(["distance", "--config"]).arg(&cfg).arg("--out").arg(&out));
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["verb"], "distance");
    assert!(m["config_hash"].as_str().unwrap().len() == 64);
    assert!(out.join("distance.bin").exists());
    assert!(out.join("distance.json").exists());
}

#[test]
fn unit_weights_pass_and_overrides_apply() {
    let out = scratch("unit").join("out");
    let (code, o) = run(bin()
        .args(["verify", "--experiment", "theorem2", "--config"])
        .arg(configs().join("punctured-square-unit.json"))
        .arg("--out")
        .arg(&out)
        .args(["--set", "domain.h=0.125", "--set", "seed=9"]));
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("report.json"));
    assert_eq!(r["reports"][0]["seed"], 9);
    assert_eq!(r["status"], "pass");
}

#[test]
fn non_doubling_weight_exits_with_hypothesis_code() {
    let out = scratch("spike").join("out");
    let (code, o) = run(bin()
        .args(["verify", "--experiment", "theorem2", "--config"])
        .arg(configs().join("checkerboard-spike.json"))
        .arg("--out")
        .arg(&out)
        .args(["--set", "domain.h=0.0625"]));
    assert_eq!(code, 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out.join("report.json"))["status"], "hypothesis-not-met");
}

#[test]
fn usage_errors_exit_64() {
    let dir = scratch("usage");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(bin().args(["distance", "--config"]).arg(&bad).arg("--out").arg(dir.join("a"))).0, 64);
    assert_eq!(run(bin().arg("frobnicate")).0, 64);
    let cfg = configs().join("punctured-square-unit.json");
    assert_eq!(
        run(bin().args(["weights", "--config"]).arg(&cfg).arg("--out").arg(dir.join("b")).args(["--set", "p=0.5"])).0,
        64
    );
    assert_eq!(
        run(bin().args(["weights", "--config"]).arg(&cfg).arg("--out").arg(dir.join("c")).args(["--set", "nokey"])).0,
        64
    );
}

#[test]
fn io_errors_exit_74() {
    let dir = scratch("io");
    let missing = dir.join("missing.json");
    assert_eq!(run(bin().args(["distance", "--config"]).arg(&missing).arg("--out").arg(dir.join("a"))).0, 74);
    let file = dir.join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let cfg = configs().join("punctured-square-unit.json");
    assert_eq!(run(bin().args(["distance", "--config"]).arg(&cfg).arg("--out").arg(file.join("sub"))).0, 74);
}

#[test]
fn worker_variable_is_validated_and_does_not_change_results() {
    let dir = scratch("workers");
    let cfg = configs().join("punctured-square-power.json");
    let mut c = bin();
    c.env("LMAX_WORKERS", "lots").args(["weights", "--config"]).arg(&cfg).arg("--out").arg(dir.join("x"));
    assert_eq!(run(&mut c).0, 64);
    let mut reports = Vec::new();
    for (k, w) in ["1", "3"].iter().enumerate() {
        let out = dir.join(format!("w{k}"));
        let mut c = bin();
        c.env("LMAX_WORKERS", w)
            .args(["verify", "--experiment", "theorem2", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--set", "domain.h=0.125"]);
        let (code, o) = run(&mut c);
        assert_eq!(code, 0, "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
