//! Shared driver for the golden-file pipeline on the bundled demo scene.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_evego")
}

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn evego(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn step(threads: usize, args: &[&str]) {
    let t = threads.to_string();
    let mut full = vec!["--threads", &t, "--seed", "3"];
    full.extend_from_slice(args);
    let out = evego(&full);
    assert!(
        out.status.success(),
        "evego {full:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Artifacts of simulate, lnes, mask, filter, forward and evaluate, in
/// the order they are produced. Paths are relative to `dir`.
pub const ARTIFACTS: &[&str] = &[
    "events.txt",
    "lnes/lnes_0000.pgm",
    "lnes/lnes_0001.pgm",
    "lnes/lnes_0002.pgm",
    "lnes/lnes_0003.pgm",
    "mask.pgm",
    "filtered.evcl",
    "hand.obj",
    "joints.json",
    "report.json",
    "pck.csv",
];

pub fn run_pipeline(dir: &Path, threads: usize) {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let d = |name: &str| data(name).to_str().unwrap().to_string();
    let events = p("events.txt");
    step(threads, &["simulate", "--frames", &d("demo/frames"), "--out", &events]);
    step(threads, &["lnes", "--events", &events, "--out-dir", &p("lnes")]);
    step(threads, &["mask", "--events", &events, "--min-area", "10", "--out", &p("mask.pgm")]);
    step(
        threads,
        &["filter", "--events", &events, "--mask", &p("mask.pgm"), "--budget", "256", "--out", &p("filtered.evcl")],
    );
    step(
        threads,
        &["forward", "--params", &d("params.json"), "--obj", &p("hand.obj"), "--joints", &p("joints.json")],
    );
    step(
        threads,
        &["evaluate", "--pred", &d("pred.json"), "--gt", &d("gt.json"), "--report", &p("report.json"), "--pck", &p("pck.csv")],
    );
}

/// Names of artifacts whose bytes differ from the checked-in goldens.
/// With `EVEGO_UPDATE_GOLDEN` set the goldens are rewritten first.
pub fn compare_with_golden(dir: &Path) -> Vec<String> {
    let golden = golden_dir();
    if std::env::var_os("EVEGO_UPDATE_GOLDEN").is_some_and(|v| !v.is_empty()) {
        for name in ARTIFACTS {
            let dst = golden.join(name);
            std::fs::create_dir_all(dst.parent().unwrap()).unwrap();
            std::fs::copy(dir.join(name), dst).unwrap();
        }
    }
    ARTIFACTS
        .iter()
        .filter(|name| {
            let got = std::fs::read(dir.join(name)).ok();
            let want = std::fs::read(golden.join(name)).ok();
            got.is_none() || got != want
        })
        .map(|s| s.to_string())
        .collect()
}
