//! Helpers shared by the CLI integration tests and the acceptance run.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const TINY: &str = r#"
seed = 3
workers = 1

[grid]
nx = 40
ny = 35
dx = 11100.0
dy = 11100.0

[observations]
drifters = [2, 2]
moorings = [6, 4]
insertion_time = 600.0

[truth]
duration = 3000.0
snapshot_interval = 600.0

[experiment]
ensemble_size = 4
spinup_end = 600.0
da_end = 1800.0
forecast_end = 2700.0
trajectory_interval = 300.0
selector = "drifters"
"#;

pub fn driftcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = driftcast(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn assert_same(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) {
    let a_keys: Vec<_> = a.keys().collect();
    let b_keys: Vec<_> = b.keys().collect();
    assert_eq!(a_keys, b_keys);
    let differ: Vec<_> = a.keys().filter(|k| a[*k] != b[*k]).collect();
    assert!(differ.is_empty(), "files differ: {differ:?}");
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every data-producing subcommand, in pipeline order, under `root`.
pub fn pipeline(root: &Path, cfg: &Path, workers: &str) {
    let c = s(cfg);
    let truth = root.join("truth");
    let spin = root.join("spin");
    let ana = root.join("analysis");
    let fc = root.join("forecast");
    let err = root.join("error");
    let col = root.join("collapse");
    let rank = root.join("rank");
    let w = ["--config", c, "--workers", workers];
    ok(&[&["generate-truth", "--out", s(&truth)][..], &w].concat());
    ok(&[&["spinup", "--out", s(&spin)][..], &w].concat());
    let obs = truth.join("observations.csv");
    let tracks = truth.join("truth_drifters.csv");
    ok(&[&["assimilate", "--out", s(&ana), "--checkpoint", s(&spin), "--observations", s(&obs)][..], &w].concat());
    ok(&[&["forecast", "--out", s(&fc), "--checkpoint", s(&ana), "--truth-drifters", s(&tracks)][..], &w].concat());
    let traj = fc.join("trajectories.csv");
    ok(&[&["forecast-error", "--out", s(&err), "--trajectories", s(&traj), "--truth-drifters", s(&tracks)][..], &w].concat());
    ok(&[
        &["collapse", "--out", s(&col), "--checkpoint", s(&ana), "--observations", s(&obs), "--sizes", "0,1,4", "--trials", "3"][..],
        &w,
    ]
    .concat());
    ok(&[
        &["rank-histogram", "--out", s(&rank), "--experiments", "2", "--ensemble-size", "4", "--cycles", "2"][..],
        &w,
    ]
    .concat());
}

pub fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p
}

/// Names of files that are missing on one side or differ in content.
pub fn differing(a: &BTreeMap<PathBuf, Vec<u8>>, b: &BTreeMap<PathBuf, Vec<u8>>) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = a.keys().filter(|k| b.get(*k) != Some(&a[*k])).cloned().collect();
    out.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
    out
}
