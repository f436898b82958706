#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

use filtralab::paths::{brownian_path, EnlargementData, TimeGrid};
use filtralab::verify::PathRecord;

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_filtralab"));
    cmd.env_remove("FILTRALAB_SEED");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn corpus_dir(target: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target)
}

/// Brownian paths whose candidate is the path itself: a martingale in the
/// base filtration.
pub fn brownian_records(n: usize, dt: f64, seed: u64) -> Vec<PathRecord> {
    let grid = TimeGrid::from_horizon(1.0, dt).unwrap();
    (0..n)
        .map(|i| {
            let w = brownian_path(grid, seed, i);
            PathRecord { candidate: w.clone(), observed: w, data: EnlargementData::default() }
        })
        .collect()
}
