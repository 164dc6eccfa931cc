#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tickscope_core::model::Schema;
use tickscope_core::synth::{mixed_tickets, to_csv};

pub fn fixture_csv(n: usize, seed: u64) -> String {
    to_csv(&mixed_tickets(n, seed), &Schema::default_tickets())
}

pub fn write_fixture(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let path = dir.join("tickets.csv");
    std::fs::write(&path, fixture_csv(n, seed)).unwrap();
    path
}

/// Runs the built binary against `data_dir` with no settings file or
/// environment overrides in effect.
pub fn tickscope(data_dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tickscope"));
    cmd.arg("--data-dir").arg(data_dir).args(args).current_dir(data_dir);
    for var in ["TICKSCOPE_BIND", "TICKSCOPE_DATA_DIR", "TICKSCOPE_SYNC_LIMIT", "TICKSCOPE_THRESHOLDS"] {
        cmd.env_remove(var);
    }
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
