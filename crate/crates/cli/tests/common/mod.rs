#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hkg_cli::RunConfig;
use hkg_core::datagen::{make_dataset, SyntheticSpec};

pub fn hkg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hkg"))
}

pub fn run(args: &[&str], cwd: &Path) -> Output {
    hkg()
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn hkg")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Five short streams per leaf: 3 train, 1 val, 1 test.
pub fn small_spec(seed: u64) -> SyntheticSpec {
    let mut spec = SyntheticSpec {
        seed,
        duration_s: 0.25,
        ..SyntheticSpec::default()
    };
    for c in &mut spec.classes {
        c.streams = 5;
    }
    spec
}

pub fn write_small_dataset(root: &Path, seed: u64) -> PathBuf {
    let data = root.join("data");
    make_dataset(&small_spec(seed), &data).unwrap();
    data
}

/// Three 2048-sample segments per stream, 16x16 spectrograms.
pub fn small_config(data_root: &Path, out_dir: &Path) -> RunConfig {
    RunConfig {
        data_root: data_root.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        epochs: 2,
        segment_window: 2048,
        segment_step: 2048,
        stft_window: 128,
        stft_hop: 64,
        resize: [16, 16],
        ..RunConfig::default()
    }
}

pub fn write_config(path: &Path, cfg: &RunConfig) {
    std::fs::write(path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
}

/// Dataset plus `config.json` in a fresh temp dir.
pub fn small_setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = write_small_dataset(dir.path(), 11);
    let cfg = small_config(&data, &dir.path().join("run"));
    let path = dir.path().join("config.json");
    write_config(&path, &cfg);
    (dir, path)
}

pub fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}
