#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Mutex, MutexGuard};

use rffsei::autodiff::Tensor;
use rffsei::config::{parse, ExperimentConfig};

pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` with respect to every entry of `x`.
pub fn central_differences(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.clone();
            p.data_mut()[i] += FD_STEP;
            let mut m = x.clone();
            m.data_mut()[i] -= FD_STEP;
            (f(&p) - f(&m)) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Largest elementwise `|a - b| / max(|a|, |b|, floor)`. The floor keeps
/// entries that vanish analytically from dividing rounding noise by ~0.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// One unbuffered status line per acceptance criterion, written past the
/// test harness's output capture so it shows in every run.
pub fn report(criterion: usize, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion:>2} [{verdict}] {title}: {detail}\n");
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
}

static SERIAL: Mutex<()> = Mutex::new(());

/// Heavy tests hold this so their wall-clock budgets are not shared.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

pub const DESK_CFG: &str = include_str!("../../../../configs/desk.cfg");

pub fn desk_config() -> ExperimentConfig {
    parse(DESK_CFG, "configs/desk.cfg").unwrap()
}

/// A config small enough for end-to-end CLI runs in a few seconds.
pub const SMOKE_CFG: &str = "\
[fleet]
seed = 5
emitter_count = 3

[schemes]
source = BPSK
target = BFSK

[data]
seed = 6
source_frames_per_pair = 8
target_frames_per_pair = 6
test_frames_per_pair = 6

[model]
block_channels = 4, 8
block_strides = 2, 2
embedding_dim = 8
hidden_width = 8

[train]
seed = 7
pretrain_epochs = 2
epochs = 2
batch_size = 8
lr = 1e-3

[mdd]
grl_beta = 0.1

[matrix]
group.PSK = BPSK
group.FSK = BFSK
targets = BPSK, BFSK
";

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rffsei")).args(args).output().unwrap()
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn cli_ok(args: &[&str]) -> Output {
    let out = cli(args);
    assert!(
        out.status.success(),
        "rffsei {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Every regular file in `dir`, sorted by name, with its bytes.
pub fn dir_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}
