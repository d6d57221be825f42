#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use threadsumm_core::run::{summarize, SummarizeOptions, SummarizeOutcome};

pub const RUN_ID: &str = "cash_thread";
pub const RUN_FILES: &[&str] = &[
    "manifest.json",
    "summary.txt",
    "trace.json",
    "reports/report.json",
    "baseline_vanilla.txt",
];

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_threadsumm"));
    cmd.env_remove("THREADSUMM_CONFIG");
    cmd
}

pub fn run_bin(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

/// Scripted cash-thread run into `out/cash_thread`, or a replay of `replay`.
pub fn cash_thread(out: &Path, replay: Option<&Path>) -> SummarizeOutcome {
    let opts = match replay {
        Some(manifest) => SummarizeOptions {
            input: fixture("cash_thread.json"),
            out: out.to_path_buf(),
            replay: Some(manifest.to_path_buf()),
            ..SummarizeOptions::default()
        },
        None => SummarizeOptions {
            input: fixture("cash_thread.json"),
            out: out.to_path_buf(),
            config: Some(fixture("cash_thread_config.json")),
            baseline_vanilla: true,
            run_id: Some(RUN_ID.into()),
            no_cache: true,
            ..SummarizeOptions::default()
        },
    };
    summarize(&opts).expect("scripted run succeeds")
}

pub fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}
