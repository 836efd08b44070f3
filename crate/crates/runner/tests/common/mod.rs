#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gdt_envs::data::{GOLDEN_FULL_SCRIPTS, GOLDEN_PREFIX_SCRIPTS, GOLDEN_TASKS};
use gdt_runner::Aggregate;
use tempfile::TempDir;

/// A scratch directory holding the golden tasks and their scripts.
pub struct Workspace {
    pub dir: TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tasks.json"), GOLDEN_TASKS).unwrap();
        fs::write(dir.path().join("full.json"), GOLDEN_FULL_SCRIPTS).unwrap();
        fs::write(dir.path().join("prefix.json"), GOLDEN_PREFIX_SCRIPTS).unwrap();
        fs::write(dir.path().join("empty.json"), "{}").unwrap();
        Workspace { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    pub fn write(&self, name: &str, text: &str) -> String {
        fs::write(self.path(name), text).unwrap();
        self.arg(name)
    }
}

pub fn gdt(args: &[&str], stdin: Option<&str>) -> Output {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_gdt"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut pipe = child.stdin.take().unwrap();
        pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    }
    child.wait_with_output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => close(a, b),
        (None, None) => true,
        _ => false,
    }
}

/// Aggregates equal up to float round-off.
pub fn aggregates_match(a: &Aggregate, b: &Aggregate) -> bool {
    a.episodes == b.episodes
        && a.ee_undefined == b.ee_undefined
        && a.ce_undefined == b.ce_undefined
        && close(a.sr_pct, b.sr_pct)
        && close(a.cr_pct, b.cr_pct)
        && close_opt(a.ee_pct, b.ee_pct)
        && close_opt(a.ce_pct, b.ce_pct)
        && close_opt(a.pooled_cr_pct, b.pooled_cr_pct)
        && close_opt(a.pooled_ee_pct, b.pooled_ee_pct)
        && close_opt(a.pooled_ce_pct, b.pooled_ce_pct)
        && a.termination_pct.len() == b.termination_pct.len()
        && a.termination_pct.iter().all(|(k, v)| b.termination_pct.get(k).is_some_and(|w| close(*v, *w)))
}

pub fn termination_sum(a: &Aggregate) -> f64 {
    a.termination_pct.values().sum()
}
