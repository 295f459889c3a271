//! Criterion 12: byte-for-byte reproducibility of the quick suite.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context, Result};

use crate::report::{Outcome, Report};
use crate::suite::{run_many, Criterion, Ctx, METADATA_FILE};

pub const REPRO_SEED: u64 = 42;

/// Set on the child processes so their `verify all` skips this criterion.
pub const NESTED_ENV: &str = "XICOAL_NESTED_VERIFY";

/// Contents of every report file in `dir` except the timing sidecar.
pub fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if name != METADATA_FILE && path.is_file() {
            out.insert(name, fs::read(&path)?);
        }
    }
    Ok(out)
}

/// The criteria run by `verify all`, excluding this one.
fn suite() -> Vec<Criterion> {
    Criterion::ALL.iter().copied().filter(|&c| c != Criterion::Reproducibility).collect()
}

fn run_once(ctx: &Ctx, dir: &Path) -> Result<()> {
    match &ctx.exe {
        Some(exe) => {
            let status = Command::new(exe)
                .args(["verify", "all", "--quick", "--seed", &REPRO_SEED.to_string(), "--out"])
                .arg(dir)
                .env(NESTED_ENV, "1")
                .stdout(std::process::Stdio::null())
                .status()
                .with_context(|| format!("running {}", exe.display()))?;
            // A failing criterion exits non-zero; the reports are still written.
            if status.code().is_none() {
                bail!("verify was terminated by a signal");
            }
        }
        None => {
            let quick = Ctx::new(REPRO_SEED, true);
            run_many(&suite(), &quick, dir, |_, _| {})?;
        }
    }
    Ok(())
}

pub fn reproducibility(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::Reproducibility;
    let mut report = Report::new(c.number(), c.id(), c.title(), REPRO_SEED, true);
    let base = std::env::temp_dir().join(format!("xicoal-repro-{}", std::process::id()));
    let dirs: Vec<PathBuf> = (0..2).map(|i| base.join(format!("run{i}"))).collect();
    for d in &dirs {
        if d.exists() {
            fs::remove_dir_all(d)?;
        }
        run_once(ctx, d)?;
    }
    let a = snapshot(&dirs[0])?;
    let b = snapshot(&dirs[1])?;
    let differing: Vec<&String> = a.keys().chain(b.keys()).filter(|k| a.get(*k) != b.get(*k)).collect();
    let expected_reports = suite().len();
    let reports = a.keys().filter(|k| k.starts_with("criterion-")).count();
    report.check(
        "identical_report_files",
        differing.is_empty() && reports == expected_reports,
        &[
            ("files", a.len() as f64),
            ("reports", reports as f64),
            ("differing_files", differing.len() as f64),
        ],
    );
    for d in differing {
        report.note(format!("differs: {d}"));
    }
    report.note(format!("compared all files except {METADATA_FILE}"));
    fs::remove_dir_all(&base).ok();
    Ok(Outcome::new(report))
}
