//! Full acceptance suite. Runs when `XICOAL_ACCEPTANCE=1`; build with
//! `--release`, the full sizes are slow in debug builds.
//!
//! Optional: `XICOAL_ACCEPTANCE_SEED` (default 0), `XICOAL_ACCEPTANCE_ONLY`
//! (comma-separated criterion ids), `XICOAL_ACCEPTANCE_OUT` (report dir).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::ValueEnum;
use xicoal_cli::suite::{run_many, Criterion, Ctx};

fn selected() -> Vec<Criterion> {
    match std::env::var("XICOAL_ACCEPTANCE_ONLY") {
        Ok(list) => list
            .split(',')
            .map(|s| Criterion::from_str(s.trim(), true).unwrap_or_else(|e| panic!("unknown criterion {s}: {e}")))
            .collect(),
        Err(_) => Criterion::ALL.to_vec(),
    }
}

fn main() -> ExitCode {
    if std::env::var("XICOAL_ACCEPTANCE").as_deref() != Ok("1") {
        println!("acceptance suite skipped; set XICOAL_ACCEPTANCE=1 to run it");
        return ExitCode::SUCCESS;
    }
    let seed = std::env::var("XICOAL_ACCEPTANCE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = std::env::var_os("XICOAL_ACCEPTANCE_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance"));
    let mut ctx = Ctx::new(seed, false);
    ctx.exe = Some(PathBuf::from(env!("CARGO_BIN_EXE_xicoal")));

    let criteria = selected();
    let mut lines = Vec::new();
    let result = run_many(&criteria, &ctx, &out, |o, secs| {
        let r = &o.report;
        let budget = criteria.iter().find(|c| c.number() == r.criterion).map_or(u64::MAX, |c| c.budget_secs());
        let in_budget = secs <= budget as f64;
        let passed = r.passed && in_budget;
        let verdict = if passed { "PASS" } else { "FAIL" };
        let line = format!("{verdict} criterion {:>2} {:<18} {secs:>8.1}s (budget {budget}s)", r.criterion, r.id);
        println!("{line}");
        for f in r.failures() {
            println!("       failed check: {f}");
        }
        if !in_budget {
            println!("       over the runtime budget");
        }
        lines.push((passed, line));
    });
    if let Err(e) = result {
        println!("FAIL suite aborted: {e:#}");
        return ExitCode::FAILURE;
    }
    let failed = lines.iter().filter(|(p, _)| !p).count();
    println!("\nsummary ({} criteria, reports in {}):", lines.len(), out.display());
    for (_, l) in &lines {
        println!("  {l}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
