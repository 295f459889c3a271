//! The acceptance criteria and their runner.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;
use xicoal::rng::{derive_seed, StreamTag};

use crate::experiments;
use crate::report::{Outcome, SCHEMA_VERSION};

/// Divisor applied to replicate counts under `--quick`.
pub const QUICK_FACTOR: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    CoagIdentity,
    MassConservation,
    Scaling,
    FaaDiBruno,
    UrnBounds,
    Generator,
    BlockCount,
    Subordinator,
    Map,
    Sfs,
    WeightMoments,
    Reproducibility,
}

impl Criterion {
    pub const ALL: [Criterion; 12] = [
        Criterion::CoagIdentity,
        Criterion::MassConservation,
        Criterion::Scaling,
        Criterion::FaaDiBruno,
        Criterion::UrnBounds,
        Criterion::Generator,
        Criterion::BlockCount,
        Criterion::Subordinator,
        Criterion::Map,
        Criterion::Sfs,
        Criterion::WeightMoments,
        Criterion::Reproducibility,
    ];

    pub fn number(self) -> u32 {
        Self::ALL.iter().position(|&c| c == self).expect("listed") as u32 + 1
    }

    pub fn id(self) -> &'static str {
        match self {
            Criterion::CoagIdentity => "coag-identity",
            Criterion::MassConservation => "mass-conservation",
            Criterion::Scaling => "scaling",
            Criterion::FaaDiBruno => "faa-di-bruno",
            Criterion::UrnBounds => "urn-bounds",
            Criterion::Generator => "generator",
            Criterion::BlockCount => "block-count",
            Criterion::Subordinator => "subordinator",
            Criterion::Map => "map",
            Criterion::Sfs => "sfs",
            Criterion::WeightMoments => "weight-moments",
            Criterion::Reproducibility => "reproducibility",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Criterion::CoagIdentity => "generating function of C^x(z) matches its closed form",
            Criterion::MassConservation => "C^x(z) conserves mass",
            Criterion::Scaling => "gamma C^x(z) = C^{gamma x}(gamma z)",
            Criterion::FaaDiBruno => "derivative formula and Maclaurin bound",
            Criterion::UrnBounds => "Poisson approximation bounds dominate exact TV",
            Criterion::Generator => "finite-n generator converges to the limit generator",
            Criterion::BlockCount => "finite-n block count matches the limit process",
            Criterion::Subordinator => "subordinator Laplace transform",
            Criterion::Map => "Markov additive property and self-similarity",
            Criterion::Sfs => "site frequency spectrum limit",
            Criterion::WeightMoments => "moments and law of k p_1",
            Criterion::Reproducibility => "quick suite is byte-for-byte reproducible",
        }
    }

    /// Wall-clock budget in seconds.
    pub fn budget_secs(self) -> u64 {
        match self {
            Criterion::CoagIdentity | Criterion::MassConservation | Criterion::Scaling | Criterion::FaaDiBruno => 60,
            Criterion::UrnBounds | Criterion::Subordinator | Criterion::WeightMoments => 300,
            Criterion::Generator | Criterion::Map | Criterion::Reproducibility => 600,
            Criterion::BlockCount => 1200,
            Criterion::Sfs => 1800,
        }
    }
}

/// Settings shared by all experiments.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub seed: u64,
    pub quick: bool,
    /// Path of the `xicoal` executable, used by the reproducibility check.
    pub exe: Option<PathBuf>,
}

impl Ctx {
    pub fn new(seed: u64, quick: bool) -> Self {
        Self { seed, quick, exe: None }
    }

    /// Replicate count, divided by [`QUICK_FACTOR`] in quick mode.
    pub fn reps(&self, full: usize) -> usize {
        if self.quick {
            (full / QUICK_FACTOR).max(1)
        } else {
            full
        }
    }

    /// Master seed of one criterion.
    pub fn master(&self, c: Criterion) -> u64 {
        derive_seed(self.seed, StreamTag::Custom(c.number() as u64), 0)
    }
}

pub fn run(c: Criterion, ctx: &Ctx) -> Result<Outcome> {
    match c {
        Criterion::CoagIdentity => experiments::coag::identity(ctx),
        Criterion::MassConservation => experiments::coag::mass(ctx),
        Criterion::Scaling => experiments::coag::scaling(ctx),
        Criterion::FaaDiBruno => experiments::coag::faa_di_bruno(ctx),
        Criterion::UrnBounds => experiments::urn::bounds(ctx),
        Criterion::Generator => experiments::generator::convergence(ctx),
        Criterion::BlockCount => experiments::blocks::block_count(ctx),
        Criterion::Subordinator => experiments::flow::subordinator(ctx),
        Criterion::Map => experiments::flow::map_battery(ctx),
        Criterion::Sfs => experiments::sfs::limit(ctx),
        Criterion::WeightMoments => experiments::weights::moments(ctx),
        Criterion::Reproducibility => experiments::repro::reproducibility(ctx),
    }
}

#[derive(Debug, Serialize)]
struct SummaryLine {
    criterion: u32,
    id: &'static str,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct Summary {
    schema_version: u32,
    seed: u64,
    quick: bool,
    criteria: Vec<SummaryLine>,
}

#[derive(Debug, Serialize)]
struct Metadata {
    generated_unix_secs: u64,
    version: &'static str,
    runtimes_secs: Vec<(u32, f64)>,
}

/// Runs `criteria`, writes their reports and a summary into `out`, and the
/// non-reproducible timing data into `out/metadata.json`.
pub fn run_many(criteria: &[Criterion], ctx: &Ctx, out: &Path, mut progress: impl FnMut(&Outcome, f64)) -> Result<Vec<Outcome>> {
    fs::create_dir_all(out)?;
    let mut outcomes = Vec::new();
    let mut runtimes = Vec::new();
    for &c in criteria {
        let start = Instant::now();
        let o = run(c, ctx)?;
        let secs = start.elapsed().as_secs_f64();
        o.write(out)?;
        progress(&o, secs);
        runtimes.push((c.number(), secs));
        outcomes.push(o);
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        seed: ctx.seed,
        quick: ctx.quick,
        criteria: criteria
            .iter()
            .zip(&outcomes)
            .map(|(c, o)| SummaryLine {
                criterion: c.number(),
                id: c.id(),
                passed: o.report.passed,
            })
            .collect(),
    };
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    let meta = Metadata {
        generated_unix_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        version: env!("CARGO_PKG_VERSION"),
        runtimes_secs: runtimes,
    };
    fs::write(out.join(METADATA_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(outcomes)
}

/// Sidecar file holding timestamps and timings.
pub const METADATA_FILE: &str = "metadata.json";

/// One-line verdict as printed by the acceptance suite.
pub fn verdict_line(o: &Outcome, secs: f64) -> String {
    let r = &o.report;
    let mut line = format!(
        "{} criterion {:>2} {:<18} {:>8.1}s",
        if r.passed { "PASS" } else { "FAIL" },
        r.criterion,
        r.id,
        secs
    );
    let failed = r.failures();
    if !failed.is_empty() {
        line.push_str(&format!("  failed: {}", failed.join(", ")));
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_are_numbered_in_order_with_distinct_ids() {
        for (i, c) in Criterion::ALL.iter().enumerate() {
            assert_eq!(c.number() as usize, i + 1);
            assert_eq!(Criterion::from_str(c.id(), true).unwrap(), *c);
        }
        let mut ids: Vec<_> = Criterion::ALL.iter().map(|c| c.id()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 12);
    }

    #[test]
    fn quick_mode_scales_replicates() {
        assert_eq!(Ctx::new(0, false).reps(1000), 1000);
        assert_eq!(Ctx::new(0, true).reps(1000), 1000 / QUICK_FACTOR);
        assert_eq!(Ctx::new(0, true).reps(3), 1);
    }

    #[test]
    fn criterion_seeds_differ() {
        let ctx = Ctx::new(42, true);
        assert_ne!(ctx.master(Criterion::Map), ctx.master(Criterion::Sfs));
        assert_eq!(ctx.master(Criterion::Map), Ctx::new(42, false).master(Criterion::Map));
    }
}
