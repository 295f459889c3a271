//! Criterion 6: convergence of the finite-n generator.

use anyhow::Result;
use xicoal::coag::{limit_generator, FreqVector, TestFunction};
use xicoal::model::{tilted_weight_sampler, ModelConfig, RateSequence, WeightLaw, DEFAULT_QUAD_NODES};
use xicoal::numerics::quad::QuadControls;
use xicoal::paintbox::{
    empirical_generator, exact_generator_symmetric_singletons, BlockState, EventSampler, GeneratorOptions,
};
use xicoal::rng::{stream, StreamTag};

use super::law_label;
use crate::report::{num, Outcome, Report, Table};
use crate::suite::{Criterion, Ctx, QUICK_FACTOR};

pub const SIZES: [u64; 4] = [50, 100, 200, 400];
pub const ALPHA: f64 = 0.5;
pub const RHO: f64 = 1.0;
/// Length of the explicit rate table.
pub const RATE_TABLE: usize = 1 << 16;
/// Target Monte-Carlo standard error relative to `|A f|`.
pub const RELATIVE_PRECISION: f64 = 1e-3;
/// Pilot candidates per stratum.
pub const PILOT: usize = 100;

/// Rates `R(k) = ρ (k^{1-α} - (k-1)^{1-α}) / (1-α)`, so that `R(k) k^α → ρ`.
pub fn integrated_rates() -> RateSequence {
    RateSequence::integrated_power(RHO, ALPHA, RATE_TABLE)
}

pub fn convergence(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::Generator;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let mut table = Table::new(
        "generator.csv",
        &["law", "lambda", "n", "empirical", "std_err", "candidates", "limit", "limit_quad_error", "gap", "gap_sigma"],
    );
    let laws = [WeightLaw::Constant { c: 1.0 }, WeightLaw::Gamma { shape: 1.0, scale: 1.0 }];
    let precision = if ctx.quick { RELATIVE_PRECISION * (QUICK_FACTOR as f64).sqrt() } else { RELATIVE_PRECISION };
    let mut series = 0u64;
    for law in &laws {
        let mut config = ModelConfig::power(ALPHA, RHO, law.clone(), ctx.seed);
        config.rates = integrated_rates();
        let sampler = EventSampler::new(&config)?;
        let tw = tilted_weight_sampler(law, DEFAULT_QUAD_NODES)?;
        for &lambda in &[0.5, 1.0] {
            let f = TestFunction::psi(lambda);
            let limit = limit_generator(&f, &FreqVector::singletons(1.0), RHO, ALPHA, &tw, QuadControls::default())?;
            let opts = GeneratorOptions {
                pilot: PILOT,
                budget: ctx.reps(4_000_000),
                target_std_err: Some(precision * limit.value.abs()),
                truncation: None,
            };
            let mut gaps = Vec::new();
            for &n in &SIZES {
                let mut rng = stream(ctx.master(c), StreamTag::Generator, series);
                series += 1;
                let est = empirical_generator(&sampler, &BlockState::singletons(n), &f, opts, &mut rng)?;
                let sigma = (est.std_err.powi(2) + limit.quad_error.powi(2)).sqrt();
                let gap = est.mean - limit.value;
                gaps.push((gap, sigma));
                table.row([
                    law_label(law),
                    num(lambda),
                    n.to_string(),
                    num(est.mean),
                    num(est.std_err),
                    est.samples.to_string(),
                    num(limit.value),
                    num(limit.quad_error),
                    num(gap),
                    num(gap / sigma),
                ]);
            }
            let label = format!("{}_lambda_{lambda}", law_label(law));
            // Non-increasing |gap| up to two combined σ between consecutive
            // sizes, and a significant decrease from the first to the last.
            let steps_ok = gaps.windows(2).all(|w| {
                w[1].0.abs() <= w[0].0.abs() + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt()
            });
            let (first, last) = (gaps[0], gaps[gaps.len() - 1]);
            let drop = first.0.abs() - last.0.abs();
            let drop_sigma = drop / (first.1.powi(2) + last.1.powi(2)).sqrt();
            report.check(
                format!("{label}_gap_decreases"),
                steps_ok && drop_sigma > 2.0,
                &[
                    ("gap_n50", first.0),
                    ("gap_n400", last.0),
                    ("decrease_in_sigma", drop_sigma),
                ],
            );
            report.check(
                format!("{label}_final_within_3_sigma"),
                last.0.abs() <= 3.0 * last.1,
                &[
                    ("limit", limit.value),
                    ("gap", last.0),
                    ("combined_sigma", last.1),
                    ("gap_in_sigma", last.0 / last.1),
                ],
            );
            if matches!(law, WeightLaw::Constant { .. }) {
                // Exact finite-n values for constant weights, under both rate choices.
                for (rates, tag) in [(integrated_rates(), "integrated_power"), (RateSequence::PurePower { rho: RHO, alpha: ALPHA }, "pure_power")] {
                    let exact: Vec<f64> = SIZES
                        .iter()
                        .map(|&n| exact_generator_symmetric_singletons(&rates, n, lambda) - limit.value)
                        .collect();
                    let values: Vec<(&str, f64)> = SIZES
                        .iter()
                        .zip(&exact)
                        .map(|(n, g)| (match n { 50 => "exact_gap_n50", 100 => "exact_gap_n100", 200 => "exact_gap_n200", _ => "exact_gap_n400" }, *g))
                        .collect();
                    let decreasing = exact.windows(2).all(|w| w[1].abs() < w[0].abs());
                    report.diagnostic(format!("{label}_exact_{tag}"), decreasing, &values);
                }
            }
        }
    }
    report.note("rates R(k) = rho (k^(1-alpha) - (k-1)^(1-alpha)) / (1-alpha), starting state n singletons");
    report.note(format!(
        "Monte-Carlo standard error targeted at {precision:e} of |A f| via Neyman allocation after a pilot of {PILOT} candidates per stratum"
    ));
    report.note("pure power rates R(k) = rho k^-alpha leave an O(n^-1/2) gap, shown by the exact diagnostics");
    Ok(Outcome::with_tables(report, vec![table]))
}
