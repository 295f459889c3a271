//! Criterion 11: the law and moments of `k p₁` for large `k`.

use anyhow::Result;
use xicoal::model::{normalisation_gap_mc, scaled_moments_mc, tilted_weight_sampler, WeightLaw, DEFAULT_QUAD_NODES};
use xicoal::numerics::stats::ks_two_sample;
use xicoal::rng::{replicates, stream, StreamTag};
use xicoal::urnstats::cov_decay_check;

use super::law_label;
use crate::report::{num, Outcome, Report, Table};
use crate::suite::{Criterion, Ctx};

const KS_K: u64 = 2048;
const MOMENT_K: u64 = 1 << 14;
const GAP_GRID: [u64; 5] = [1 << 6, 1 << 8, 1 << 10, 1 << 12, 1 << 14];

/// Exact `E w² / (E w)²`.
fn second_moment_ratio(law: &WeightLaw) -> f64 {
    match law {
        WeightLaw::Constant { .. } => 1.0,
        WeightLaw::Gamma { shape, .. } => (shape + 1.0) / shape,
        WeightLaw::LogNormal { sigma, .. } => (sigma * sigma).exp(),
        WeightLaw::FiniteDiscrete { values, probs } => {
            let m1: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
            let m2: f64 = values.iter().zip(probs).map(|(v, p)| v * v * p).sum();
            m2 / (m1 * m1)
        }
    }
}

pub fn moments(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::WeightMoments;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let master = ctx.master(c);
    let laws = [
        WeightLaw::Constant { c: 1.0 },
        WeightLaw::Gamma { shape: 1.0, scale: 1.0 },
        WeightLaw::Gamma { shape: 2.0, scale: 1.0 },
        WeightLaw::LogNormal { mu: 0.0, sigma: 0.5 },
    ];
    let ks_samples = ctx.reps(100_000);
    let moment_samples = ctx.reps(20_000);
    let mut table = Table::new("weight-moments.csv", &["law", "quantity", "k", "estimate", "std_err", "reference"]);
    for (li, law) in laws.iter().enumerate() {
        let label = law_label(law);
        let tw = tilted_weight_sampler(law, DEFAULT_QUAD_NODES)?;
        let tag = StreamTag::Custom(li as u64);

        let scaled = replicates(master, tag, ks_samples, |_, rng| law.sample_scaled_components(KS_K, 1, rng)[0]);
        let gammas = replicates(master ^ 1, tag, ks_samples, |_, rng| tw.sample(rng));
        let ks = ks_two_sample(&scaled, &gammas);
        table.row([label.clone(), "ks_statistic".into(), KS_K.to_string(), num(ks.statistic), String::new(), num(ks.p_value)]);
        report.check(
            format!("{label}_ks_k_p1_vs_gamma"),
            ks.p_value > 0.01,
            &[("statistic", ks.statistic), ("p_value", ks.p_value), ("samples_each", ks_samples as f64), ("k", KS_K as f64)],
        );

        let mut rng = stream(master, tag, 1 << 40);
        let m = scaled_moments_mc(law, MOMENT_K, moment_samples, &mut rng);
        let target = second_moment_ratio(law);
        let ok = (m.second - target).abs() <= 3.0 * m.second_err || (m.second_err == 0.0 && (m.second - target).abs() < 1e-12);
        table.row([label.clone(), "second_moment".into(), MOMENT_K.to_string(), num(m.second), num(m.second_err), num(target)]);
        report.check(
            format!("{label}_second_moment"),
            ok,
            &[("estimate", m.second), ("std_err", m.second_err), ("limit", target), ("samples", moment_samples as f64)],
        );

        let gaps: Vec<(f64, f64)> = GAP_GRID
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let mut rng = stream(master, tag, (1 << 41) + j as u64);
                normalisation_gap_mc(law, k, moment_samples, &mut rng)
            })
            .collect();
        for (&k, g) in GAP_GRID.iter().zip(&gaps) {
            table.row([label.clone(), "normalisation_gap".into(), k.to_string(), num(g.0), num(g.1), String::new()]);
        }
        let last = gaps[gaps.len() - 1];
        let decreasing = gaps[..gaps.len() - 1].windows(2).all(|w| w[1].0 <= w[0].0);
        report.check(
            format!("{label}_normalisation_gap"),
            last.0 < 0.01 && decreasing,
            &[
                ("gap_k64", gaps[0].0),
                ("gap_k4096", gaps[3].0),
                ("gap_k16384", last.0),
                ("std_err_k16384", last.1),
            ],
        );
    }

    // Covariance decay of bounded functions of two coordinates.
    let law = WeightLaw::Gamma { shape: 1.0, scale: 1.0 };
    let grid: Vec<u64> = (2..=7).map(|j| 1u64 << (2 * j)).collect();
    let mut rng = stream(master, StreamTag::Custom(99), 0);
    let pts = cov_decay_check(&law, &[1.0, 1.0], &[(1, 1)], &[(1, 1)], &grid, ctx.reps(100_000), &mut rng);
    for p in &pts {
        table.row([law_label(&law), "covariance".into(), p.k.to_string(), num(p.covariance), num(p.std_err), String::new()]);
    }
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    let bounded = pts.iter().all(|p| p.max_abs_g <= 1.0);
    report.check(
        "gamma_covariance_decays",
        last.covariance.abs() < 3.0 * last.std_err && last.covariance.abs() < first.covariance.abs() && bounded,
        &[
            ("cov_k16", first.covariance),
            ("cov_k16384", last.covariance),
            ("std_err_k16384", last.std_err),
            ("max_abs_g", pts.iter().map(|p| p.max_abs_g).fold(0.0, f64::max)),
        ],
    );
    Ok(Outcome::with_tables(report, vec![table]))
}
