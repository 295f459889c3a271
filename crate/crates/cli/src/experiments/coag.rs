//! Criteria 1 to 4: the coagulation operator.

use anyhow::Result;
use rand::Rng;
use xicoal::coag::{apply_coag, coag_psi_closed, maclaurin_bound, rho_derivative, FreqVector, DEFAULT_ELL};
use xicoal::model::{tilted_weight_sampler, TiltedWeight, WeightLaw, DEFAULT_QUAD_NODES};
use xicoal::rng::{stream, SimRng, StreamTag};

use super::{law_label, law_menu};
use crate::report::{num, Outcome, Report, Table};
use crate::suite::{Criterion, Ctx};

const TUPLES: usize = 50;

/// A random argument of `C^x`.
struct Tuple {
    law: usize,
    z: FreqVector,
    x: f64,
    lambda: f64,
    gamma: f64,
}

/// Random `z` with unit mass `Σ i z(i) = 1` and support in `1..=6`.
fn random_z(rng: &mut SimRng) -> FreqVector {
    let len = rng.random_range(1..=6usize);
    let raw: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    let z = FreqVector::new(raw).expect("non-negative");
    let m = z.mass();
    z.scale(1.0 / m)
}

fn log_uniform(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()
}

/// The same 50 tuples for criteria 1 to 3.
fn tuples(ctx: &Ctx, menu: usize) -> Vec<Tuple> {
    let mut rng = stream(ctx.seed, StreamTag::Custom(0xc0a6), 0);
    (0..TUPLES)
        .map(|_| Tuple {
            law: rng.random_range(0..menu),
            z: random_z(&mut rng),
            x: log_uniform(&mut rng, 0.2, 10.0),
            lambda: rng.random::<f64>(),
            gamma: log_uniform(&mut rng, 0.2, 5.0),
        })
        .collect()
}

fn rules(laws: &[WeightLaw]) -> Result<Vec<TiltedWeight>> {
    Ok(laws
        .iter()
        .map(|l| tilted_weight_sampler(l, DEFAULT_QUAD_NODES))
        .collect::<xicoal::Result<_>>()?)
}

pub fn identity(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::CoagIdentity;
    let laws = law_menu();
    let tws = rules(&laws)?;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let mut table = Table::new("coag-identity.csv", &["tuple", "law", "x", "lambda", "series", "closed", "residual", "tail_bound", "passed"]);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_residual = 0.0f64;
    let mut fails = 0;
    for (i, t) in tuples(ctx, laws.len()).iter().enumerate() {
        let tw = &tws[t.law];
        let tab = apply_coag(&t.z, t.x, DEFAULT_ELL, tw)?;
        let series: f64 = tab.values.iter().enumerate().map(|(j, v)| t.lambda.powi(j as i32 + 1) * v).sum();
        let closed = coag_psi_closed(&t.z, t.x, t.lambda, tw);
        let residual = (series - closed).abs();
        let ok = residual <= 1e-8 + tab.tail_bound;
        fails += usize::from(!ok);
        worst_excess = worst_excess.max(residual - 1e-8 - tab.tail_bound);
        worst_residual = worst_residual.max(residual);
        table.row([
            i.to_string(),
            law_label(&laws[t.law]),
            num(t.x),
            num(t.lambda),
            num(series),
            num(closed),
            num(residual),
            num(tab.tail_bound),
            ok.to_string(),
        ]);
    }
    report.check(
        "series_matches_closed_form",
        fails == 0,
        &[
            ("tuples", TUPLES as f64),
            ("failures", fails as f64),
            ("max_residual", worst_residual),
            ("max_excess_over_tolerance", worst_excess),
        ],
    );
    report.note("tolerance per tuple: 1e-8 plus a bound on the l-weighted mass beyond l = 30");
    Ok(Outcome::with_tables(report, vec![table]))
}

pub fn mass(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::MassConservation;
    let laws = law_menu();
    let tws = rules(&laws)?;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let mut table = Table::new("mass-conservation.csv", &["tuple", "law", "x", "mass", "deficit", "tail_bound", "passed"]);
    let mut fails = 0;
    let mut worst = 0.0f64;
    let mut max_tail = 0.0f64;
    for (i, t) in tuples(ctx, laws.len()).iter().enumerate() {
        let tab = apply_coag(&t.z, t.x, DEFAULT_ELL, &tws[t.law])?;
        let mass: f64 = tab.values.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum();
        let deficit = (mass - 1.0).abs();
        let ok = deficit <= 1e-8 + tab.tail_bound;
        fails += usize::from(!ok);
        worst = worst.max(deficit);
        max_tail = max_tail.max(tab.tail_bound);
        table.row([
            i.to_string(),
            law_label(&laws[t.law]),
            num(t.x),
            num(mass),
            num(deficit),
            num(tab.tail_bound),
            ok.to_string(),
        ]);
    }
    report.check(
        "mass_within_tail",
        fails == 0,
        &[
            ("tuples", TUPLES as f64),
            ("failures", fails as f64),
            ("max_deficit", worst),
            ("max_tail_bound", max_tail),
        ],
    );
    report.note("tail bound from moments of the compound Poisson sum, independent of mass conservation");
    Ok(Outcome::with_tables(report, vec![table]))
}

pub fn scaling(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::Scaling;
    let laws = law_menu();
    let tws = rules(&laws)?;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let mut table = Table::new("scaling.csv", &["tuple", "law", "x", "gamma", "max_abs_diff", "passed"]);
    let mut fails = 0;
    let mut worst = 0.0f64;
    for (i, t) in tuples(ctx, laws.len()).iter().enumerate() {
        let tw = &tws[t.law];
        let lhs = apply_coag(&t.z, t.x, DEFAULT_ELL, tw)?;
        let rhs = apply_coag(&t.z.scale(t.gamma), t.gamma * t.x, DEFAULT_ELL, tw)?;
        let diff = lhs
            .values
            .iter()
            .zip(&rhs.values)
            .map(|(a, b)| (t.gamma * a - b).abs() / (t.gamma * a).abs().max(1.0))
            .fold(0.0, f64::max);
        let ok = diff <= 1e-10;
        fails += usize::from(!ok);
        worst = worst.max(diff);
        table.row([i.to_string(), law_label(&laws[t.law]), num(t.x), num(t.gamma), num(diff), ok.to_string()]);
    }
    report.check(
        "homogeneity",
        fails == 0,
        &[("tuples", TUPLES as f64), ("failures", fails as f64), ("max_difference", worst)],
    );
    Ok(Outcome::with_tables(report, vec![table]))
}

/// `(1/ℓ!) ρ^{(ℓ)}(λ)` with `ℓ = 0` meaning `ρ` itself.
fn scaled_derivative(z: &FreqVector, x: f64, ell: usize, lambda: f64, tw: &TiltedWeight) -> Result<f64> {
    Ok(if ell == 0 {
        coag_psi_closed(z, x, lambda, tw)
    } else {
        rho_derivative(z, x, ell, lambda, tw)?
    })
}

pub fn faa_di_bruno(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::FaaDiBruno;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let laws = [
        WeightLaw::Constant { c: 1.0 },
        WeightLaw::Gamma { shape: 1.0, scale: 1.0 },
        WeightLaw::Gamma { shape: 2.0, scale: 1.0 },
        WeightLaw::LogNormal { mu: 0.0, sigma: 0.5 },
    ];
    let tws = rules(&laws)?;
    let mut rng = stream(ctx.master(c), StreamTag::Custom(4), 0);
    let mut zs = vec![FreqVector::singletons(1.0)];
    zs.extend((0..3).map(|_| random_z(&mut rng)));
    let xs = [0.3, 1.0, 3.0];

    // Chained central differences: (1/ℓ!)ρ^{(ℓ)} = (1/ℓ) d/dλ (1/(ℓ-1)!)ρ^{(ℓ-1)}.
    let h = 1e-3;
    let mut fd_table = Table::new("faa-di-bruno-fd.csv", &["law", "z", "x", "lambda", "ell", "formula", "finite_difference", "rel_error"]);
    let mut worst_fd = 0.0f64;
    for (li, tw) in tws.iter().enumerate() {
        for (zi, z) in zs.iter().enumerate() {
            for &x in &xs {
                for &lambda in &[0.0, 0.1, 0.2] {
                    for ell in 1..=8 {
                        let f = |l: f64| scaled_derivative(z, x, ell - 1, l, tw);
                        let d = (-f(lambda + 2.0 * h)? + 8.0 * f(lambda + h)? - 8.0 * f(lambda - h)? + f(lambda - 2.0 * h)?)
                            / (12.0 * h * ell as f64);
                        let formula = rho_derivative(z, x, ell, lambda, tw)?;
                        let rel = (formula - d).abs() / formula.abs().max(1e-300);
                        worst_fd = worst_fd.max(rel);
                        fd_table.row([
                            law_label(&laws[li]),
                            zi.to_string(),
                            num(x),
                            num(lambda),
                            ell.to_string(),
                            num(formula),
                            num(d),
                            num(rel),
                        ]);
                    }
                }
            }
        }
    }
    report.check(
        "derivative_matches_finite_differences",
        worst_fd <= 1e-5,
        &[("max_relative_error", worst_fd), ("tolerance", 1e-5), ("step", h), ("cases", fd_table.rows.len() as f64)],
    );

    let delta = 0.2;
    let mut bound_table = Table::new("faa-di-bruno-bound.csv", &["law", "z", "x", "lambda", "ell", "derivative", "bound", "passed"]);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for (li, tw) in tws.iter().enumerate() {
        for (zi, z) in zs.iter().enumerate() {
            for &x in &[0.1, 0.3, 1.0, 3.0, 10.0] {
                for j in 0..=10 {
                    let lambda = delta * j as f64 / 10.0;
                    for ell in 1..=15 {
                        let d = rho_derivative(z, x, ell, lambda, tw)?.abs();
                        let b = maclaurin_bound(x, ell, delta);
                        let ok = d < b;
                        violations += usize::from(!ok);
                        worst_ratio = worst_ratio.max(d / b);
                        bound_table.row([
                            law_label(&laws[li]),
                            zi.to_string(),
                            num(x),
                            num(lambda),
                            ell.to_string(),
                            num(d),
                            num(b),
                            ok.to_string(),
                        ]);
                    }
                }
            }
        }
    }
    report.check(
        "maclaurin_bound_holds",
        violations == 0,
        &[
            ("cases", bound_table.rows.len() as f64),
            ("violations", violations as f64),
            ("max_ratio", worst_ratio),
            ("delta", delta),
        ],
    );
    Ok(Outcome::with_tables(report, vec![fd_table, bound_table]))
}
