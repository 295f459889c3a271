//! Criterion 5: Poisson approximation bounds against exact total variation.

use anyhow::Result;
use rand::Rng;
use rayon::prelude::*;
use xicoal::model::WeightLaw;
use xicoal::rng::{replicates, stream, StreamTag};
use xicoal::urnstats::{
    block_loss_check, bound_multisize, bound_multisize_marginal, bound_multisize_two_urns, bound_single_urn,
    bound_two_urns, exact_tv, exact_tv_multisize, exact_tv_multisize_two_urns, exact_tv_multisize_two_urns_direct,
    exact_tv_product, exact_tv_single_urn, exact_tv_two_urns, Pmf, Tv,
};

use crate::report::{num, Outcome, Report, Table};
use crate::suite::{Criterion, Ctx};

/// Floating-point slack when comparing a bound with an exact distance.
const SLACK: f64 = 1e-14;

const P_GRID: [f64; 10] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5];

struct Cell {
    family: &'static str,
    params: String,
    bound: f64,
    tv: Tv,
}

impl Cell {
    fn holds(&self) -> bool {
        self.tv.upper() <= self.bound + SLACK
    }
}

/// Non-decreasing count vectors of length `len` with entries in `1..=max`.
fn count_vectors(len: usize, max: u64) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|v: Vec<u64>| {
                let start = v.last().copied().unwrap_or(1);
                (start..=max).map(move |c| {
                    let mut w = v.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
    }
    out
}

fn y_values(k: u64, p1: f64) -> Vec<f64> {
    let base = k as f64 * p1;
    [base, base + 0.1, base - 0.1].into_iter().filter(|&y| y >= 0.0).collect()
}

fn single_urn_cells() -> Vec<Cell> {
    let mut args = Vec::new();
    for n in 2..=12u64 {
        for k in 1..=6u64 {
            for &p1 in &P_GRID {
                for y in y_values(k, p1) {
                    args.push((n, k, p1, y));
                }
            }
        }
    }
    args.into_par_iter()
        .map(|(n, k, p1, y)| Cell {
            family: "single_urn",
            params: format!("n={n} k={k} p1={p1} y={y}"),
            bound: bound_single_urn(n, p1, k, y),
            tv: exact_tv_single_urn(n, p1, k, y),
        })
        .collect()
}

fn two_urn_cells() -> Vec<Cell> {
    let ps = [0.0, 0.05, 0.1, 0.2, 0.3, 0.5];
    let mut args = Vec::new();
    for n in 1..=12u64 {
        for &p1 in &ps {
            for &p2 in &ps {
                if p1 + p2 <= 1.0 {
                    args.push((n, p1, p2));
                }
            }
        }
    }
    args.into_par_iter()
        .map(|(n, p1, p2)| Cell {
            family: "two_urns",
            params: format!("n={n} p1={p1} p2={p2}"),
            bound: bound_two_urns(n, p1, p2),
            tv: exact_tv_two_urns(n, p1, p2),
        })
        .collect()
}

/// Exact distance of product laws against the sum of marginal distances.
fn tensorization_cells(ctx: &Ctx) -> Result<Vec<Cell>> {
    let mut rng = stream(ctx.master(Criterion::UrnBounds), StreamTag::Urn, 0);
    let mut cells = Vec::new();
    for _ in 0..200 {
        let m = rng.random_range(1..=3usize);
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut desc = Vec::new();
        for _ in 0..m {
            let n = rng.random_range(0..=8u64);
            let p = rng.random::<f64>();
            let mean = rng.random::<f64>() * 6.0;
            a.push(Pmf::binomial(n, p));
            b.push(Pmf::poisson(mean));
            desc.push(format!("Bin({n},{p:.4})|Po({mean:.4})"));
        }
        let bound: f64 = a.iter().zip(&b).map(|(x, y)| exact_tv(x, y).upper()).sum();
        cells.push(Cell {
            family: "tensorization",
            params: desc.join(" "),
            bound,
            tv: exact_tv_product(&a, &b)?,
        });
    }
    Ok(cells)
}

fn multisize_cells() -> Result<Vec<Cell>> {
    let mut args = Vec::new();
    for len in 1..=3 {
        for counts in count_vectors(len, 6) {
            for &p1 in &[0.05, 0.1, 0.2, 0.35, 0.5] {
                for k in 1..=6u64 {
                    for y in y_values(k, p1) {
                        args.push((counts.clone(), p1, k, y));
                    }
                }
            }
        }
    }
    args.into_par_iter()
        .map(|(counts, p1, k, y)| {
            Ok(Cell {
                family: "multisize",
                params: format!("N={counts:?} p1={p1} k={k} y1={y}"),
                bound: bound_multisize(&counts, p1, k, y),
                tv: exact_tv_multisize(&counts, p1, k, y)?,
            })
        })
        .collect()
}

fn multisize_two_urn_cells() -> Result<Vec<Cell>> {
    let ps = [0.05, 0.1, 0.2, 0.3, 0.45];
    let mut args = Vec::new();
    for len in 1..=3 {
        for counts in count_vectors(len, 6) {
            for &p1 in &ps {
                for &p2 in &ps {
                    args.push((counts.clone(), p1, p2));
                }
            }
        }
    }
    let mut cells: Vec<Cell> = args
        .par_iter()
        .map(|(counts, p1, p2)| {
            Ok(Cell {
                family: "multisize_two_urns",
                params: format!("N={counts:?} p1={p1} p2={p2}"),
                bound: bound_multisize_two_urns(counts, *p1, *p2),
                tv: exact_tv_multisize_two_urns(counts, *p1, *p2)?,
            })
        })
        .collect::<Result<_>>()?;
    let marginal: Vec<Cell> = args
        .par_iter()
        .filter(|(_, _, p2)| *p2 == ps[0])
        .map(|(counts, p1, _)| {
            Ok(Cell {
                family: "multisize_marginal",
                params: format!("N={counts:?} pj={p1}"),
                bound: bound_multisize_marginal(counts, *p1),
                tv: exact_tv_multisize(counts, *p1, 1, *p1)?,
            })
        })
        .collect::<Result<_>>()?;
    cells.extend(marginal);
    Ok(cells)
}

pub fn bounds(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::UrnBounds;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let mut table = Table::new("urn-bounds.csv", &["family", "parameters", "bound", "exact_tv", "tv_uncertainty", "margin", "holds"]);
    let families = [
        single_urn_cells(),
        two_urn_cells(),
        tensorization_cells(ctx)?,
        multisize_cells()?,
        multisize_two_urn_cells()?,
    ];
    for cells in &families {
        let mut by_family: std::collections::BTreeMap<&str, (usize, usize, f64)> = Default::default();
        for cell in cells {
            let e = by_family.entry(cell.family).or_insert((0, 0, f64::INFINITY));
            e.0 += 1;
            e.1 += usize::from(!cell.holds());
            e.2 = e.2.min(cell.bound - cell.tv.upper());
            table.row([
                cell.family.to_string(),
                cell.params.clone(),
                num(cell.bound),
                num(cell.tv.value),
                num(cell.tv.uncertainty),
                num(cell.bound - cell.tv.upper()),
                cell.holds().to_string(),
            ]);
        }
        for (fam, (count, bad, margin)) in by_family {
            report.check(
                format!("{fam}_bound_dominates"),
                bad == 0,
                &[("cells", count as f64), ("violations", bad as f64), ("min_margin", margin)],
            );
        }
    }

    // The two-urn reduction agrees with direct enumeration.
    let mut worst = 0.0f64;
    for counts in count_vectors(2, 3) {
        for &(p1, p2) in &[(0.1, 0.2), (0.3, 0.3), (0.05, 0.45)] {
            let a = exact_tv_multisize_two_urns(&counts, p1, p2)?;
            let b = exact_tv_multisize_two_urns_direct(&counts, p1, p2)?;
            worst = worst.max((a.value - b.value).abs() - a.uncertainty - b.uncertainty);
        }
    }
    report.check("two_urn_reduction_matches_enumeration", worst <= 1e-12, &[("max_excess_difference", worst)]);

    // Block loss: 1000 random configurations of up to 50 balls and 20 boxes.
    let configs = 1000;
    let throws = ctx.reps(10_000) / 10;
    let reports = replicates(ctx.master(c), StreamTag::Urn, configs, |_, rng| {
        let balls = rng.random_range(1..=50usize);
        let k = rng.random_range(1..=20u64);
        let sizes: Vec<u64> = (0..balls).map(|_| rng.random_range(1..=4u64)).collect();
        let p = WeightLaw::Gamma { shape: 1.0, scale: 1.0 }
            .sample_mass_partition(k, rng)
            .expect("k >= 1");
        block_loss_check(&sizes, &p, throws, rng)
    });
    let pathwise_bad = reports.iter().filter(|r| !r.pathwise_holds()).count();
    let mean_bad = reports.iter().filter(|r| !r.mean_within_bound()).count();
    let worst_excess = reports.iter().map(|r| r.worst_pathwise_excess).fold(f64::NEG_INFINITY, f64::max);
    report.check(
        "block_loss_pathwise",
        pathwise_bad == 0,
        &[
            ("throws", (configs * throws) as f64),
            ("configurations", configs as f64),
            ("violations", pathwise_bad as f64),
            ("max_excess", worst_excess),
        ],
    );
    report.check(
        "block_loss_mean",
        mean_bad == 0,
        &[("configurations", configs as f64), ("violations", mean_bad as f64)],
    );
    Ok(Outcome::with_tables(report, vec![table]))
}
