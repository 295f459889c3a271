//! Criterion 7: the finite-n block count against the limit process.

use anyhow::Result;
use xicoal::limitflow::{lamperti_reconstruct, simulate_flow_from, Compensation, FlowModel, FlowOptions};
use xicoal::model::{ModelConfig, WeightLaw};
use xicoal::numerics::stats::Moments;
use xicoal::paintbox::{simulate, EventSampler, Stop};
use xicoal::rng::{replicates, StreamTag};

use super::{combined_se, generator::integrated_rates};
use crate::report::{num, Outcome, Report, Table};
use crate::suite::{Criterion, Ctx};

pub const TIMES: [f64; 3] = [0.5, 1.0, 2.0];
const N: u64 = 2000;

pub fn block_count(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::BlockCount;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let mut config = ModelConfig::power(0.5, 1.0, WeightLaw::Constant { c: 1.0 }, ctx.seed);
    config.rates = integrated_rates();
    let reps = ctx.reps(10_000);
    let master = ctx.master(c);
    let horizon = TIMES[TIMES.len() - 1];

    let sampler = EventSampler::new(&config)?;
    let finite = replicates(master, StreamTag::Paintbox, reps, |_, rng| {
        let t = simulate(&sampler, N, Stop::Horizon(horizon), rng).expect("valid configuration");
        let scale = t.time_scale();
        TIMES.map(|s| {
            let i = t.events.partition_point(|e| e.time * scale <= s);
            let blocks = if i == 0 { N } else { t.events[i - 1].state.block_count() };
            blocks as f64 / N as f64
        })
    });

    let model = FlowModel::new(&config)?;
    let opts = FlowOptions::default();
    let comp = Compensation::new(&model, opts);
    // The time change never runs faster than real time, so flow time `horizon` suffices.
    let limit = replicates(master, StreamTag::Flow, reps, |_, rng| {
        let path = simulate_flow_from(&model, &[], 0.0, horizon, comp, rng).expect("valid flow");
        let mu = lamperti_reconstruct(&path, config.alpha);
        TIMES.map(|t| mu.at(t).expect("covered").radial)
    });

    let mut table = Table::new("block-count.csv", &["t", "finite_mean", "finite_se", "limit_mean", "limit_se", "bias_bound", "difference", "tolerance"]);
    for (j, &t) in TIMES.iter().enumerate() {
        let a: Moments = finite.iter().map(|v| v[j]).collect();
        let b: Moments = limit.iter().map(|v| v[j]).collect();
        // |E e^{-ξ_u} - E e^{-ξ̃_u}| ≤ u |φ(1) - φ̃(1)| and τ_t ≤ t.
        let bias = t * comp.xi_defect;
        let tol = 3.0 * combined_se(&a, &b) + bias;
        let diff = a.mean - b.mean;
        table.row([num(t), num(a.mean), num(a.std_err()), num(b.mean), num(b.std_err()), num(bias), num(diff), num(tol)]);
        report.check(
            format!("t_{t}"),
            diff.abs() <= tol,
            &[
                ("finite_mean", a.mean),
                ("limit_mean", b.mean),
                ("difference", diff),
                ("combined_sigma", combined_se(&a, &b)),
                ("bias_bound", bias),
                ("difference_in_sigma", diff / combined_se(&a, &b)),
                ("replicates", reps as f64),
                ("n", N as f64),
            ],
        );
    }
    report.note(format!(
        "flow truncation a_max = {}, compensating drift {:.6e}, atom rate {:.1}",
        comp.a_max, comp.xi_drift, comp.atom_rate
    ));
    report.note("rates R(k) = rho (k^(1-alpha) - (k-1)^(1-alpha)) / (1-alpha), constant weights, alpha = 1/2, rho = 1");
    Ok(Outcome::with_tables(report, vec![table]))
}
