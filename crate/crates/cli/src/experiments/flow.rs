//! Criteria 8 and 9: the subordinator and the Markov additive structure.

use anyhow::Result;
use xicoal::limitflow::{map_tests, simulate_flow_from, Compensation, FlowModel, FlowOptions, MapDesign};
use xicoal::model::{ModelConfig, WeightLaw};
use xicoal::numerics::quad::QuadControls;
use xicoal::numerics::stats::Moments;
use xicoal::rng::{derive_seed, replicates, StreamTag};

use crate::report::{num, Outcome, Report, Table};
use crate::suite::{Criterion, Ctx};

fn symmetric_model(seed: u64) -> Result<(ModelConfig, FlowModel)> {
    let config = ModelConfig::power(0.5, 1.0, WeightLaw::Constant { c: 1.0 }, seed);
    let model = FlowModel::new(&config)?;
    Ok((config, model))
}

pub fn subordinator(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::Subordinator;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let (config, model) = symmetric_model(ctx.seed)?;
    let comp = Compensation::new(&model, FlowOptions::default());
    let horizon = 1.0;
    let reps = ctx.reps(10_000);
    let paths = replicates(ctx.master(c), StreamTag::Flow, reps, |_, rng| {
        let p = simulate_flow_from(&model, &[], 0.0, horizon, comp, rng).expect("valid flow");
        (p.xi_at(horizon).expect("covered"), p.jumps() as f64)
    });
    let mut qs = vec![0.5, 1.0, 1.5, 2.0 - config.alpha];
    qs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut table = Table::new("subordinator.csv", &["q", "empirical", "std_err", "exact", "phi", "phi_quad_error", "bias_bound"]);
    for &q in &qs {
        let m: Moments = paths.iter().map(|(xi, _)| (-q * xi).exp()).collect();
        let phi = model.laplace_exponent(q, QuadControls::default());
        let exact = (-horizon * phi.value).exp();
        let bias = horizon * q * q * comp.xi_defect * exact + horizon * phi.error * exact;
        let diff = m.mean - exact;
        table.row([num(q), num(m.mean), num(m.std_err()), num(exact), num(phi.value), num(phi.error), num(bias)]);
        report.check(
            format!("q_{q}"),
            diff.abs() <= 3.0 * m.std_err() + bias,
            &[
                ("empirical", m.mean),
                ("exact", exact),
                ("std_err", m.std_err()),
                ("difference_in_sigma", diff / m.std_err()),
                ("bias_bound", bias),
                ("paths", reps as f64),
            ],
        );
    }
    let atoms: Moments = paths.iter().map(|(_, j)| *j).collect();
    let expected = comp.atom_rate * horizon;
    report.diagnostic(
        "atom_count_mean",
        (atoms.mean - expected).abs() <= 3.0 * atoms.std_err(),
        &[("empirical", atoms.mean), ("expected", expected), ("std_err", atoms.std_err())],
    );
    if qs.len() < 4 {
        report.note("with alpha = 1/2 the exponent 2 - alpha coincides with q = 1.5");
    }
    report.note(format!("a_max = {}, horizon T = {horizon}", comp.a_max));
    Ok(Outcome::with_tables(report, vec![table]))
}

pub const BATCHES: usize = 40;
pub const PATHS_PER_BATCH: usize = 1000;

pub fn map_battery(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::Map;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let (config, model) = symmetric_model(ctx.seed)?;
    let comp = Compensation::new(&model, FlowOptions::default());
    let design = MapDesign::default();
    let horizon = (design.s2 + design.t).max(design.s1 + design.t);
    let batches = ctx.reps(BATCHES);
    let master = ctx.master(c);
    let mut table = Table::new(
        "map.csv",
        &["batch", "stationarity_stat", "stationarity_p", "correlation_stat", "correlation_p", "self_similarity_stat", "self_similarity_p", "passed"],
    );
    let mut passed = 0;
    for b in 0..batches {
        let batch_seed = derive_seed(master, StreamTag::Custom(b as u64), 0);
        let paths = replicates(batch_seed, StreamTag::Flow, PATHS_PER_BATCH, |_, rng| {
            simulate_flow_from(&model, &[], 0.0, horizon, comp, rng).expect("valid flow")
        });
        let scaled = replicates(batch_seed, StreamTag::Custom(1), PATHS_PER_BATCH, |_, rng| {
            simulate_flow_from(&model, &[], design.gamma.ln(), horizon, comp, rng).expect("valid flow")
        });
        let r = map_tests(&paths, &scaled, config.alpha, design)?;
        passed += usize::from(r.passed);
        table.row([
            b.to_string(),
            num(r.stationarity.statistic),
            num(r.stationarity.p_value),
            num(r.independence.statistic),
            num(r.independence.p_value),
            num(r.self_similarity.statistic),
            num(r.self_similarity.p_value),
            r.passed.to_string(),
        ]);
    }
    let fraction = passed as f64 / batches as f64;
    report.check(
        "battery_passes_in_95_percent_of_batches",
        fraction >= 0.95,
        &[
            ("batches", batches as f64),
            ("passed", passed as f64),
            ("fraction", fraction),
            ("paths_per_batch", PATHS_PER_BATCH as f64),
            ("battery_level", design.level),
        ],
    );
    report.note(format!(
        "s1 = {}, s2 = {}, t = {}, radial time {}, gamma = {}; each of the three tests runs at level {}/3",
        design.s1, design.s2, design.t, design.t_radial, design.gamma, design.level
    ));
    Ok(Outcome::with_tables(report, vec![table]))
}
