//! Criterion 10: the rescaled site frequency spectrum and its limit.

use anyhow::Result;
use xicoal::limitflow::{exp_functional, exp_functional_adaptive, simulate_flow_from, Compensation, FlowModel, FlowOptions};
use xicoal::model::{ModelConfig, WeightLaw};
use xicoal::numerics::quad::QuadControls;
use xicoal::numerics::stats::Moments;
use xicoal::paintbox::{simulate, EventSampler, Stop};
use xicoal::rng::{replicates, StreamTag};
use xicoal::sfs::{branch_lengths, exp_functional_mean, sample_sfs};

use super::{combined_se, generator::integrated_rates};
use crate::report::{num, Outcome, Report, Table};
use crate::suite::{Criterion, Ctx};

pub const SIZES: [u64; 4] = [250, 500, 1000, 2000];
pub const MUTATION_RATE: f64 = 1.0;
pub const PROBE: f64 = 0.5;
const TAIL_TOL: f64 = 1e-6;

struct FlowDraw {
    /// `(total, projection)` for `q = 2 - α` and for `q = α`.
    stated: (f64, f64),
    corrected: (f64, f64),
    flagged: bool,
}

struct FiniteSummary {
    n: u64,
    total: Moments,
    probe: Moments,
}

/// Non-increasing `|gap|` up to two combined σ between consecutive sizes.
fn monotone(gaps: &[(f64, f64)]) -> bool {
    gaps.windows(2).all(|w| w[1].0.abs() <= w[0].0.abs() + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

pub fn limit(ctx: &Ctx) -> Result<Outcome> {
    let c = Criterion::Sfs;
    let mut report = Report::new(c.number(), c.id(), c.title(), ctx.seed, ctx.quick);
    let mut config = ModelConfig::power(0.5, 1.0, WeightLaw::Constant { c: 1.0 }, ctx.seed);
    config.rates = integrated_rates();
    let alpha = config.alpha;
    let r = MUTATION_RATE;
    let q_stated = 2.0 - alpha;
    let q_corrected = alpha;
    let reps = ctx.reps(10_000);
    let master = ctx.master(c);

    let model = FlowModel::new(&config)?;
    let comp = Compensation::new(&model, FlowOptions::default());
    let draws = replicates(master, StreamTag::Flow, reps, |_, rng| {
        let mut path = simulate_flow_from(&model, &[PROBE], 0.0, 8.0, comp, rng).expect("valid flow");
        let slow = exp_functional_adaptive(&mut path, &model, q_corrected, TAIL_TOL, 16, rng).expect("q > 0");
        let fast = exp_functional(&path, q_stated, TAIL_TOL).expect("q > 0");
        FlowDraw {
            stated: (r * fast.value, r * fast.projections[0]),
            corrected: (r * slow.value, r * slow.projections[0]),
            flagged: slow.flagged || fast.flagged,
        }
    });
    let flagged = draws.iter().filter(|d| d.flagged).count();
    let flow_stated: Moments = draws.iter().map(|d| d.stated.0).collect();
    let flow_corrected: Moments = draws.iter().map(|d| d.corrected.0).collect();
    let probe_stated: Moments = draws.iter().map(|d| d.stated.1).collect();
    let probe_corrected: Moments = draws.iter().map(|d| d.corrected.1).collect();
    let ctl = QuadControls::default();
    let mean_stated = exp_functional_mean(&model, r, q_stated, ctl);
    let mean_corrected = exp_functional_mean(&model, r, q_corrected, ctl);

    // (a) the exponential functional at q = 2 - α against r/φ(2 - α).
    let diff = flow_stated.mean - mean_stated.value;
    let tol = 3.0 * flow_stated.std_err() + mean_stated.error + r * TAIL_TOL;
    report.check(
        "a_exp_functional_mean",
        diff.abs() <= tol && flagged == 0,
        &[
            ("q", q_stated),
            ("mc_mean", flow_stated.mean),
            ("std_err", flow_stated.std_err()),
            ("r_over_phi", mean_stated.value),
            ("difference_in_sigma", diff / flow_stated.std_err()),
            ("flagged_paths", flagged as f64),
            ("paths", reps as f64),
        ],
    );

    // (b) finite-n |F_n| and (c) the λ-projection.
    let mut finite = Vec::new();
    for &n in &SIZES {
        let sampler = EventSampler::new(&config)?;
        let tag = StreamTag::Custom(0x5f5 + n);
        let rows = replicates(master, tag, reps, |_, rng| {
            let t = simulate(&sampler, n, Stop::UntilMrca, rng).expect("valid configuration");
            let l = branch_lengths(&t).expect("absorbed");
            let sfs = sample_sfs(&l, r, n, alpha, rng).expect("r >= 0");
            (sfs.total(), sfs.psi(PROBE))
        });
        finite.push(FiniteSummary {
            n,
            total: rows.iter().map(|v| v.0).collect(),
            probe: rows.iter().map(|v| v.1).collect(),
        });
    }

    let mut table = Table::new(
        "sfs-total.csv",
        &["n", "mean_total", "std_err", "gap_to_r_over_phi_2_minus_alpha", "gap_to_r_over_phi_alpha", "mean_probe", "probe_std_err"],
    );
    for f in &finite {
        table.row([
            f.n.to_string(),
            num(f.total.mean),
            num(f.total.std_err()),
            num(f.total.mean - mean_stated.value),
            num(f.total.mean - mean_corrected.value),
            num(f.probe.mean),
            num(f.probe.std_err()),
        ]);
    }
    let gaps = |target: f64, err: f64| -> Vec<(f64, f64)> {
        finite
            .iter()
            .map(|f| (f.total.mean - target, (f.total.std_err().powi(2) + err * err).sqrt()))
            .collect()
    };
    let stated_gaps = gaps(mean_stated.value, mean_stated.error);
    let last = stated_gaps[stated_gaps.len() - 1];
    report.check(
        "b_finite_n_total_approaches_r_over_phi",
        monotone(&stated_gaps) && last.0.abs() < 5.0 * last.1,
        &[
            ("target", mean_stated.value),
            ("gap_n250", stated_gaps[0].0),
            ("gap_n2000", last.0),
            ("combined_sigma_n2000", last.1),
            ("gap_in_sigma_n2000", last.0 / last.1),
        ],
    );
    let corrected_gaps = gaps(mean_corrected.value, mean_corrected.error);
    let clast = corrected_gaps[corrected_gaps.len() - 1];
    report.diagnostic(
        "b_finite_n_total_approaches_r_over_phi_alpha",
        monotone(&corrected_gaps) && clast.0.abs() < 5.0 * clast.1,
        &[
            ("target", mean_corrected.value),
            ("mc_flow_mean", flow_corrected.mean),
            ("mc_flow_std_err", flow_corrected.std_err()),
            ("gap_n250", corrected_gaps[0].0),
            ("gap_n2000", clast.0),
            ("combined_sigma_n2000", clast.1),
            ("gap_in_sigma_n2000", clast.0 / clast.1),
        ],
    );

    let probe_n = &finite[finite.len() - 1].probe;
    let pd = probe_n.mean - probe_stated.mean;
    let psig = combined_se(probe_n, &probe_stated);
    report.check(
        "c_projection_lambda_half",
        pd.abs() <= 3.0 * psig,
        &[
            ("finite_mean", probe_n.mean),
            ("flow_mean", probe_stated.mean),
            ("combined_sigma", psig),
            ("difference_in_sigma", pd / psig),
        ],
    );
    let cd = probe_n.mean - probe_corrected.mean;
    let csig = combined_se(probe_n, &probe_corrected);
    report.diagnostic(
        "c_projection_lambda_half_q_alpha",
        cd.abs() <= 3.0 * csig,
        &[
            ("finite_mean", probe_n.mean),
            ("flow_mean", probe_corrected.mean),
            ("combined_sigma", csig),
            ("difference_in_sigma", cd / csig),
        ],
    );
    report.note(
        "the checks use the exponent q = 2 - alpha; diagnostics repeat them with q = alpha, the exponent implied by the time change dt = exp((1 - alpha) xi) du",
    );
    report.note(format!("mutation rate r = {r}, probe lambda = {PROBE}, replicates per size {reps}"));
    Ok(Outcome::with_tables(report, vec![table]))
}
