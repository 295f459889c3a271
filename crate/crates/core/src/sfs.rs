//! Infinite-sites mutations on simulated genealogies and the limit of the
//! rescaled site frequency spectrum.
//!
//! Mutations fall at rate `r` along every branch. A block of size `i`
//! carries its mutations to `i` sampled individuals, so the number of
//! mutations carried by `i` individuals is Poisson with mean
//! `r ∫_0^{T̂_n} μ̂^n_s(i) ds`. Integration stops at the most recent common
//! ancestor.
//!
//! In the limit `n^{-α} Σ_i F_n(i)` tends to `r ∫_0^∞ e^{-α ξ_u} du`, the
//! exponential functional of the subordinator at `q = α`, whose mean is
//! `r / φ(α)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::limitflow::{exp_functional_adaptive, simulate_flow_from, Compensation, FlowModel, FlowOptions};
use crate::model::ModelConfig;
use crate::numerics::quad::{QuadControls, QuadValue};
use crate::paintbox::Trajectory;

/// Rescaled branch lengths `L(i) = ∫_0^{T_n} μ^n_s(i) ds` of an absorbed
/// trajectory. The root block of size `n` never appears.
pub fn branch_lengths(traj: &Trajectory) -> Result<BTreeMap<u64, f64>> {
    if traj.t_mrca.is_none() {
        return Err(Error::NotAbsorbed {
            blocks: traj.final_state().block_count() as usize,
        });
    }
    Ok(traj.occupation.iter().filter(|&(_, &v)| v > 0.0).map(|(&i, &v)| (i, v)).collect())
}

/// A site frequency spectrum, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfsVector {
    pub n: u64,
    pub alpha: f64,
    pub r: f64,
    /// Number of mutations carried by exactly `i` individuals.
    pub counts: BTreeMap<u64, u64>,
}

impl SfsVector {
    fn norm(&self) -> f64 {
        (self.n as f64).powf(-self.alpha)
    }

    /// `F_n(i) = counts(i) / n^α`.
    pub fn rescaled(&self) -> BTreeMap<u64, f64> {
        let s = self.norm();
        self.counts.iter().map(|(&i, &c)| (i, c as f64 * s)).collect()
    }

    pub fn total_mutations(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `|F_n|`.
    pub fn total(&self) -> f64 {
        self.total_mutations() as f64 * self.norm()
    }

    /// `Σ_i λ^i F_n(i)`.
    pub fn psi(&self, lambda: f64) -> f64 {
        self.norm() * self.counts.iter().map(|(&i, &c)| c as f64 * lambda.powi(i as i32)).sum::<f64>()
    }

    /// Dense vector `F_n(1..n-1)`.
    pub fn dense(&self) -> Vec<f64> {
        let s = self.norm();
        (1..self.n).map(|i| self.counts.get(&i).map_or(0.0, |&c| c as f64 * s)).collect()
    }

    /// Writes `(i, count, F_n(i))` for every `i` with a nonzero count.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "count", "F_n"])?;
        let s = self.norm();
        for (&i, &c) in &self.counts {
            out.write_record(&[i.to_string(), c.to_string(), format!("{:e}", c as f64 * s)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Drops mutations on rescaled branch lengths: `counts(i) ~ Poisson(r n^α L(i))`.
pub fn sample_sfs<R: Rng + ?Sized>(
    lengths: &BTreeMap<u64, f64>,
    r: f64,
    n: u64,
    alpha: f64,
    rng: &mut R,
) -> Result<SfsVector> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid("r", "mutation rate must be a non-negative number"));
    }
    let scale = r * (n as f64).powf(alpha);
    let mut counts = BTreeMap::new();
    for (&i, &l) in lengths {
        let mean = scale * l;
        if mean <= 0.0 {
            continue;
        }
        let c = Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng) as u64;
        if c > 0 {
            counts.insert(i, c);
        }
    }
    Ok(SfsVector { n, alpha, r, counts })
}

/// `r / φ(q)`, the mean of `r ∫_0^∞ e^{-qξ_u} du`.
pub fn exp_functional_mean(model: &FlowModel, r: f64, q: f64, ctl: QuadControls) -> QuadValue {
    if r == 0.0 {
        return QuadValue::new(0.0, 0.0);
    }
    let phi = model.laplace_exponent(q, ctl);
    QuadValue::new(r / phi.value, r * phi.error / (phi.value * phi.value))
}

/// Mean of the limit of `|F_n|`, that is `r / φ(α)`.
pub fn limit_sfs_total_mean(config: &ModelConfig, r: f64) -> Result<QuadValue> {
    let model = FlowModel::new(config)?;
    Ok(exp_functional_mean(&model, r, config.alpha, QuadControls::default()))
}

/// One draw of the projected limit spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSfsSample {
    pub q: f64,
    /// `r ∫ e^{-qξ_u} du`.
    pub total: f64,
    /// `r ∫ ψ_λ(θ_u) e^{-qξ_u} du` for each probe `λ`.
    pub psi: Vec<f64>,
    pub tail_bound: f64,
    pub flagged: bool,
}

/// Controls of a limit-spectrum draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSfsOptions {
    pub comp: Compensation,
    pub q: f64,
    pub initial_horizon: f64,
    pub tail_tol: f64,
    pub max_doublings: usize,
}

impl LimitSfsOptions {
    pub fn new(model: &FlowModel, flow: FlowOptions) -> Self {
        Self {
            comp: Compensation::new(model, flow),
            q: model.alpha,
            initial_horizon: 8.0,
            tail_tol: 1e-6,
            max_doublings: 12,
        }
    }
}

/// Simulates the flow and returns the total and `ψ_λ` projections of the
/// limit spectrum.
pub fn limit_sfs_vector_sample<R: Rng + ?Sized>(
    model: &FlowModel,
    r: f64,
    lambdas: &[f64],
    opts: LimitSfsOptions,
    rng: &mut R,
) -> Result<LimitSfsSample> {
    let mut path = simulate_flow_from(model, lambdas, 0.0, opts.initial_horizon, opts.comp, rng)?;
    let ef = exp_functional_adaptive(&mut path, model, opts.q, opts.tail_tol, opts.max_doublings, rng)?;
    Ok(LimitSfsSample {
        q: opts.q,
        total: r * ef.value,
        psi: ef.projections.iter().map(|v| r * v).collect(),
        tail_bound: r * ef.tail_bound,
        flagged: ef.flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightLaw;
    use crate::numerics::stats::Moments;
    use crate::paintbox::{simulate, EventSampler, Stop};
    use crate::rng::{stream, StreamTag};

    fn config() -> ModelConfig {
        ModelConfig::power(0.5, 1.0, WeightLaw::Constant { c: 1.0 }, 0)
    }

    #[test]
    fn lengths_satisfy_mass_identity() {
        let s = EventSampler::new(&config()).unwrap();
        let mut rng = stream(5, StreamTag::Paintbox, 0);
        for n in [2, 7, 60] {
            let t = simulate(&s, n, Stop::UntilMrca, &mut rng).unwrap();
            let l = branch_lengths(&t).unwrap();
            assert!(!l.contains_key(&n));
            let mass: f64 = l.iter().map(|(&i, &v)| i as f64 * v).sum();
            let t_n = t.t_mrca.unwrap() * t.time_scale();
            assert!((mass - t_n).abs() < 1e-9 * t_n);
        }
        let t = simulate(&s, 50, Stop::Horizon(1e-6), &mut rng).unwrap();
        assert!(matches!(branch_lengths(&t), Err(Error::NotAbsorbed { .. })));
    }

    #[test]
    fn zero_rate_gives_empty_spectrum() {
        let l = BTreeMap::from([(1, 2.0), (2, 0.5)]);
        let mut rng = stream(6, StreamTag::Mutation, 0);
        let sfs = sample_sfs(&l, 0.0, 10, 0.5, &mut rng).unwrap();
        assert_eq!(sfs.total_mutations(), 0);
        assert!(sample_sfs(&l, -1.0, 10, 0.5, &mut rng).is_err());
    }

    #[test]
    fn conditional_counts_are_poisson() {
        let l = BTreeMap::from([(1, 1.5), (3, 0.25)]);
        let (n, alpha, r) = (16, 0.5, 2.0);
        let mut rng = stream(7, StreamTag::Mutation, 0);
        let mut m1 = Moments::default();
        let mut m3 = Moments::default();
        for _ in 0..20_000 {
            let sfs = sample_sfs(&l, r, n, alpha, &mut rng).unwrap();
            let f = sfs.rescaled();
            m1.push(f.get(&1).copied().unwrap_or(0.0));
            m3.push(*sfs.counts.get(&3).unwrap_or(&0) as f64);
        }
        assert!((m1.mean - r * 1.5).abs() < 3.0 * m1.std_err());
        let mean3 = r * 4.0 * 0.25;
        assert!((m3.mean - mean3).abs() < 3.0 * m3.std_err());
        assert!((m3.variance() / m3.mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn projections_at_extreme_probes() {
        let model = FlowModel::new(&config()).unwrap();
        let mut rng = stream(8, StreamTag::Flow, 0);
        let opts = LimitSfsOptions::new(&model, FlowOptions::default());
        let s = limit_sfs_vector_sample(&model, 3.0, &[0.0, 1.0], opts, &mut rng).unwrap();
        assert_eq!(s.psi[0], 0.0);
        assert!((s.psi[1] - s.total).abs() < 1e-12 * s.total);
        assert!(!s.flagged);
        assert_eq!(limit_sfs_total_mean(&config(), 0.0).unwrap().value, 0.0);
    }
}
