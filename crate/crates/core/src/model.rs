//! Model ingredients: the weight law `m`, the rate sequence `R(k)` and the
//! tilted weight `Γ = w₁ / E(w₁)`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::gauss::{hermite_normal, laguerre};
use crate::numerics::special::{ln_gamma, log_sum_exp, power_sum};
use crate::rng::{stream, SimRng, StreamTag};

/// Largest `k` for which a mass partition is materialised explicitly.
pub const MAX_MATERIALISED_BOXES: u64 = 10_000_000;

/// Law of the unnormalised weights `w_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum WeightLaw {
    Constant { c: f64 },
    Gamma { shape: f64, scale: f64 },
    LogNormal { mu: f64, sigma: f64 },
    FiniteDiscrete { values: Vec<f64>, probs: Vec<f64> },
}

impl WeightLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightLaw::Constant { c } if !(*c > 0.0 && c.is_finite()) => {
                Err(invalid("c", "constant weight must be positive"))
            }
            WeightLaw::Gamma { shape, scale } if !(*shape > 0.0 && *scale > 0.0) => {
                Err(invalid("shape", "gamma shape and scale must be positive"))
            }
            WeightLaw::LogNormal { mu, sigma } if !(mu.is_finite() && *sigma >= 0.0) => {
                Err(invalid("sigma", "log-normal needs finite mu and sigma >= 0"))
            }
            WeightLaw::FiniteDiscrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(invalid("values", "values and probs must be non-empty and equally long"));
                }
                if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(invalid("values", "values must be positive"));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(invalid("probs", "probs must be non-negative and sum to one"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `E(w)`.
    pub fn mean(&self) -> f64 {
        match self {
            WeightLaw::Constant { c } => *c,
            WeightLaw::Gamma { shape, scale } => shape * scale,
            WeightLaw::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            WeightLaw::FiniteDiscrete { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    /// Draws one weight.
    pub fn sample_weight<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WeightLaw::Constant { c } => *c,
            WeightLaw::Gamma { shape, scale } => GammaDist::new(*shape, *scale).expect("validated").sample(rng),
            WeightLaw::LogNormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            WeightLaw::FiniteDiscrete { values, probs } => values[pick(probs, rng.random())],
        }
    }

    /// Sum of `count` independent weights, exact in law.
    pub fn sample_weight_sum<R: Rng + ?Sized>(&self, count: u64, rng: &mut R) -> f64 {
        if count == 0 {
            return 0.0;
        }
        match self {
            WeightLaw::Constant { c } => c * count as f64,
            WeightLaw::Gamma { shape, scale } => GammaDist::new(shape * count as f64, *scale)
                .expect("validated")
                .sample(rng),
            WeightLaw::LogNormal { .. } => (0..count).map(|_| self.sample_weight(rng)).sum(),
            WeightLaw::FiniteDiscrete { values, probs } => multinomial(count, probs, rng)
                .iter()
                .zip(values)
                .map(|(&n, v)| n as f64 * v)
                .sum(),
        }
    }

    /// Draws the normalised vector `(p_1, ..., p_k)`.
    pub fn sample_mass_partition<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> Result<Vec<f64>> {
        if k == 0 {
            return Err(invalid("k", "need at least one box"));
        }
        if k > MAX_MATERIALISED_BOXES {
            return Err(Error::Capacity {
                what: "boxes",
                value: k,
                limit: MAX_MATERIALISED_BOXES,
            });
        }
        let mut w: Vec<f64> = (0..k).map(|_| self.sample_weight(rng)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        Ok(w)
    }

    /// Draws `(k p_1, ..., k p_m)` for `m ≤ k` without materialising the
    /// remaining `k - m` boxes when their total weight has a closed law.
    pub fn sample_scaled_components<R: Rng + ?Sized>(&self, k: u64, m: usize, rng: &mut R) -> Vec<f64> {
        assert!(m as u64 <= k && m >= 1);
        let head: Vec<f64> = (0..m).map(|_| self.sample_weight(rng)).collect();
        let rest = self.sample_weight_sum(k - m as u64, rng);
        let s = head.iter().sum::<f64>() + rest;
        head.into_iter().map(|w| k as f64 * w / s).collect()
    }
}

/// Index drawn from discrete probabilities with a uniform `u`.
pub(crate) fn pick(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let mut acc = 0.0;
    let target = u * total;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if target < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Multinomial counts by sequential binomials.
pub(crate) fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut left = n;
    let mut mass_left: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() || mass_left <= p {
            out[i] = left;
            break;
        }
        let q = (p / mass_left).clamp(0.0, 1.0);
        let c = Binomial::new(left, q).expect("valid binomial").sample(rng);
        out[i] = c;
        left -= c;
        mass_left -= p;
    }
    out
}

/// The rate sequence `R(k)` with `R(k) k^α → ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum RateSequence {
    /// `R(k) = ρ k^{-α}`.
    PurePower { rho: f64, alpha: f64 },
    /// Tabulated `R(1..=len)` followed by `ρ k^{-α}`.
    Tabled { prefix: Vec<f64>, rho: f64, alpha: f64 },
}

impl RateSequence {
    /// Tabled rates `R(k) = ρ (k^{1-α} - (k-1)^{1-α}) / (1-α)` for `k ≤ len`,
    /// the mass that `ρ x^{-α} dx` puts on `(k-1, k]`.
    pub fn integrated_power(rho: f64, alpha: f64, len: usize) -> Self {
        let b = 1.0 - alpha;
        let prefix = (1..=len)
            .map(|k| {
                let k = k as f64;
                // k^b - (k-1)^b = k^b (1 - (1 - 1/k)^b), computed without cancellation.
                -rho * k.powf(b) * (b * (-1.0 / k).ln_1p()).exp_m1() / b
            })
            .collect();
        RateSequence::Tabled { prefix, rho, alpha }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            RateSequence::PurePower { alpha, .. } | RateSequence::Tabled { alpha, .. } => *alpha,
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            RateSequence::PurePower { rho, .. } | RateSequence::Tabled { rho, .. } => *rho,
        }
    }

    /// Number of explicitly tabulated rates.
    pub fn table_len(&self) -> usize {
        match self {
            RateSequence::PurePower { .. } => 0,
            RateSequence::Tabled { prefix, .. } => prefix.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, r) = (self.alpha(), self.rho());
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid("alpha", format!("{a} is not in (0, 1)")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid("rho", format!("{r} is not positive")));
        }
        if let RateSequence::Tabled { prefix, .. } = self {
            if prefix.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(invalid("prefix", "tabled rates must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// `R(k)` for `k ≥ 1`.
    pub fn rate(&self, k: u64) -> f64 {
        match self {
            RateSequence::PurePower { rho, alpha } => rho * (k as f64).powf(-alpha),
            RateSequence::Tabled { prefix, rho, alpha } => match prefix.get(k as usize - 1) {
                Some(r) => *r,
                None => rho * (k as f64).powf(-alpha),
            },
        }
    }

    /// `Σ_{k=lo}^{hi} R(k) k^{-j}`, with `hi = None` meaning `∞` (needs `j ≥ 1`).
    pub fn weighted_sum(&self, j: u32, lo: u64, hi: Option<u64>) -> f64 {
        let lo = lo.max(1);
        let len = self.table_len() as u64;
        let mut total = 0.0;
        if lo <= len {
            let top = hi.map_or(len, |h| h.min(len));
            total += (lo..=top).map(|k| self.rate(k) * (k as f64).powi(-(j as i32))).sum::<f64>();
        }
        let start = lo.max(len + 1);
        if hi.is_none_or(|h| h >= start) {
            total += self.rho() * power_sum(self.alpha() + j as f64, start, hi);
        }
        total
    }

    /// Integral-comparison bounds on `Σ_{k>K} R(k) k^{-j}` for the power tail
    /// (`K` at least the table length). Infinite when `j = 0`.
    pub fn tail_bounds(&self, big_k: u64, j: u32) -> (f64, f64) {
        if j == 0 {
            return (f64::INFINITY, f64::INFINITY);
        }
        let k = big_k.max(self.table_len() as u64).max(1) as f64;
        let s = self.alpha() + j as f64;
        let r = self.rho();
        let exact_head = self.weighted_sum(j, big_k + 1, Some(k as u64));
        (
            exact_head + r * (k + 1.0).powf(1.0 - s) / (s - 1.0),
            exact_head + r * k.powf(1.0 - s) / (s - 1.0),
        )
    }
}

/// Full model configuration as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub alpha: f64,
    pub rho: f64,
    pub weight_law: WeightLaw,
    pub rates: RateSequence,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    /// Power rates `R(k) = ρ k^{-α}`.
    pub fn power(alpha: f64, rho: f64, weight_law: WeightLaw, seed: u64) -> Self {
        Self {
            alpha,
            rho,
            weight_law,
            rates: RateSequence::PurePower { rho, alpha },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weight_law.validate()?;
        self.rates.validate()?;
        if (self.rates.alpha() - self.alpha).abs() > 1e-12 || (self.rates.rho() - self.rho).abs() > 1e-12 {
            return Err(invalid("rates", "rate sequence alpha/rho disagree with the model"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Expectation rule for functions of `Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `|Σ w_i Γ_i - 1|`, the self-test on `E(Γ) = 1`.
    pub mean_defect: f64,
    /// Set when the deterministic rule failed its self-test and was replaced
    /// by an equally weighted Monte-Carlo sample.
    pub monte_carlo: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum TiltKind {
    Point,
    Gamma { kappa: f64 },
    Atoms,
}

/// The law of `Γ = w / E(w)` with closed-form or quadrature expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedWeight {
    law: WeightLaw,
    kind: TiltKind,
    rule: QuadratureRule,
}

/// Default number of quadrature nodes.
pub const DEFAULT_QUAD_NODES: usize = 64;

const RULE_TOLERANCE: f64 = 1e-10;
const MC_FALLBACK_SAMPLES: usize = 1 << 18;

/// Builds the expectation rule for `Γ` under `law`.
pub fn tilted_weight_sampler(law: &WeightLaw, nodes: usize) -> Result<TiltedWeight> {
    law.validate()?;
    let nodes = nodes.max(2);
    let (kind, base_nodes, base_weights) = match law {
        WeightLaw::Constant { .. } => (TiltKind::Point, vec![1.0], vec![1.0]),
        WeightLaw::LogNormal { sigma, .. } if *sigma == 0.0 => (TiltKind::Point, vec![1.0], vec![1.0]),
        WeightLaw::Gamma { shape, .. } => {
            let r = laguerre(nodes, shape - 1.0);
            let norm = ln_gamma(*shape).exp();
            (
                TiltKind::Gamma { kappa: *shape },
                r.nodes.iter().map(|y| y / shape).collect(),
                r.weights.iter().map(|w| w / norm).collect(),
            )
        }
        WeightLaw::LogNormal { sigma, .. } => {
            let r = hermite_normal(nodes);
            (
                TiltKind::Atoms,
                r.nodes.iter().map(|x| (sigma * x - 0.5 * sigma * sigma).exp()).collect(),
                r.weights,
            )
        }
        WeightLaw::FiniteDiscrete { values, probs } => {
            let m = law.mean();
            (TiltKind::Atoms, values.iter().map(|v| v / m).collect(), probs.clone())
        }
    };
    let defect = |n: &[f64], w: &[f64]| (n.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - 1.0).abs();
    let mut rule = QuadratureRule {
        mean_defect: defect(&base_nodes, &base_weights),
        nodes: base_nodes,
        weights: base_weights,
        monte_carlo: false,
    };
    if rule.mean_defect > RULE_TOLERANCE && matches!(law, WeightLaw::LogNormal { .. }) {
        let mut rng = stream(0, StreamTag::Quadrature, 0);
        let mut sample: Vec<f64> = (0..MC_FALLBACK_SAMPLES).map(|_| law.sample_weight(&mut rng)).collect();
        let m = sample.iter().sum::<f64>() / sample.len() as f64;
        sample.iter_mut().for_each(|x| *x /= m);
        let w = vec![1.0 / MC_FALLBACK_SAMPLES as f64; MC_FALLBACK_SAMPLES];
        rule = QuadratureRule {
            mean_defect: defect(&sample, &w),
            nodes: sample,
            weights: w,
            monte_carlo: true,
        };
    }
    Ok(TiltedWeight {
        law: law.clone(),
        kind,
        rule,
    })
}

impl TiltedWeight {
    pub fn law(&self) -> &WeightLaw {
        &self.law
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Draws `Γ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.law.sample_weight(rng) / self.law.mean()
    }

    /// `E f(Γ)` by the expectation rule.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.rule.nodes.iter().zip(&self.rule.weights).map(|(&g, &w)| w * f(g)).sum()
    }

    /// `E Γ^j`, exact.
    pub fn moment(&self, j: u32) -> f64 {
        match (&self.kind, &self.law) {
            (TiltKind::Point, _) => 1.0,
            (TiltKind::Gamma { kappa }, _) => (0..j).map(|i| (kappa + i as f64) / kappa).product(),
            (_, WeightLaw::LogNormal { sigma, .. }) if !self.rule.monte_carlo => {
                let j = j as f64;
                (0.5 * sigma * sigma * j * (j - 1.0)).exp()
            }
            _ => self.expect(|g| g.powi(j as i32)),
        }
    }

    /// `E e^{-sΓ}`.
    pub fn laplace(&self, s: f64) -> f64 {
        match self.kind {
            TiltKind::Point => (-s).exp(),
            TiltKind::Gamma { kappa } => (-kappa * (s / kappa).ln_1p()).exp(),
            TiltKind::Atoms => self.expect(|g| (-s * g).exp()),
        }
    }

    /// `E[e^{-lo Γ} - e^{-hi Γ}]` for `0 ≤ lo ≤ hi`, without cancellation.
    pub fn laplace_gap(&self, lo: f64, hi: f64) -> f64 {
        let d = hi - lo;
        match self.kind {
            TiltKind::Point => (-lo).exp() * -(-d).exp_m1(),
            TiltKind::Gamma { kappa } => {
                let base = (-kappa * (lo / kappa).ln_1p()).exp();
                base * -(-kappa * (d / (kappa + lo)).ln_1p()).exp_m1()
            }
            TiltKind::Atoms => self.expect(|g| (-lo * g).exp() * -(-d * g).exp_m1()),
        }
    }

    /// `ln E[Γ^m e^{-sΓ}]`.
    pub fn ln_moment_laplace(&self, m: u32, s: f64) -> f64 {
        let m_f = m as f64;
        match self.kind {
            TiltKind::Point => -s,
            TiltKind::Gamma { kappa } => {
                ln_gamma(kappa + m_f) - ln_gamma(kappa) - m_f * kappa.ln() - (kappa + m_f) * (s / kappa).ln_1p()
            }
            TiltKind::Atoms => {
                let terms: Vec<f64> = self
                    .rule
                    .nodes
                    .iter()
                    .zip(&self.rule.weights)
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(&g, &w)| w.ln() + m_f * g.ln() - s * g)
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }
}

/// Upper bound `C₂` on `sup_k E_k[(k p₁)²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMomentBound {
    pub value: f64,
    /// True when the value is a Monte-Carlo estimate inflated by 1.5 rather
    /// than a proven bound.
    pub heuristic: bool,
}

/// `C₂` for the law: exact for constant and gamma weights, a Monte-Carlo
/// maximum over `k = 2^i` times 1.5 otherwise.
pub fn second_moment_sup(law: &WeightLaw) -> Result<SecondMomentBound> {
    law.validate()?;
    Ok(match law {
        WeightLaw::Constant { .. } => SecondMomentBound { value: 1.0, heuristic: false },
        WeightLaw::Gamma { shape, .. } => SecondMomentBound {
            value: (shape + 1.0) / shape,
            heuristic: false,
        },
        _ => {
            let mut rng = stream(0, StreamTag::Custom(2), 0);
            let mut best = 0.0f64;
            for i in 0..=14 {
                let k = 1u64 << i;
                let samples = 4000;
                let m: f64 = (0..samples)
                    .map(|_| law.sample_scaled_components(k, 1, &mut rng)[0].powi(2))
                    .sum::<f64>()
                    / samples as f64;
                best = best.max(m);
            }
            SecondMomentBound {
                value: 1.5 * best,
                heuristic: true,
            }
        }
    })
}

/// `E_k[(k p₁)²]` in closed form where available.
pub fn scaled_second_moment(law: &WeightLaw, k: u64) -> Option<f64> {
    let k_f = k as f64;
    match law {
        WeightLaw::Constant { .. } => Some(1.0),
        WeightLaw::Gamma { shape, .. } => Some(k_f * (shape + 1.0) / (k_f * shape + 1.0)),
        _ => None,
    }
}

/// Monte-Carlo moments of the scaled mass partition at a fixed `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledMoments {
    pub k: u64,
    pub second: f64,
    pub second_err: f64,
    pub third: f64,
    pub sum_squares: f64,
    pub covariance: f64,
    pub covariance_err: f64,
}

/// Estimates `E(k p₁)²`, `E(k p₁)³`, `E Σ p_j²` and `Cov(k p₁, k p₂)`.
pub fn scaled_moments_mc(law: &WeightLaw, k: u64, samples: usize, rng: &mut SimRng) -> ScaledMoments {
    use crate::numerics::stats::{CoMoments, Moments};
    let mut second = Moments::new();
    let mut third = Moments::new();
    let mut cov = CoMoments::default();
    let mut cov_terms = Moments::new();
    for _ in 0..samples {
        let c = law.sample_scaled_components(k, 2.min(k as usize), rng);
        second.push(c[0] * c[0]);
        third.push(c[0].powi(3));
        if c.len() == 2 {
            cov.push(c[0], c[1]);
            cov_terms.push((c[0] - 1.0) * (c[1] - 1.0));
        }
    }
    ScaledMoments {
        k,
        second: second.mean,
        second_err: second.std_err(),
        third: third.mean,
        sum_squares: second.mean / k as f64,
        covariance: if k >= 2 { cov_terms.mean } else { 0.0 },
        covariance_err: if k >= 2 { cov_terms.std_err() } else { 0.0 },
    }
}

/// Estimates `E(Γ₁ - k p₁)²` with `Γ₁ = w₁ / E w₁` and `p₁ = w₁ / s_k`
/// drawn from the same weights. Returns the mean and its standard error.
pub fn normalisation_gap_mc(law: &WeightLaw, k: u64, samples: usize, rng: &mut SimRng) -> (f64, f64) {
    use crate::numerics::stats::Moments;
    let mean = law.mean();
    let mut m = Moments::new();
    for _ in 0..samples {
        let w = law.sample_weight(rng);
        let s = w + law.sample_weight_sum(k - 1, rng);
        let d = w / mean - k as f64 * w / s;
        m.push(d * d);
    }
    (m.mean, m.std_err())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gamma(shape: f64) -> WeightLaw {
        WeightLaw::Gamma { shape, scale: 1.0 }
    }

    #[test]
    fn normalisation_gap_vanishes_for_constant_weights() {
        let mut rng = stream(3, StreamTag::Custom(0), 0);
        let (m, se) = normalisation_gap_mc(&WeightLaw::Constant { c: 2.0 }, 64, 100, &mut rng);
        assert!(m < 1e-20 && se < 1e-20);
        let (a, _) = normalisation_gap_mc(&gamma(1.0), 16, 4000, &mut rng);
        let (b, _) = normalisation_gap_mc(&gamma(1.0), 256, 4000, &mut rng);
        assert!(b < a / 4.0, "{a} {b}");
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = ModelConfig::power(0.5, 1.0, gamma(1.0), 7);
        let back = ModelConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
        assert!(cfg.to_json().contains("\"kind\": \"gamma\""));
    }

    #[test]
    fn config_rejects_bad_alpha() {
        let cfg = ModelConfig::power(1.2, 1.0, gamma(1.0), 0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn gamma_closed_forms_match_rule() {
        for &a in &[0.5, 1.0, 2.0, 7.5] {
            let tw = tilted_weight_sampler(&gamma(a), 64).unwrap();
            assert!(tw.rule().mean_defect < 1e-10);
            for &s in &[0.0, 0.3, 2.0] {
                assert_relative_eq!(tw.laplace(s), tw.expect(|g| (-s * g).exp()), max_relative = 1e-9);
                for m in 0..5 {
                    let direct = tw.expect(|g| g.powi(m as i32) * (-s * g).exp());
                    assert_relative_eq!(tw.ln_moment_laplace(m, s).exp(), direct, max_relative = 1e-8);
                }
            }
            assert_relative_eq!(tw.moment(2), (a + 1.0) / a, max_relative = 1e-14);
        }
    }

    #[test]
    fn laplace_gap_is_accurate_for_tiny_differences() {
        for law in [WeightLaw::Constant { c: 2.0 }, gamma(1.5), WeightLaw::LogNormal { mu: 0.0, sigma: 0.5 }] {
            let tw = tilted_weight_sampler(&law, 64).unwrap();
            let (lo, d) = (0.7, 1e-9);
            let gap = tw.laplace_gap(lo, lo + d);
            // d E[Γ e^{-lo Γ}] to first order.
            let slope = tw.ln_moment_laplace(1, lo).exp();
            assert_relative_eq!(gap, d * slope, max_relative = 1e-8);
        }
    }

    #[test]
    fn lognormal_rule_self_test() {
        let tw = tilted_weight_sampler(&WeightLaw::LogNormal { mu: 0.3, sigma: 0.5 }, 64).unwrap();
        assert!(!tw.rule().monte_carlo);
        assert!(tw.rule().mean_defect < 1e-12);
        assert_relative_eq!(tw.expect(|g| g * g), 0.25f64.exp(), max_relative = 1e-12);
    }

    #[test]
    fn integrated_power_rates_sum_to_power() {
        let r = RateSequence::integrated_power(1.0, 0.5, 1000);
        let s: f64 = (1..=1000).map(|k| r.rate(k)).sum();
        assert_relative_eq!(s, 2.0 * 1000f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r.rate(1000) * 1000f64.sqrt(), 1.0, max_relative = 1e-3);
    }

    #[test]
    fn weighted_sum_and_tail_bounds() {
        let r = RateSequence::PurePower { rho: 2.0, alpha: 0.5 };
        let direct: f64 = (10..=5000u64).map(|k| 2.0 * (k as f64).powf(-1.5)).sum();
        assert_relative_eq!(r.weighted_sum(1, 10, Some(5000)), direct, max_relative = 1e-12);
        let (lo, hi) = r.tail_bounds(100, 1);
        let tail = r.weighted_sum(1, 101, None);
        assert!(lo <= tail && tail <= hi);
    }

    #[test]
    fn second_moment_bounds() {
        assert_eq!(second_moment_sup(&gamma(2.0)).unwrap().value, 1.5);
        assert_eq!(scaled_second_moment(&gamma(1.0), 1), Some(1.0));
        assert_relative_eq!(scaled_second_moment(&gamma(1.0), 1_000_000).unwrap(), 2.0, max_relative = 1e-5);
    }

    #[test]
    fn multinomial_conserves_count() {
        let mut rng = stream(1, StreamTag::Custom(9), 0);
        let c = multinomial(1000, &[0.2, 0.3, 0.5], &mut rng);
        assert_eq!(c.iter().sum::<u64>(), 1000);
    }
}
