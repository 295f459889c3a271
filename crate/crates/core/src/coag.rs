//! The limiting coagulation operator `C^x`, the generating functions `ψ_λ`
//! and the limit generator `A`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::TiltedWeight;
use crate::numerics::quad::{integrate_power_measure, QuadControls};
use crate::numerics::special::{ln_factorial, log_sum_exp};

/// Largest `ℓ` accepted by the partition machinery.
pub const ELL_MAX: usize = 40;
/// Default truncation of `C^x(z)`.
pub const DEFAULT_ELL: usize = 30;

/// A point of `ℓ¹(ℝ⁺)` with finite support, `z(i) = entries[i - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqVector {
    entries: Vec<f64>,
}

impl FreqVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|z| !(*z >= 0.0 && z.is_finite())) {
            return Err(invalid("entries", "frequencies must be finite and non-negative"));
        }
        let mut v = Self { entries };
        v.trim();
        Ok(v)
    }

    /// `z = (m, 0, 0, ...)`.
    pub fn singletons(m: f64) -> Self {
        Self { entries: vec![m] }
    }

    /// `z(i) = census[i] / n`.
    pub fn from_census(census: &BTreeMap<u64, u64>, n: u64) -> Self {
        let len = census.keys().next_back().copied().unwrap_or(0) as usize;
        let mut entries = vec![0.0; len];
        for (&size, &count) in census {
            entries[size as usize - 1] = count as f64 / n as f64;
        }
        Self { entries }
    }

    fn trim(&mut self) {
        while self.entries.last() == Some(&0.0) {
            self.entries.pop();
        }
    }

    /// `z(i)`, zero outside the support.
    pub fn get(&self, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        self.entries.get(i - 1).copied().unwrap_or(0.0)
    }

    /// Largest index with a non-zero entry.
    pub fn support_bound(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `|z| = Σ z(i)`.
    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// `Σ i z(i)`.
    pub fn mass(&self) -> f64 {
        self.entries.iter().enumerate().map(|(i, z)| (i + 1) as f64 * z).sum()
    }

    /// `ψ_λ(z) = Σ z(i) λ^i`.
    pub fn psi(&self, lambda: f64) -> f64 {
        // Horner from the top coefficient.
        self.entries.iter().rev().fold(0.0, |acc, z| (acc + z) * lambda)
    }

    /// `i`-th derivative of `λ ↦ ψ_λ(z)` divided by `i!`.
    pub fn psi_taylor(&self, i: usize, lambda: f64) -> f64 {
        let mut s = 0.0;
        for j in i.max(1)..=self.entries.len() {
            let binom = (ln_factorial(j as u64) - ln_factorial(i as u64) - ln_factorial((j - i) as u64)).exp();
            s += self.entries[j - 1] * binom * lambda.powi((j - i) as i32);
        }
        s
    }

    /// `γ z`.
    pub fn scale(&self, gamma: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|z| z * gamma).collect(),
        }
    }
}

/// A partition of `ℓ` as `(part, multiplicity)` pairs with increasing parts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerPartition {
    pub parts: Vec<(u32, u32)>,
}

impl IntegerPartition {
    /// `ℓ = Σ i c(i)`.
    pub fn weight(&self) -> usize {
        self.parts.iter().map(|&(i, c)| (i * c) as usize).sum()
    }

    /// `|c| = Σ c(i)`.
    pub fn num_parts(&self) -> u32 {
        self.parts.iter().map(|p| p.1).sum()
    }

    /// `ln c! = Σ ln c(i)!`.
    pub fn ln_factorial(&self) -> f64 {
        self.parts.iter().map(|&(_, c)| ln_factorial(c as u64)).sum()
    }
}

fn build_partitions(ell: usize) -> Vec<IntegerPartition> {
    // Parts in non-increasing order, generated depth first; the resulting
    // order is reverse lexicographic in the part sequence.
    fn rec(rest: usize, max_part: usize, cur: &mut Vec<u32>, out: &mut Vec<IntegerPartition>) {
        if rest == 0 {
            let mut parts: Vec<(u32, u32)> = Vec::new();
            for &p in cur.iter().rev() {
                match parts.last_mut() {
                    Some(last) if last.0 == p => last.1 += 1,
                    _ => parts.push((p, 1)),
                }
            }
            out.push(IntegerPartition { parts });
            return;
        }
        for p in (1..=rest.min(max_part)).rev() {
            cur.push(p as u32);
            rec(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(ell, ell, &mut Vec::new(), &mut out);
    out
}

fn partitions_cached(ell: usize) -> &'static [IntegerPartition] {
    static CACHE: [OnceLock<Vec<IntegerPartition>>; ELL_MAX + 1] = [const { OnceLock::new() }; ELL_MAX + 1];
    CACHE[ell].get_or_init(|| build_partitions(ell))
}

/// All partitions of `ℓ` in a fixed order.
pub fn enumerate_partitions(ell: usize) -> Result<Vec<IntegerPartition>> {
    check_ell(ell)?;
    Ok(partitions_cached(ell).to_vec())
}

fn check_ell(ell: usize) -> Result<()> {
    if ell == 0 {
        return Err(invalid("ell", "must be positive"));
    }
    if ell > ELL_MAX {
        return Err(Error::Capacity {
            what: "ell",
            value: ell as u64,
            limit: ELL_MAX as u64,
        });
    }
    Ok(())
}

/// `ln Σ_{c ∈ φ⁻¹(ℓ), |c| = m} Π a_i^{c(i)} / c(i)!` for each `m`, indexed by
/// `m`. Entries are `-∞` when no partition contributes.
fn ln_partition_sums(ell: usize, ln_a: &[f64]) -> Vec<f64> {
    let mut by_m: Vec<Vec<f64>> = vec![Vec::new(); ell + 1];
    'outer: for c in partitions_cached(ell) {
        let mut t = -c.ln_factorial();
        for &(i, mult) in &c.parts {
            let la = ln_a.get(i as usize - 1).copied().unwrap_or(f64::NEG_INFINITY);
            if la == f64::NEG_INFINITY {
                continue 'outer;
            }
            t += mult as f64 * la;
        }
        by_m[c.num_parts() as usize].push(t);
    }
    by_m.iter().map(|v| log_sum_exp(v)).collect()
}

/// `C^x(z)(ℓ) = E[x e^{-|z|Γ/x} Σ_{c ∈ φ⁻¹(ℓ)} Π (z(i)Γ/x)^{c(i)} / c(i)!]`.
///
/// The partition sum is grouped by the number of parts `m`, so that the
/// expectation reduces to `E[Γ^m e^{-|z|Γ/x}]`. All products are formed in
/// log space.
pub fn coag_coordinate(z: &FreqVector, x: f64, ell: usize, tw: &TiltedWeight) -> Result<f64> {
    check_ell(ell)?;
    check_x(x)?;
    let ln_z: Vec<f64> = (1..=ell).map(|i| z.get(i).ln()).collect();
    let sums = ln_partition_sums(ell, &ln_z);
    let s = z.total() / x;
    let terms: Vec<f64> = sums
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > f64::NEG_INFINITY)
        .map(|(m, v)| v + (1.0 - m as f64) * x.ln() + tw.ln_moment_laplace(m as u32, s))
        .collect();
    Ok(log_sum_exp(&terms).exp())
}

fn check_x(x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid("x", "must be positive and finite"));
    }
    Ok(())
}

/// Truncated `C^x(z)` with the mass not yet accounted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoagTable {
    pub x: f64,
    /// `values[ℓ - 1] = C^x(z)(ℓ)`.
    pub values: Vec<f64>,
    /// Upper bound on `Σ_{ℓ > ℓ_max} ℓ C^x(z)(ℓ)`.
    pub tail_bound: f64,
}

impl CoagTable {
    pub fn as_freq(&self) -> FreqVector {
        FreqVector::new(self.values.clone()).expect("coordinates are non-negative")
    }

    /// Writes `(ell, value, tail_bound)` rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["ell", "value", "tail_bound"])?;
        for (i, v) in self.values.iter().enumerate() {
            out.write_record(&[(i + 1).to_string(), format!("{v:e}"), format!("{:e}", self.tail_bound)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Coordinates `1..=ell_max` of `C^x(z)`.
pub fn apply_coag(z: &FreqVector, x: f64, ell_max: usize, tw: &TiltedWeight) -> Result<CoagTable> {
    check_ell(ell_max)?;
    check_x(x)?;
    let ln_z: Vec<f64> = (1..=ell_max).map(|i| z.get(i).ln()).collect();
    let s = z.total() / x;
    let ln_moments: Vec<f64> = (0..=ell_max as u32).map(|m| tw.ln_moment_laplace(m, s)).collect();
    let values: Vec<f64> = (1..=ell_max)
        .map(|ell| {
            let sums = ln_partition_sums(ell, &ln_z);
            let terms: Vec<f64> = sums
                .iter()
                .enumerate()
                .filter(|(_, v)| **v > f64::NEG_INFINITY)
                .map(|(m, v)| v + (1.0 - m as f64) * x.ln() + ln_moments[m])
                .collect();
            log_sum_exp(&terms).exp()
        })
        .collect();
    Ok(CoagTable {
        x,
        values,
        tail_bound: coag_tail_bound(z, x, ell_max, tw),
    })
}

/// Bound on `Σ_{ℓ > L} ℓ C^x(z)(ℓ)` that does not use mass conservation.
///
/// Given `Γ`, the coordinates `e^{-u|z|} [y^ℓ] e^{u ψ_y(z)}` with `u = Γ/x`
/// are the law of a compound Poisson sum `S` with cumulants
/// `κ_j = u Σ_i i^j z(i)`. Hence the tail is at most
/// `E[x E(S^r | Γ)] / (L+1)^{r-1}` for every `r ≥ 1`.
pub fn coag_tail_bound(z: &FreqVector, x: f64, ell_max: usize, tw: &TiltedWeight) -> f64 {
    const R_MAX: usize = 12;
    let power_sums: Vec<f64> = (0..=R_MAX)
        .map(|j| z.entries().iter().enumerate().map(|(i, v)| v * ((i + 1) as f64).powi(j as i32)).sum())
        .collect();
    // moments[n][m]: coefficient of u^m in E(S^n | u).
    let mut moments: Vec<Vec<f64>> = vec![vec![1.0]];
    let mut best = f64::INFINITY;
    for n in 1..=R_MAX {
        let mut poly = vec![0.0; n + 1];
        let mut binom = 1.0;
        for k in 1..=n {
            for (m, c) in moments[n - k].iter().enumerate() {
                poly[m + 1] += binom * power_sums[k] * c;
            }
            binom *= (n - k) as f64 / k as f64;
        }
        let value: f64 = poly
            .iter()
            .enumerate()
            .map(|(m, c)| c * x.powi(1 - m as i32) * tw.moment(m as u32))
            .sum();
        best = best.min(value / ((ell_max + 1) as f64).powi(n as i32 - 1));
        moments.push(poly);
    }
    best
}

/// `ψ_λ(C^x z) = E[x e^{-|z|Γ/x}(e^{ψ_λ(z)Γ/x} - 1)]`.
pub fn coag_psi_closed(z: &FreqVector, x: f64, lambda: f64, tw: &TiltedWeight) -> f64 {
    let t = z.total();
    x * tw.laplace_gap((t - z.psi(lambda)) / x, t / x)
}

/// `(1/ℓ!) d^ℓ/dλ^ℓ ψ_λ(C^x z)` by Faà di Bruno's formula:
///
/// `x Σ_{c ∈ φ⁻¹(ℓ)} Π (ψ^{(i)}_λ(z)/i!)^{c(i)} / c(i)! · x^{-|c|} E[Γ^{|c|} e^{(ψ_λ(z) - |z|)Γ/x}]`.
pub fn rho_derivative(z: &FreqVector, x: f64, ell: usize, lambda: f64, tw: &TiltedWeight) -> Result<f64> {
    check_ell(ell)?;
    check_x(x)?;
    if !(0.0..1.0).contains(&lambda.abs()) {
        return Err(invalid("lambda", "must lie in (-1, 1)"));
    }
    let coeffs: Vec<f64> = (1..=ell).map(|i| z.psi_taylor(i, lambda)).collect();
    let s = (z.total() - z.psi(lambda)) / x;
    let mut total = 0.0;
    for c in partitions_cached(ell) {
        let mut prod = (-c.ln_factorial()).exp();
        for &(i, mult) in &c.parts {
            prod *= coeffs[i as usize - 1].powi(mult as i32);
        }
        if prod == 0.0 {
            continue;
        }
        let m = c.num_parts();
        total += prod * (tw.ln_moment_laplace(m, s) + (1.0 - m as f64) * x.ln()).exp();
    }
    Ok(total)
}

/// `x (2 - δ)^{ℓ-1} / (1 - δ)^{2ℓ}`, the bound on `(1/ℓ!)|ρ^{(ℓ)}(λ)|` for `λ ∈ [0, δ]`.
pub fn maclaurin_bound(x: f64, ell: usize, delta: f64) -> f64 {
    x * (2.0 - delta).powi(ell as i32 - 1) / (1.0 - delta).powi(2 * ell as i32)
}

/// Bound `|ψ_λ(z) - ψ_λ(C^x z)| ≤ (1/x) 2λ/(1-λ)` for `λ < 1`, `1/x` at `λ = 1`.
pub fn endomorphism_bound(x: f64, lambda: f64) -> f64 {
    if lambda >= 1.0 {
        1.0 / x
    } else {
        2.0 * lambda / ((1.0 - lambda) * x)
    }
}

/// Outer function of a test function `f(z) = F(ψ_{λ_1}(z), ..., ψ_{λ_K}(z))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Outer {
    /// `F(y) = y_i`.
    Coordinate(usize),
    /// `F(y) = Π y_i`.
    Product,
    /// `F(y) = Σ c_i y_i`.
    Linear(Vec<f64>),
}

/// A member of the test-function family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub lambdas: Vec<f64>,
    pub outer: Outer,
}

impl TestFunction {
    /// `f = ψ_λ`.
    pub fn psi(lambda: f64) -> Self {
        Self {
            lambdas: vec![lambda],
            outer: Outer::Coordinate(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(invalid("lambdas", "need at least one λ in [0, 1]"));
        }
        match &self.outer {
            Outer::Coordinate(i) if *i >= self.lambdas.len() => Err(invalid("outer", "coordinate out of range")),
            Outer::Linear(c) if c.len() != self.lambdas.len() => Err(invalid("outer", "coefficient count mismatch")),
            _ => Ok(()),
        }
    }

    /// `F(y)`.
    pub fn outer_value(&self, y: &[f64]) -> f64 {
        match &self.outer {
            Outer::Coordinate(i) => y[*i],
            Outer::Product => y.iter().product(),
            Outer::Linear(c) => c.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    /// Lipschitz constant of `F` on `[0, 1]^K` in the sup norm.
    pub fn lipschitz(&self) -> f64 {
        match &self.outer {
            Outer::Coordinate(_) => 1.0,
            Outer::Product => self.lambdas.len() as f64,
            Outer::Linear(c) => c.iter().map(|a| a.abs()).sum(),
        }
    }

    pub fn eval(&self, z: &FreqVector) -> f64 {
        let y: Vec<f64> = self.lambdas.iter().map(|&l| z.psi(l)).collect();
        self.outer_value(&y)
    }

    /// `f(C^x z)` through the closed form of `ψ_λ(C^x z)`.
    pub fn eval_coag(&self, z: &FreqVector, x: f64, tw: &TiltedWeight) -> f64 {
        let y: Vec<f64> = self.lambdas.iter().map(|&l| coag_psi_closed(z, x, l, tw)).collect();
        self.outer_value(&y)
    }
}

/// Value of the limit generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorValue {
    pub value: f64,
    pub quad_error: f64,
    /// Bound on the neglected part of the `x` integral. The substitution on
    /// `[1, ∞)` covers the whole half line, so this is zero unless a cut-off
    /// is requested.
    pub tail_bound: f64,
}

/// `A f(z) = ∫_0^∞ (f(C^x z) - f(z)) ρ x^{-α} dx`.
pub fn limit_generator(
    f: &TestFunction,
    z: &FreqVector,
    rho: f64,
    alpha: f64,
    tw: &TiltedWeight,
    ctl: QuadControls,
) -> Result<GeneratorValue> {
    f.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let fz = f.eval(z);
    let q = integrate_power_measure(|x| f.eval_coag(z, x, tw) - fz, alpha, ctl);
    Ok(GeneratorValue {
        value: rho * q.value,
        quad_error: rho * q.error,
        tail_bound: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{tilted_weight_sampler, WeightLaw};
    use approx::assert_relative_eq;

    fn point() -> TiltedWeight {
        tilted_weight_sampler(&WeightLaw::Constant { c: 1.0 }, 64).unwrap()
    }

    #[test]
    fn partition_counts() {
        let counts = [1usize, 2, 3, 5, 7, 11, 15, 22, 30, 42];
        for (i, &c) in counts.iter().enumerate() {
            assert_eq!(enumerate_partitions(i + 1).unwrap().len(), c);
        }
        assert_eq!(enumerate_partitions(1).unwrap()[0].parts, vec![(1, 1)]);
        assert!(enumerate_partitions(41).is_err());
    }

    #[test]
    fn psi_examples() {
        let z = FreqVector::new(vec![0.5, 0.25]).unwrap();
        assert_relative_eq!(z.psi(0.8), 0.56, max_relative = 1e-15);
        assert_relative_eq!(z.psi(1.0), z.total());
        assert_eq!(FreqVector::singletons(1.0).psi(0.5), 0.5);
    }

    #[test]
    fn coordinate_examples() {
        let z = FreqVector::singletons(1.0);
        let tw = point();
        let e = (-1f64).exp();
        assert_relative_eq!(coag_coordinate(&z, 1.0, 1, &tw).unwrap(), e, max_relative = 1e-14);
        assert_relative_eq!(coag_coordinate(&z, 1.0, 3, &tw).unwrap(), e / 6.0, max_relative = 1e-14);
        let no_singletons = FreqVector::new(vec![0.0, 0.5]).unwrap();
        assert_eq!(coag_coordinate(&no_singletons, 1.0, 1, &tw).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_example() {
        let v = coag_psi_closed(&FreqVector::singletons(1.0), 1.0, 1.0, &point());
        assert_relative_eq!(v, 1.0 - (-1f64).exp(), max_relative = 1e-14);
        assert_eq!(coag_psi_closed(&FreqVector::singletons(1.0), 1.0, 0.0, &point()), 0.0);
    }

    #[test]
    fn poisson_table() {
        let t = apply_coag(&FreqVector::singletons(1.0), 2.0, 25, &point()).unwrap();
        for (i, v) in t.values.iter().enumerate() {
            let ell = (i + 1) as u64;
            let pois = (-0.5f64 + ell as f64 * 0.5f64.ln() - ln_factorial(ell)).exp();
            assert_relative_eq!(*v, 2.0 * pois, max_relative = 1e-12);
        }
        assert!(t.tail_bound < 1e-10, "{}", t.tail_bound);
    }

    #[test]
    fn tail_bound_dominates_missing_mass() {
        for law in [WeightLaw::Constant { c: 1.0 }, WeightLaw::Gamma { shape: 0.5, scale: 1.0 }] {
            let tw = tilted_weight_sampler(&law, 64).unwrap();
            let z = FreqVector::new(vec![0.2, 0.1, 0.0, 0.1]).unwrap();
            for &x in &[0.05, 0.3, 1.0, 4.0] {
                for ell_max in [5, 12, 30] {
                    let t = apply_coag(&z, x, ell_max, &tw).unwrap();
                    let accounted: f64 = t.values.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
                    assert!(z.mass() - accounted <= t.tail_bound * (1.0 + 1e-9) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn derivative_at_zero_is_coordinate() {
        let tw = tilted_weight_sampler(&WeightLaw::Gamma { shape: 2.0, scale: 1.0 }, 64).unwrap();
        let z = FreqVector::new(vec![0.3, 0.2, 0.1]).unwrap();
        for ell in 1..=8 {
            assert_relative_eq!(
                rho_derivative(&z, 0.7, ell, 0.0, &tw).unwrap(),
                coag_coordinate(&z, 0.7, ell, &tw).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn first_derivative_example() {
        let z = FreqVector::singletons(1.0);
        let d = rho_derivative(&z, 1.0, 1, 0.2, &point()).unwrap();
        assert_relative_eq!(d, (-1f64).exp() * 0.2f64.exp(), max_relative = 1e-14);
    }

    #[test]
    fn constant_outer_has_zero_generator() {
        let f = TestFunction {
            lambdas: vec![0.3, 0.6],
            outer: Outer::Linear(vec![0.0, 0.0]),
        };
        let v = limit_generator(&f, &FreqVector::singletons(1.0), 1.0, 0.5, &point(), QuadControls::default()).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn block_count_generator_is_negative() {
        let tw = point();
        let z = FreqVector::new(vec![0.2, 0.4]).unwrap();
        let v = limit_generator(&TestFunction::psi(1.0), &z, 1.0, 0.5, &tw, QuadControls::default()).unwrap();
        assert!(v.value < 0.0);
    }
}
