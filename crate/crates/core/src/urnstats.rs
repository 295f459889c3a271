//! Total-variation distances for urn allocations and their Poisson
//! approximations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::WeightLaw;
use crate::numerics::special::ln_factorial;
use crate::numerics::stats::Moments;
use crate::rng::SimRng;

/// Mass below which a distribution's tail is cut.
pub const TAIL_EPS: f64 = 1e-12;
/// Cap on the number of joint outcomes enumerated.
pub const MAX_OUTCOMES: u64 = 1_000_000;

/// A distribution on `{0, 1, ..., len - 1}` plus the mass it leaves out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub mass: Vec<f64>,
    pub tail: f64,
}

impl Pmf {
    pub fn point(at: usize) -> Self {
        let mut mass = vec![0.0; at + 1];
        mass[at] = 1.0;
        Self { mass, tail: 0.0 }
    }

    /// Binomial `(n, p)`, exact.
    pub fn binomial(n: u64, p: f64) -> Self {
        let mass = (0..=n)
            .map(|j| {
                if p == 0.0 {
                    return if j == 0 { 1.0 } else { 0.0 };
                }
                if p == 1.0 {
                    return if j == n { 1.0 } else { 0.0 };
                }
                (ln_factorial(n) - ln_factorial(j) - ln_factorial(n - j)
                    + j as f64 * p.ln()
                    + (n - j) as f64 * (-p).ln_1p())
                .exp()
            })
            .collect();
        Self { mass, tail: 0.0 }
    }

    /// Poisson with the given mean, truncated once the remaining mass is
    /// below [`TAIL_EPS`].
    pub fn poisson(mean: f64) -> Self {
        if mean == 0.0 {
            return Self::point(0);
        }
        let mut mass = Vec::new();
        let mut acc = 0.0;
        let mut j = 0u64;
        loop {
            let m = (-mean + j as f64 * mean.ln() - ln_factorial(j)).exp();
            mass.push(m);
            acc += m;
            j += 1;
            if j as f64 > mean && 1.0 - acc < TAIL_EPS {
                break;
            }
        }
        let tail = (1.0 - acc).max(0.0);
        Self { mass, tail }
    }
}

/// A total-variation distance known up to the truncated tails:
/// the true value lies in `[value, value + uncertainty]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tv {
    pub value: f64,
    pub uncertainty: f64,
}

impl Tv {
    pub fn upper(&self) -> f64 {
        (self.value + self.uncertainty).min(1.0)
    }
}

/// `½ Σ |ν₁(x) - ν₂(x)|` on the common truncated support.
pub fn exact_tv(a: &Pmf, b: &Pmf) -> Tv {
    let len = a.mass.len().max(b.mass.len());
    let s: f64 = (0..len)
        .map(|i| (a.mass.get(i).copied().unwrap_or(0.0) - b.mass.get(i).copied().unwrap_or(0.0)).abs())
        .sum();
    Tv {
        value: 0.5 * s,
        uncertainty: 0.5 * (a.tail + b.tail),
    }
}

/// TV between two products of independent coordinates, by enumeration of the
/// product grid.
pub fn exact_tv_product(a: &[Pmf], b: &[Pmf]) -> Result<Tv> {
    assert_eq!(a.len(), b.len());
    let dims: Vec<usize> = a.iter().zip(b).map(|(x, y)| x.mass.len().max(y.mass.len())).collect();
    let outcomes = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64)).unwrap_or(u64::MAX);
    if outcomes > MAX_OUTCOMES {
        return Err(Error::Capacity {
            what: "joint outcomes",
            value: outcomes,
            limit: MAX_OUTCOMES,
        });
    }
    let get = |p: &Pmf, i: usize| p.mass.get(i).copied().unwrap_or(0.0);
    let mut idx = vec![0usize; dims.len()];
    let mut s = 0.0;
    loop {
        let pa: f64 = a.iter().zip(&idx).map(|(p, &i)| get(p, i)).product();
        let pb: f64 = b.iter().zip(&idx).map(|(p, &i)| get(p, i)).product();
        s += (pa - pb).abs();
        let mut d = 0;
        loop {
            if d == dims.len() {
                let tails = |ps: &[Pmf]| 1.0 - ps.iter().map(|p| 1.0 - p.tail).product::<f64>();
                return Ok(Tv {
                    value: 0.5 * s,
                    uncertainty: 0.5 * (tails(a) + tails(b)),
                });
            }
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// `min{p₁, p₁² n} + (n/k)|y - k p₁|`.
pub fn bound_single_urn(n: u64, p1: f64, k: u64, y: f64) -> f64 {
    let n_f = n as f64;
    (p1).min(p1 * p1 * n_f) + n_f / k as f64 * (y - k as f64 * p1).abs()
}

/// `d_TV(Bin(n, p₁), Poisson(yn/k))`.
pub fn exact_tv_single_urn(n: u64, p1: f64, k: u64, y: f64) -> Tv {
    exact_tv(&Pmf::binomial(n, p1), &Pmf::poisson(y * n as f64 / k as f64))
}

/// `(p₁ + p₂)² n`.
pub fn bound_two_urns(n: u64, p1: f64, p2: f64) -> f64 {
    (p1 + p2).powi(2) * n as f64
}

/// Joint TV between the first two coordinates of a multinomial
/// `(n; p₁, p₂, 1 - p₁ - p₂)` and independent Poissons `(p₁n, p₂n)`, by full
/// enumeration.
pub fn exact_tv_two_urns(n: u64, p1: f64, p2: f64) -> Tv {
    let w1 = Pmf::poisson(p1 * n as f64);
    let w2 = Pmf::poisson(p2 * n as f64);
    let rest = 1.0 - p1 - p2;
    let (l1, l2) = (w1.mass.len().max(n as usize + 1), w2.mass.len().max(n as usize + 1));
    let get = |p: &Pmf, i: usize| p.mass.get(i).copied().unwrap_or(0.0);
    let mut s = 0.0;
    for i in 0..l1 {
        for j in 0..l2 {
            let multi = if (i + j) as u64 <= n {
                let (i64_, j64) = (i as u64, j as u64);
                let ln = ln_factorial(n) - ln_factorial(i64_) - ln_factorial(j64) - ln_factorial(n - i64_ - j64);
                let mut t = ln;
                t += if i > 0 { i as f64 * p1.ln() } else { 0.0 };
                t += if j > 0 { j as f64 * p2.ln() } else { 0.0 };
                let r = n - i64_ - j64;
                if r > 0 {
                    t += r as f64 * rest.ln();
                }
                if (i > 0 && p1 == 0.0) || (j > 0 && p2 == 0.0) || (r > 0 && rest <= 0.0) {
                    0.0
                } else {
                    t.exp()
                }
            } else {
                0.0
            };
            s += (multi - get(&w1, i) * get(&w2, j)).abs();
        }
    }
    Tv {
        value: 0.5 * s,
        uncertainty: 0.5 * (1.0 - (1.0 - w1.tail) * (1.0 - w2.tail)),
    }
}

fn n_bar(counts: &[u64]) -> f64 {
    counts.iter().copied().max().unwrap_or(0) as f64
}

/// `(ℓ+1)(min{p₁, p₁² N̄} + (N̄/k)|y₁ - k p₁|)` where `counts` has length `ℓ+1`.
pub fn bound_multisize(counts: &[u64], p1: f64, k: u64, y1: f64) -> f64 {
    let nb = n_bar(counts);
    counts.len() as f64 * (p1.min(p1 * p1 * nb) + nb / k as f64 * (y1 - k as f64 * p1).abs())
}

/// Exact TV between `⊗ Bin(N_i, p₁)` and `⊗ Poisson(y₁ N_i / k)`.
pub fn exact_tv_multisize(counts: &[u64], p1: f64, k: u64, y1: f64) -> Result<Tv> {
    let a: Vec<Pmf> = counts.iter().map(|&n| Pmf::binomial(n, p1)).collect();
    let b: Vec<Pmf> = counts.iter().map(|&n| Pmf::poisson(y1 * n as f64 / k as f64)).collect();
    exact_tv_product(&a, &b)
}

/// `(ℓ+1)(p₁ + p₂)² N̄`.
pub fn bound_multisize_two_urns(counts: &[u64], p1: f64, p2: f64) -> f64 {
    counts.len() as f64 * (p1 + p2).powi(2) * n_bar(counts)
}

/// `(ℓ+1) p_j² N̄`.
pub fn bound_multisize_marginal(counts: &[u64], pj: f64) -> f64 {
    counts.len() as f64 * pj * pj * n_bar(counts)
}

/// Exact joint TV for balls of several sizes thrown into two urns, against
/// independent Poisson pairs.
///
/// Given the totals `Z_i = X₁⁽ⁱ⁾ + X₂⁽ⁱ⁾`, both laws split each total by the
/// same binomial kernel, so the joint distance equals the distance between
/// `⊗ Bin(N_i, p₁+p₂)` and `⊗ Poisson((p₁+p₂) N_i)`.
pub fn exact_tv_multisize_two_urns(counts: &[u64], p1: f64, p2: f64) -> Result<Tv> {
    let q = p1 + p2;
    let a: Vec<Pmf> = counts.iter().map(|&n| Pmf::binomial(n, q)).collect();
    let b: Vec<Pmf> = counts.iter().map(|&n| Pmf::poisson(q * n as f64)).collect();
    exact_tv_product(&a, &b)
}

/// Same distance by enumerating every `(X₁⁽ⁱ⁾, X₂⁽ⁱ⁾)` pair directly. Only
/// feasible for tiny cases; used to validate the reduction.
pub fn exact_tv_multisize_two_urns_direct(counts: &[u64], p1: f64, p2: f64) -> Result<Tv> {
    // Flatten each size's pair into a single coordinate on a square grid.
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &n in counts {
        let w1 = Pmf::poisson(p1 * n as f64);
        let w2 = Pmf::poisson(p2 * n as f64);
        let side = w1.mass.len().max(w2.mass.len()).max(n as usize + 1);
        let mut ma = vec![0.0; side * side];
        let mut mb = vec![0.0; side * side];
        let rest = 1.0 - p1 - p2;
        for i in 0..side {
            for j in 0..side {
                if (i + j) as u64 <= n {
                    let (iu, ju) = (i as u64, j as u64);
                    let r = n - iu - ju;
                    let coef = ln_factorial(n) - ln_factorial(iu) - ln_factorial(ju) - ln_factorial(r);
                    let v = coef.exp() * p1.powi(i as i32) * p2.powi(j as i32) * rest.powi(r as i32);
                    ma[i * side + j] = v;
                }
                mb[i * side + j] = w1.mass.get(i).copied().unwrap_or(0.0) * w2.mass.get(j).copied().unwrap_or(0.0);
            }
        }
        a.push(Pmf { mass: ma, tail: 0.0 });
        b.push(Pmf {
            mass: mb,
            tail: 1.0 - (1.0 - w1.tail) * (1.0 - w2.tail),
        });
    }
    exact_tv_product(&a, &b)
}

/// Outcome of repeated throws of a configuration of balls into boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLossReport {
    pub samples: usize,
    /// Largest observed `|N_m - C(N)(m)| - 2(|N| - |C(N)|)`; never positive.
    pub worst_pathwise_excess: f64,
    pub mean_loss: f64,
    pub mean_loss_err: f64,
    /// `|N|² Σ p_j²`.
    pub bound: f64,
}

impl BlockLossReport {
    pub fn pathwise_holds(&self) -> bool {
        self.worst_pathwise_excess <= 0.0
    }

    pub fn mean_within_bound(&self) -> bool {
        self.mean_loss - 3.0 * self.mean_loss_err <= self.bound
    }
}

/// Throws balls with the given `sizes` into boxes with probabilities `p`
/// `samples` times, checking the path-wise size-census inequality and the
/// expected block loss.
pub fn block_loss_check(sizes: &[u64], p: &[f64], samples: usize, rng: &mut SimRng) -> BlockLossReport {
    let n = sizes.len();
    let max_size: u64 = sizes.iter().sum();
    let mut census_before = vec![0i64; max_size as usize + 1];
    sizes.iter().for_each(|&s| census_before[s as usize] += 1);
    let cum: Vec<f64> = p
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect();
    let total = *cum.last().unwrap_or(&1.0);
    let mut box_size = vec![0u64; p.len()];
    let mut loss = Moments::new();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        box_size.iter_mut().for_each(|b| *b = 0);
        for &s in sizes {
            let u: f64 = rng.random::<f64>() * total;
            let j = cum.partition_point(|&c| c <= u).min(p.len() - 1);
            box_size[j] += s;
        }
        let mut census_after = vec![0i64; max_size as usize + 1];
        let mut blocks_after = 0i64;
        for &b in box_size.iter().filter(|&&b| b > 0) {
            census_after[b as usize] += 1;
            blocks_after += 1;
        }
        let l = n as i64 - blocks_after;
        loss.push(l as f64);
        for m in 1..=max_size as usize {
            let excess = (census_before[m] - census_after[m]).abs() - 2 * l;
            worst = worst.max(excess as f64);
        }
    }
    BlockLossReport {
        samples,
        worst_pathwise_excess: worst,
        mean_loss: loss.mean,
        mean_loss_err: if samples > 1 { loss.std_err() } else { 0.0 },
        bound: (n * n) as f64 * p.iter().map(|x| x * x).sum::<f64>(),
    }
}

/// `g_{v,c}(x) = x^{|c|} e^{-v(ℓ+1) x} Π_i v(i)^{c(i)} / c(i)!`, with `v`
/// of length `ℓ + 1` and `c` given as `(part, multiplicity)` pairs.
pub fn g_vc(v: &[f64], c: &[(u32, u32)], x: f64) -> f64 {
    let ell = v.len() - 1;
    let mut ln = -v[ell] * x;
    let mut parts = 0u32;
    for &(i, m) in c {
        ln += m as f64 * v[i as usize - 1].ln() - ln_factorial(m as u64);
        parts += m;
    }
    if parts > 0 {
        ln += parts as f64 * x.ln();
    }
    ln.exp()
}

/// One point of a covariance-decay sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovPoint {
    pub k: u64,
    pub covariance: f64,
    pub std_err: f64,
    pub max_abs_g: f64,
}

/// Monte-Carlo `Cov(g_{v,c₁}(k p₁), g_{v,c₂}(k p₂))` over a grid of `k`.
pub fn cov_decay_check(
    law: &WeightLaw,
    v: &[f64],
    c1: &[(u32, u32)],
    c2: &[(u32, u32)],
    k_grid: &[u64],
    samples: usize,
    rng: &mut SimRng,
) -> Vec<CovPoint> {
    k_grid
        .iter()
        .map(|&k| {
            let mut xs = Vec::with_capacity(samples);
            let mut ys = Vec::with_capacity(samples);
            let mut max_abs = 0.0f64;
            for _ in 0..samples {
                let c = law.sample_scaled_components(k, 2, rng);
                let (a, b) = (g_vc(v, c1, c[0]), g_vc(v, c2, c[1]));
                max_abs = max_abs.max(a.abs()).max(b.abs());
                xs.push(a);
                ys.push(b);
            }
            let ma = xs.iter().sum::<f64>() / samples as f64;
            let mb = ys.iter().sum::<f64>() / samples as f64;
            let terms: Moments = xs.iter().zip(&ys).map(|(a, b)| (a - ma) * (b - mb)).collect();
            CovPoint {
                k,
                covariance: terms.mean * samples as f64 / (samples as f64 - 1.0),
                std_err: terms.std_err(),
                max_abs_g: max_abs,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, StreamTag};
    use approx::assert_abs_diff_eq;

    #[test]
    fn tv_examples() {
        let b = Pmf::binomial(2, 0.5);
        let p = Pmf::poisson(1.0);
        let tv = exact_tv(&b, &p);
        assert_abs_diff_eq!(tv.value, 0.198_180, epsilon = 1e-6);
        assert!(tv.uncertainty < 1e-12);
        assert_eq!(exact_tv(&Pmf::point(0), &Pmf::point(1)).value, 1.0);
        assert_eq!(exact_tv(&b, &b).value, 0.0);
    }

    #[test]
    fn single_urn_example() {
        assert_abs_diff_eq!(bound_single_urn(10, 0.1, 3, 0.3), 0.1, epsilon = 1e-15);
        let tv = exact_tv_single_urn(10, 0.1, 3, 0.3);
        assert!(tv.upper() <= 0.1);
    }

    #[test]
    fn empty_urn_against_poisson() {
        let tv = exact_tv_single_urn(5, 0.0, 2, 0.4);
        assert_abs_diff_eq!(tv.value, 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
        assert!(tv.upper() <= bound_single_urn(5, 0.0, 2, 0.4));
    }

    #[test]
    fn two_urn_reduction_matches_enumeration() {
        let direct = exact_tv_two_urns(4, 0.25, 0.25);
        let reduced = exact_tv(&Pmf::binomial(4, 0.5), &Pmf::poisson(2.0));
        assert_abs_diff_eq!(direct.value, reduced.value, epsilon = 1e-10);
        assert!(direct.upper() <= 1.0);
        let counts = [2u64, 3];
        let a = exact_tv_multisize_two_urns(&counts, 0.1, 0.2).unwrap();
        let b = exact_tv_multisize_two_urns_direct(&counts, 0.1, 0.2).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-10);
    }

    #[test]
    fn multisize_example() {
        assert_abs_diff_eq!(bound_multisize(&[3, 3], 0.2, 5, 1.0), 0.24, epsilon = 1e-12);
        let tv = exact_tv_multisize(&[3, 3], 0.2, 5, 1.0).unwrap();
        assert!(tv.upper() <= 0.24);
        assert_eq!(bound_multisize(&[7], 0.1, 2, 0.3), bound_single_urn(7, 0.1, 2, 0.3));
    }

    #[test]
    fn block_loss_two_singletons() {
        let mut rng = stream(3, StreamTag::Urn, 0);
        let r = block_loss_check(&[1, 1], &[0.5, 0.5], 20_000, &mut rng);
        assert!(r.pathwise_holds());
        assert!((r.mean_loss - 0.5).abs() < 4.0 * r.mean_loss_err);
        assert_eq!(r.bound, 2.0);
        let one_box = block_loss_check(&[1, 2, 3], &[1.0], 10, &mut rng);
        assert_eq!(one_box.mean_loss, 2.0);
    }

    #[test]
    fn constant_law_has_no_covariance() {
        let mut rng = stream(4, StreamTag::Urn, 0);
        let pts = cov_decay_check(&WeightLaw::Constant { c: 1.0 }, &[0.5, 1.0], &[(1, 1)], &[(1, 1)], &[16], 100, &mut rng);
        assert!(pts[0].covariance.abs() < 1e-20);
    }
}
