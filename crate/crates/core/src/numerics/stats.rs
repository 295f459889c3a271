//! Mergeable accumulators and classical tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

/// Running mean and variance (Welford), mergeable across workers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2 / (self.count - 1) as f64
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Running covariance of pairs, mergeable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoMoments {
    pub x: Moments,
    pub y: Moments,
    cxy: f64,
}

impl CoMoments {
    pub fn push(&mut self, x: f64, y: f64) {
        let dx = x - self.x.mean;
        self.x.push(x);
        self.y.push(y);
        self.cxy += dx * (y - self.y.mean);
    }

    pub fn merge(&mut self, o: &CoMoments) {
        let (n1, n2) = (self.x.count as f64, o.x.count as f64);
        if n2 == 0.0 {
            return;
        }
        let dx = o.x.mean - self.x.mean;
        let dy = o.y.mean - self.y.mean;
        self.cxy += o.cxy + dx * dy * n1 * n2 / (n1 + n2);
        self.x.merge(&o.x);
        self.y.merge(&o.y);
    }

    pub fn covariance(&self) -> f64 {
        self.cxy / (self.x.count as f64 - 1.0)
    }

    pub fn correlation(&self) -> f64 {
        self.covariance() / (self.x.variance() * self.y.variance()).sqrt()
    }
}

/// Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=200 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        s += if j as u64 % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Outcome of a hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub sizes: Vec<usize>,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic null law.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> TestOutcome {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lam = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    TestOutcome {
        name: "ks_two_sample".into(),
        statistic: d,
        p_value: kolmogorov_survival(lam),
        sizes: vec![n, m],
    }
}

/// One-sample Kolmogorov-Smirnov test against a continuous cdf.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> TestOutcome {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let lam = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    TestOutcome {
        name: "ks_one_sample".into(),
        statistic: d,
        p_value: kolmogorov_survival(lam),
        sizes: vec![s.len()],
    }
}

/// Test of zero correlation by the Fisher transform.
pub fn fisher_z_test(r: f64, n: usize) -> TestOutcome {
    let z = r.clamp(-0.999_999_999, 0.999_999_999).atanh() * (n as f64 - 3.0).sqrt();
    TestOutcome {
        name: "fisher_z".into(),
        statistic: r,
        p_value: erfc(z.abs() / std::f64::consts::SQRT_2),
        sizes: vec![n],
    }
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let all: Moments = xs.iter().copied().collect();
        let mut a: Moments = xs[..33].iter().copied().collect();
        let b: Moments = xs[33..].iter().copied().collect();
        a.merge(&b);
        assert_relative_eq!(a.mean, all.mean, max_relative = 1e-13);
        assert_relative_eq!(a.variance(), all.variance(), max_relative = 1e-12);
    }

    #[test]
    fn comoments_merge_matches_direct() {
        let pts: Vec<(f64, f64)> = (0..50)
            .map(|i| (i as f64, ((i * i) % 17) as f64 + 0.5 * i as f64))
            .collect();
        let mut all = CoMoments::default();
        pts.iter().for_each(|&(x, y)| all.push(x, y));
        let (mx, my) = (24.5, pts.iter().map(|p| p.1).sum::<f64>() / 50.0);
        let cov: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / 49.0;
        assert_relative_eq!(all.covariance(), cov, max_relative = 1e-12);
        let mut a = CoMoments::default();
        let mut b = CoMoments::default();
        pts[..20].iter().for_each(|&(x, y)| a.push(x, y));
        pts[20..].iter().for_each(|&(x, y)| b.push(x, y));
        a.merge(&b);
        assert_relative_eq!(a.covariance(), cov, max_relative = 1e-12);
    }

    #[test]
    fn kolmogorov_known_value() {
        // P(K > 1.36) ≈ 0.0494.
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 5e-4);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let t = ks_two_sample(&a, &a);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }
}
