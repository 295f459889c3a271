//! Special functions and power sums.

pub use statrs::function::gamma::ln_gamma;

/// `ln n!`.
pub fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// `ln Σ exp(x_i)` computed stably. Returns `-∞` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

const EXPLICIT_TERMS: u64 = 48;

/// `Σ_{k=a}^{b} k^{-s}` for `1 ≤ a`. `b = None` means `∞` and needs `s > 1`.
///
/// Short ranges are summed explicitly. Long ranges use the Euler-Maclaurin
/// formula after the first terms, which is accurate to about `1e-14` relative.
pub fn power_sum(s: f64, a: u64, b: Option<u64>) -> f64 {
    assert!(a >= 1, "power_sum needs a >= 1");
    if let Some(b) = b {
        if b < a {
            return 0.0;
        }
        if b - a < 4 * EXPLICIT_TERMS {
            return (a..=b).rev().map(|k| (k as f64).powf(-s)).sum();
        }
    } else {
        assert!(s > 1.0, "infinite power sum needs s > 1");
    }
    let m = a + EXPLICIT_TERMS;
    let head: f64 = (a..m).rev().map(|k| (k as f64).powf(-s)).sum();
    head + em_tail(s, m as f64, b.map(|b| b as f64))
}

/// Euler-Maclaurin evaluation of `Σ_{k=m}^{b} k^{-s}` with `m ≥ 48`.
fn em_tail(s: f64, m: f64, b: Option<f64>) -> f64 {
    let f = |x: f64| x.powf(-s);
    // Odd derivatives f^(2j-1)(x) = -s(s+1)...(s+2j-2) x^{-s-2j+1}.
    let deriv = |x: f64, order: i32| {
        let mut c = -1.0;
        for i in 0..order {
            c *= s + i as f64;
        }
        c * x.powf(-s - order as f64)
    };
    let coeffs = [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0];
    let integral = match b {
        Some(b) if (s - 1.0).abs() < 1e-15 => (b / m).ln(),
        Some(b) => (b.powf(1.0 - s) - m.powf(1.0 - s)) / (1.0 - s),
        None => m.powf(1.0 - s) / (s - 1.0),
    };
    let mut total = integral + 0.5 * (f(m) + b.map_or(0.0, f));
    for (j, c) in coeffs.iter().enumerate() {
        let order = 2 * j as i32 + 1;
        let upper = b.map_or(0.0, |b| deriv(b, order));
        total += c * (upper - deriv(m, order));
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_sum_matches_explicit_loop() {
        for &s in &[0.3, 0.5, 1.0, 1.5, 2.7] {
            for &(a, b) in &[(1u64, 10_000u64), (7, 3_001), (65_537, 400_000)] {
                let direct: f64 = (a..=b).rev().map(|k| (k as f64).powf(-s)).sum();
                assert_relative_eq!(power_sum(s, a, Some(b)), direct, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn zeta_values() {
        assert_relative_eq!(
            power_sum(2.0, 1, None),
            std::f64::consts::PI.powi(2) / 6.0,
            max_relative = 1e-13
        );
        assert_relative_eq!(power_sum(1.5, 1, None), 2.612_375_348_685_488, max_relative = 1e-13);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
