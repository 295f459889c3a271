//! Adaptive Gauss-Kronrod quadrature.

use serde::{Deserialize, Serialize};

/// Value of an integral with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadValue {
    pub value: f64,
    pub error: f64,
}

impl QuadValue {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }
}

impl std::ops::Add for QuadValue {
    type Output = QuadValue;
    fn add(self, o: QuadValue) -> QuadValue {
        QuadValue::new(self.value + o.value, self.error + o.error)
    }
}

/// Tolerances and subdivision budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadControls {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadControls {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_intervals: 2000,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Integrates `f` over the finite interval `[a, b]` by globally adaptive
/// G7-K15 bisection.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, ctl: QuadControls) -> QuadValue {
    if a == b {
        return QuadValue::new(0.0, 0.0);
    }
    let (v, e) = kronrod15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > ctl.abs_tol.max(ctl.rel_tol * total.abs()) && parts.len() < ctl.max_intervals {
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, pv, pe) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            parts.push((lo, hi, pv, pe));
            break;
        }
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        total = parts.iter().map(|p| p.2).sum();
        err = parts.iter().map(|p| p.3).sum();
    }
    QuadValue::new(total, err)
}

/// Integrates `h(x) x^{-α}` over `(0, ∞)` for `0 < α < 1`.
///
/// The domain is split at one. On `(0, 1]` the substitution `x = u^{1/(1-α)}`
/// removes the power singularity. On `[1, ∞)` the substitution `x = w^{-1/α}`
/// maps to `(0, 1]`. `h` must be bounded near zero and `O(1/x)` at infinity.
pub fn integrate_power_measure<H: Fn(f64) -> f64>(h: H, alpha: f64, ctl: QuadControls) -> QuadValue {
    let beta = 1.0 - alpha;
    // ∫_0^1 h(x) x^{-α} dx = (1/β) ∫_0^1 h(u^{1/β}) du.
    let inner = integrate(|u| h(u.powf(1.0 / beta)) / beta, 0.0, 1.0, ctl);
    // ∫_1^∞ h(x) x^{-α} dx = (1/α) ∫_0^1 h(w^{-1/α}) w^{-1/α} dw.
    let outer = integrate(
        |w| {
            if w <= 0.0 {
                0.0
            } else {
                let x = w.powf(-1.0 / alpha);
                h(x) * x / alpha
            }
        },
        0.0,
        1.0,
        ctl,
    );
    inner + outer
}

/// Integrates `h(a) a^{-α}` over `[lo, ∞)` with `lo > 0` via `a = lo w^{-1/α}`.
pub fn integrate_power_tail<H: Fn(f64) -> f64>(h: H, alpha: f64, lo: f64, ctl: QuadControls) -> QuadValue {
    let scale = lo.powf(1.0 - alpha) / alpha;
    let q = integrate(
        |w| {
            if w <= 0.0 {
                0.0
            } else {
                let t = w.powf(-1.0 / alpha);
                h(lo * t) * t
            }
        },
        0.0,
        1.0,
        ctl,
    );
    QuadValue::new(q.value * scale, q.error * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomials_are_exact() {
        let q = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, QuadControls::default());
        assert_relative_eq!(q.value, 64.0 / 6.0 - 4.0, max_relative = 1e-14);
    }

    #[test]
    fn power_measure_gamma_function() {
        // ∫ x e^{-x} x^{-1/2} dx = Γ(3/2).
        let q = integrate_power_measure(|x| x * (-x).exp(), 0.5, QuadControls::default());
        assert_relative_eq!(q.value, std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn power_tail() {
        let q = integrate_power_tail(|a| 1.0 / a, 0.5, 4.0, QuadControls::default());
        // ∫_4^∞ a^{-3/2} da = 2 / 2 = 1.
        assert_relative_eq!(q.value, 1.0, max_relative = 1e-11);
    }
}
