//! Gaussian quadrature rules by the Golub-Welsch algorithm.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// `Σ w_i f(x_i)`.
    pub fn apply<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Rule from the Jacobi matrix with diagonal `diag`, off-diagonal `off` and
/// total weight `mu0`.
pub fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> GaussRule {
    let n = diag.len();
    assert_eq!(off.len() + 1, n);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jac[(i, i)] = diag[i];
        if i + 1 < n {
            jac[(i, i + 1)] = off[i];
            jac[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Legendre rule on `[-1, 1]`.
pub fn legendre(n: usize) -> GaussRule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&diag, &off, 2.0)
}

/// Generalised Gauss-Laguerre rule for the weight `x^p e^{-x}` on `(0, ∞)`.
pub fn laguerre(n: usize, p: f64) -> GaussRule {
    let diag: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + p + 1.0).collect();
    let off: Vec<f64> = (1..n)
        .map(|i| {
            let i = i as f64;
            (i * (i + p)).sqrt()
        })
        .collect();
    golub_welsch(&diag, &off, super::special::ln_gamma(p + 1.0).exp())
}

/// Gauss-Hermite rule for the standard normal density.
pub fn hermite_normal(n: usize) -> GaussRule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|i| (i as f64).sqrt()).collect();
    golub_welsch(&diag, &off, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = legendre(8);
        assert_relative_eq!(r.apply(|x| x.powi(14)), 2.0 / 15.0, max_relative = 1e-13);
    }

    #[test]
    fn laguerre_moments() {
        let r = laguerre(32, 0.5);
        // ∫ x^3 x^{1/2} e^{-x} dx = Γ(4.5).
        assert_relative_eq!(r.apply(|x| x.powi(3)), 11.631_728_396_567_45, max_relative = 1e-11);
    }

    #[test]
    fn hermite_normal_moments() {
        let r = hermite_normal(20);
        assert_relative_eq!(r.apply(|_| 1.0), 1.0, max_relative = 1e-13);
        assert_relative_eq!(r.apply(|x| x.powi(4)), 3.0, max_relative = 1e-12);
        assert_relative_eq!(r.apply(|x| (0.5 * x).exp()), (0.125f64).exp(), max_relative = 1e-13);
    }
}
