//! One module per group of acceptance criteria.

pub mod blocks;
pub mod coag;
pub mod flow;
pub mod generator;
pub mod repro;
pub mod sfs;
pub mod urn;
pub mod weights;

use xicoal::model::WeightLaw;
use xicoal::numerics::stats::Moments;

/// Short label of a weight law for tables.
pub fn law_label(law: &WeightLaw) -> String {
    match law {
        WeightLaw::Constant { c } => format!("constant({c})"),
        WeightLaw::Gamma { shape, scale } => format!("gamma({shape},{scale})"),
        WeightLaw::LogNormal { mu, sigma } => format!("lognormal({mu},{sigma})"),
        WeightLaw::FiniteDiscrete { values, probs } => format!("discrete({values:?},{probs:?})"),
    }
}

/// Laws drawn by the randomized operator checks.
pub fn law_menu() -> Vec<WeightLaw> {
    vec![
        WeightLaw::Constant { c: 1.0 },
        WeightLaw::Gamma { shape: 1.0, scale: 1.0 },
        WeightLaw::Gamma { shape: 2.0, scale: 1.0 },
        WeightLaw::Gamma { shape: 0.5, scale: 3.0 },
        WeightLaw::LogNormal { mu: 0.0, sigma: 0.5 },
        WeightLaw::FiniteDiscrete {
            values: vec![0.5, 1.0, 2.0],
            probs: vec![0.3, 0.4, 0.3],
        },
    ]
}

/// `|a - b|` in units of the combined standard error.
pub fn z_score(a: &Moments, b: &Moments) -> f64 {
    (a.mean - b.mean) / combined_se(a, b)
}

pub fn combined_se(a: &Moments, b: &Moments) -> f64 {
    (a.std_err().powi(2) + b.std_err().powi(2)).sqrt()
}
