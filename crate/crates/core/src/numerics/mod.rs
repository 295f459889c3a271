//! Numerical building blocks: quadrature, Gaussian rules, special sums and
//! mergeable statistics.

pub mod gauss;
pub mod quad;
pub mod special;
pub mod stats;
