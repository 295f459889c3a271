//! Simulation and verification toolkit for general Dirichlet Ξ-coalescents.
//!
//! The crate is organised around the objects of the model:
//!
//! * [`model`]: weight laws, the rate sequence `R(k)`, the tilted weight
//!   `Γ = w₁ / E(w₁)` and its expectation rules.
//! * [`paintbox`]: exact simulation of the finite-`n` block counting process.
//! * [`coag`]: the limiting coagulation operator `C^x`, the generating
//!   functions `ψ_λ` and the limit generator.
//! * [`limitflow`]: the jump flow `(ξ, x^λ)`, its subordinator and the
//!   Lamperti-Kiu reconstruction of the limit process.
//! * [`urnstats`]: exact total-variation distances for urn allocations and the
//!   Poisson approximation bounds they are compared with.
//! * [`sfs`]: site frequency spectra of simulated genealogies and their limit.

pub mod coag;
pub mod error;
pub mod limitflow;
pub mod model;
pub mod numerics;
pub mod paintbox;
pub mod rng;
pub mod sfs;
pub mod urnstats;

pub use error::{Error, Result};
