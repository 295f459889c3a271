//! Verification experiments and report plumbing behind the `xicoal` binary.

pub mod experiments;
pub mod report;
pub mod suite;
