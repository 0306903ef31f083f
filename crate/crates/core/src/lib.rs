//! Linear, energy-stable time integrators for Allen–Cahn and Cahn–Hilliard
//! gradient flows on a doubly periodic grid.
//!
//! The schemes replace the double-well energy density by an auxiliary
//! variable (`c(r) = F + A₁` for IEC, `r·g(r) = F + A₁` for IEF, or a scalar
//! `c(r) = ∫F + A₂` for C-SAV), which makes every step a single linear solve
//! while preserving a discrete energy law.

pub mod auxfun;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod schemes;
