//! Numerical KAM reducibility for finite truncations of linear quasi-periodic
//! Hamiltonian systems (derivative wave and half-wave equations) under
//! Brjuno–Rüssmann non-resonance conditions.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approxfn;
pub mod error;
pub mod flow;
pub mod hamrep;
pub mod homological;
pub mod kamloop;
pub mod linalg;
pub mod models;
pub mod numeric;
pub mod smalldiv;
pub mod verify;

pub use error::{Error, Result};
