//! Quasi-stationary and stationary laws of the diffusion limit of neutral
//! multi-type branching processes.
//!
//! The crate covers the single-type Feller diffusion ([`feller`]), the
//! scaled mutation-rate model ([`rates`]), exact and small-θ moments and
//! sampling probabilities ([`moments`]), the small-θ quasi-stationary
//! density ([`density`]) and a discrete Bienaymé–Galton–Watson oracle
//! ([`bgw`]) used to check the continuum results.
//!
//! All continuum formulas for d ≥ 2 types are written at the reference
//! growth rate α = −½ and mapped to other α by rescaling.

#![deny(missing_docs)]
// NaN must fail validation, so checks are written as !(x > 0.0).
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod bgw;
pub mod density;
mod error;
pub mod feller;
pub mod moments;
pub mod parse;
pub mod quad;
pub mod rates;
pub mod specfun;

pub use error::{Error, Result};
