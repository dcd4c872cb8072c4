//! Dynamic risk measures induced by BSDEs with a default time.
//!
//! The crate simulates a Cox default model on top of a Brownian filtration,
//! evaluates entropic risk measures before and after default in closed form
//! and with a regression BSDE solver, checks the risk-measure axioms, and
//! verifies the penalty decomposition of the dual representation on finite
//! trees by enumeration.

pub mod axioms;
pub mod bsde;
pub mod claims;
pub mod dual;
pub mod entropic;
pub mod error;
pub mod paths;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
