//! Numerical laboratory for Klein-Gordon propagators on a periodic 1+1
//! lattice with time-dependent coefficients.
//!
//! The pipeline: a [`geometry::ScenarioModel`] is sampled on a
//! [`geometry::Lattice`], [`discrete_operators`] assembles the first-order
//! generator `B(t)`, [`spaces`] provides the time-dependent norms,
//! [`evolution`] builds `U(t, s)` by a product of frozen-generator
//! exponentials, [`propagators`] derives every propagator from `U` and the
//! frequency projections, and [`verification`] checks the identities they
//! must satisfy.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discrete_operators;
pub mod error;
pub mod evolution;
pub mod expm;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod propagators;
pub mod rng;
pub mod spaces;
pub mod verification;

pub use error::{Error, Result};
