//! Desk-scale computations in uniform Diophantine approximation with general
//! weight functions: solvability oracles for weighted Dirichlet systems,
//! lattice transference checks with explicit constants, flow-systole traces
//! for badly approximable matrices, and seeded Monte Carlo measure
//! experiments for the associated zero-one laws.

// negated comparisons like !(x > 0.0) are deliberate NaN guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod badapprox;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};
