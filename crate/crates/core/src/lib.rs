//! Numerical laboratory for the quantum and classical lattice nonlinear
//! Schrödinger model.
//!
//! The crate builds the lattice L-operator on truncated bosonic Fock spaces,
//! checks the algebraic identities of the quantum inverse scattering method
//! by residuals, solves the Bethe equations and compares Bethe-ansatz data
//! with exact diagonalisation, and simulates the classical lattice model.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bethe;
pub mod classical;
pub mod complex_serde;
pub mod error;
pub mod fockspace;
pub mod hamiltonian;
pub mod laxops;
pub mod operator;
pub mod report;
pub mod series;
pub mod su2rep;
pub mod ybe_verify;

pub use error::{Error, Result};
pub use fockspace::{FockLattice, ModelParams, SectorBasis, SiteOperator};
pub use laxops::{AuxMatrix2, AuxPolynomial, QuantumChain, RMatrix};
pub use operator::LatticeOperator;
pub use report::{CheckParams, ResidualReport, Status};
