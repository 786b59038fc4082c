//! Tensor-network engine for compressing adiabatic quantum evolution, with
//! counterdiabatic driving from variationally optimized MPO gauge potentials,
//! into shallow parameterized quantum circuits, plus the benchmark harness
//! that compares them against Trotter baselines on quantum Ising chains.

pub mod agp;
pub mod bench;
pub mod circuit;
pub mod compress;
pub mod dmrg;
mod env;
pub mod error;
pub mod lbfgs;
pub mod mpo;
pub mod mps;
pub mod oracle;
pub mod pauli;
pub mod schedule;
pub mod tensor;
pub mod testutil;
pub mod tnio;
mod tt;

pub use error::{Error, Result};
pub use tt::TruncationReport;
