//! Quasiparticle band structures from a variational ground state and a
//! quantum subspace expansion, evaluated on a shot-based noisy simulator.
//!
//! The pipeline runs integrals → fermionic Hamiltonian → Jordan–Wigner →
//! Z2 tapering → VQE → subspace expansion → bands, with readout-error
//! mitigation, zero-noise extrapolation and repeat averaging on top.

pub mod backend;
pub mod error;
pub mod fermion;
pub mod hamiltonian;
pub mod mitigation;
pub mod parallel;
pub mod pauli;
pub mod pipeline;
pub mod qse;
pub mod seeds;
pub mod simulator;
pub mod units;
pub mod vqe;

pub use error::{Error, Result};
pub use pauli::{Pauli, PauliString, PauliSum};
