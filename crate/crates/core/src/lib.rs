//! Multimode homodyne tomography.
//!
//! Simulates amplitude- and phase-controlled balanced-homodyne measurements
//! of N-mode optical fields and reconstructs the N-mode density matrix in the
//! field-strength basis from sum-field distributions with N+1 Fourier
//! integrals. A brute-force oracle computed directly from the input state
//! provides ground truth.

pub mod cli;
pub mod error;
pub mod fsmatrix;
pub mod measurement;
pub mod quadrature;
pub mod reconstruction;
pub mod state;

pub use error::{Error, Result};
pub use state::{build_state, characteristic_function, mean_field, DensityOperatorFock, FieldScale, StateKind, StateSpec};
