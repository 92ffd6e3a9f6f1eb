//! Pulse-level simulation of optical-frequency qubits hosted in the 4f levels
//! of rare-earth ions doped into mixed crystals.
//!
//! The crate covers the full pipeline of a desk-scale study:
//!
//! * [`phys`] — physical constants and the single unit convention used
//!   everywhere else (internal frequencies are angular, Gaussian-CGS for the
//!   electrostatics, SI at the I/O boundaries).
//! * [`ion`] — embedded database of ion level schemes and Judd-Ofelt
//!   reduced matrix elements, with validated loaders.
//! * [`ensemble`] — dilute-dopant lattice sampling with inhomogeneously
//!   broadened transition frequencies, plus closed-form ensemble statistics.
//! * [`interactions`] — pairwise Stark shifts (full dipole/quadrupole tensor
//!   forms and order-of-magnitude estimates), the blockade condition, and the
//!   competing spin/transfer diagnostics.
//! * [`pulse`] — square-pulse parameters, two-level unitaries, and ensemble
//!   state-vector evolution with occupation-dependent blockade detunings.
//! * [`protocols`] — state preparation, the five-pulse CNOT and its CCNOT
//!   generalisation, fidelity scoring, and Hadamard readout populations.
//! * [`holeburn`] — absorption-spectrum synthesis, burn simulation,
//!   hole/antihole detection and working-ensemble selection.
//! * [`paper_check`] — reproduction of the published reference figures with a
//!   machine-readable pass/fail ledger.

pub mod ensemble;
pub mod error;
pub mod holeburn;
pub mod interactions;
pub mod ion;
pub mod paper_check;
pub mod phys;
pub mod protocols;
pub mod pulse;

pub use error::{Error, Result};
