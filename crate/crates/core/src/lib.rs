//! Simulation and key-rate analysis of a QKD scheme in which Bob encodes his
//! bit into the path of the incoming photon with a trusted linear-optics
//! network and then hands the photon to an untrusted single-photon Bell-state
//! measurement.
//!
//! Modules, bottom up:
//! - [`qstate`]: dense pure states and density matrices over named qubits.
//! - [`encoding`]: BB84 polarization states, Bob's path isometries, the
//!   virtual-source register states and the hybrid Bell basis.
//! - [`bsm`]: projector and mode-network BSM models, threshold detectors.
//! - [`channel`]: Poisson source, fiber loss and misalignment.
//! - [`rates`]: analytic yields, the per-detector key rate and curves.
//! - [`session`]: seeded Monte Carlo runs of the whole protocol.
//! - [`verify`]: numerical checks of the register-state identities.

pub mod bsm;
pub mod channel;
pub mod encoding;
pub mod error;
pub mod qstate;
pub mod rates;
pub mod session;
pub mod verify;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits so CSV output round-trips exactly.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}
