//! Stable long-range forecasting of 1-D periodic PDEs with constrained
//! implicit residual networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`math`] dense linear algebra, activations, initialisation, the
//!   Perron–Frobenius eigenvalue estimate, and the seeded generator.
//! * [`pde`] advection and viscous Burgers reference solvers plus the
//!   one-step dataset format.
//! * [`block`] the implicit triangular residual block and its solvers.
//! * [`grad`] reverse-mode gradients for the fixed architecture.
//! * [`network`] encoder / block stack / decoder models and forecasting.
//! * [`train`] supervised one-step training and evaluation.
//! * [`stability`] numerical certification of the boundedness result and
//!   forecast error curves.
//! * [`verify`] the randomised suites behind `pdecast verify`.

pub mod block;
pub mod error;
pub mod grad;
pub mod math;
pub mod network;
pub mod pde;
pub mod stability;
pub mod train;
pub mod verify;

pub use error::{Error, Result};

use std::path::Path;

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("'{}' is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
