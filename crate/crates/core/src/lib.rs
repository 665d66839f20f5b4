//! Simulation and control of a link whose polarization mismatch is corrected by
//! a voltage-tunable rotating metasurface.
//!
//! - [`jones`]: polarization states and 2×2 Jones operators.
//! - [`metasurface`]: the rotator device model, bias lookup table, S-parameters.
//! - [`channel`]: link budget with mismatch, bypass, noise and capacity.
//! - [`controller`]: coarse-to-fine bias search and an exhaustive oracle.
//! - [`estimator`]: rotation-range estimation from power sweeps.
//! - [`cli`]: scenario files and experiment commands.

pub mod channel;
pub mod cli;
pub mod controller;
mod error;
pub mod estimator;
pub mod jones;
pub mod metasurface;

pub use error::{Error, Result};
