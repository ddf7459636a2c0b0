//! Simulation core for a pulsed heralded single-photon source: pair
//! statistics, detection, pulse-slot coincidence counting, figures of merit,
//! an exact probability oracle, and the phase-matching and coupler models.
//!
//! `no_std` with `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod counter;
pub mod detect;
pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod profile;
pub mod qpm;
pub mod rng;
pub mod sim;
pub mod source;
pub mod wdm;

pub use error::{Error, Result};
