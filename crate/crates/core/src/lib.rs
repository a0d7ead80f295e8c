//! Model-reference synthetic inertia emulation for a diesel-wind microgrid.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`plant`] evaluates the nonlinear diesel, wind-turbine (PMSG + machine-side
//!    converter), output-filter and reference frequency-response models.
//! 2. [`linearization`] trims the turbine at an operating wind speed and builds
//!    linear state-space models by central differences.
//! 3. [`sma`] reduces the six-state turbine model to the single rotor-speed
//!    state by selective modal analysis.
//! 4. [`mrc`] assembles the physical plant, the reference model and the
//!    augmented tracking system, builds the delay-dependent LMI and recovers
//!    a state-feedback gain, using the small dense SDP solver in [`lmi`].
//! 5. [`sim`] runs fixed-step closed-loop simulations and extracts the
//!    frequency metrics (nadir, RoCoF, emulated inertia).
//!
//! Everything here is allocation-only and runs without `std`; file formats,
//! configuration and the command-line front end live in the companion crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod linearization;
pub mod lmi;
pub mod mrc;
pub mod plant;
pub mod sim;
pub mod sma;

pub use error::{Error, Result};
pub use linalg::Matrix;
