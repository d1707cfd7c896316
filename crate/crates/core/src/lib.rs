//! Simulation and analysis of optimal adaptive feedback communication systems
//! (AFCS) with analogue forward transmission.
//!
//! A sample of a Gaussian source is sent over `n` cycles through an adaptive
//! saturating pulse-amplitude modulator. After each cycle the base station
//! refines its estimate and feeds back the new modulator position, while the
//! modulator gain follows an open-loop schedule fixed by the minimum-MSE
//! recursion. The crate is split into:
//!
//! * [`model`]: configuration, validation and derived constants,
//! * [`modulator`]: saturation factor, adaptation rules and the clipping emitter,
//! * [`estimator`]: the Kalman-type update and the exact MMSE recursion,
//! * [`analysis`]: threshold cycle count, bit-rates, energy per bit and the
//!   Shannon boundary,
//! * [`montecarlo`]: seeded ensemble simulation compared against theory,
//! * [`cli`]: table-producing commands behind the `afcs` binary.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod model;
pub mod modulator;
pub mod montecarlo;
mod normal;

pub use error::{Error, Result};
pub use model::{validate, DerivedParams, EfficiencyPoint, EstimatorState, ModulatorState, SystemConfig};
