//! Simulation and analysis of the photon statistics emitted by a single
//! quantum emitter riding on a vibrating nanomechanical oscillator.
//!
//! The crate is organised bottom-up:
//!
//! * [`mechanics`]: closed-form oscillator physics (susceptibility, spectra,
//!   autocorrelation, cantilever eigenmodes, electrostatic actuation).
//! * [`trajectory`]: exact-discretisation Langevin and coherent trajectories.
//! * [`emitter`]: three-level rate-equation photophysics integrated by RK4.
//! * [`optics`]: Gaussian detection profiles, mean fluxes and images.
//! * [`correlator`]: Monte-Carlo estimators of the spatio-temporal g².
//! * [`wick`]: the Gaussian-moment expansion of g² and its exact oracle.
//! * [`analysis`]: fits, spectra and sensitivity figures.
//!
//! All quantities are SI internally (metres, seconds, rad/s, kelvin).

pub mod analysis;
pub mod correlator;
pub mod emitter;
mod error;
pub mod mechanics;
pub mod numeric;
pub mod optics;
pub mod rng;
pub mod trajectory;
pub mod wick;

pub use error::{Error, Result};

/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
