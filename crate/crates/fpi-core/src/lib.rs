//! Quantized model of a Fabry-Perot interferometer read out by a
//! photon-number-resolving detector.
//!
//! The crate is organized around the stages of such an experiment:
//!
//! - [`optics`]: complex effective beam-splitter amplitudes `T` and `R` of the
//!   two-mirror cavity and the analytic derivative of the transmission.
//! - [`photon`]: photon-number-resolved detection probabilities for coherent
//!   and Fock inputs, and sampled fringe curves.
//! - [`metrology`]: length sensitivity against the shot-noise baseline,
//!   windowed peak statistics, free-spectral-range uncertainty, and finesse.
//! - [`detector`]: seeded Monte Carlo simulation of the pulse-integral
//!   acquisition chain (histogram, thresholds, photon-number assignment).
//! - [`fit`]: least-squares recovery of the source and cavity parameters from
//!   fringe data, and the dip diagnostic that bounds the mean photon number
//!   without fitting.
//!
//! All lengths are the dimensionless cavity detuning `L/lambda`; the fringe
//! pattern is periodic with period 1/2 in that variable. The crate is
//! `no_std`-compatible (`alloc` required; disable the default `std` feature).

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod detector;
pub mod error;
pub mod fit;
pub mod metrology;
pub mod optics;
pub mod photon;
pub mod special;

pub use error::Error;

pub type Result<T> = core::result::Result<T, Error>;
