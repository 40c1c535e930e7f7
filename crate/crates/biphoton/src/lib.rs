//! Coincidence-count interference models for frequency-entangled photon pairs.
//!
//! A cw-pumped downconversion source emits photon pairs whose frequencies sum
//! to the pump frequency. Everything in this crate lives in the single
//! detuning variable that survives that constraint:
//!
//! * [`spectra`] describes the pair's joint spectral density and the filters
//!   (Gaussian, Fabry-Perot) applied per arm.
//! * [`mzi`] evaluates the coincidence interference term behind an unbalanced
//!   Mach-Zehnder, in closed form for Gaussian spectra, as a roundtrip series
//!   when one arm carries a Fabry-Perot cavity, and by direct quadrature as a
//!   slow reference for either.
//! * [`hom`] does the same for Hong-Ou-Mandel dips.
//! * [`fitting`] recovers model parameters (envelope widths, cavity length,
//!   finesse) from visibility scans by damped least squares.
//!
//! All quantities are SI internally: angular frequencies in rad/s, lengths in
//! meters, delays in seconds. Conversions from the lab-facing units
//! (wavelengths in nm, air gaps in um) live in [`units`] and are applied at
//! the boundary only.
//!
//! With the default `parallel` feature, scan evaluation fans out over a rayon
//! pool; results are identical to the sequential fallback because every scan
//! point is computed independently.

pub mod error;
pub mod fitting;
pub mod hom;
pub mod mzi;
pub mod numerics;
pub mod spectra;
pub mod units;

pub use error::{Error, Result};
