//! Desk-scale simulator for wavefront-shaping-enhanced optomechanical
//! displacement sensing: sampled optical fields, synthetic scattering media,
//! transmission-matrix calibration and focusing, photon-counting frames and
//! linear pixel-gain estimators benchmarked against the Cramér-Rao bound.

pub mod detection;
pub mod error;
pub mod estimators;
pub mod fft;
pub mod grid_optics;
pub mod harness;
pub mod io;
pub mod rng;
pub mod scattering;
pub mod tm;

pub use error::{OmxError, Result};
pub use num_complex::Complex64;
