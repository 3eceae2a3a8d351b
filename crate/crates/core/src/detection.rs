//! Photon-counting camera frames: expected intensities, Poisson sampling,
//! classical intensity noise and driven motion sequences.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OmxError, Result};
use crate::grid_optics::{PixelGrid, RealField};
use crate::rng::{derive_seed, frame_rng, seeded};
use crate::scattering::{Input, ScatterModel};

/// One exposure: photon counts per pixel, timestamp and the true displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub grid: PixelGrid,
    pub counts: Vec<u32>,
    pub t: f64,
    pub xi_true: f64,
}

impl Frame {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn to_real(&self) -> RealField {
        RealField {
            grid: self.grid,
            val: self.counts.iter().map(|&c| f64::from(c)).collect(),
        }
    }
}

/// Sinusoidal drive `ξ(t) = xi0·sin(omega_m·t + phase0)` sampled at `frame_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub omega_m: f64,
    pub xi0: f64,
    pub frame_rate: f64,
    pub n_frames: usize,
    pub phase0: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            omega_m: 2.0 * std::f64::consts::PI * 133.0,
            xi0: 0.05,
            frame_rate: 2660.0,
            n_frames: 1000,
            phase0: 0.0,
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(OmxError::InvalidParameter(format!("frame_rate = {}", self.frame_rate)));
        }
        if !(self.omega_m.is_finite() && self.omega_m >= 0.0) {
            return Err(OmxError::InvalidParameter(format!("omega_m = {}", self.omega_m)));
        }
        if self.frame_rate <= 2.0 * self.omega_m / (2.0 * std::f64::consts::PI) {
            return Err(OmxError::InvalidParameter(format!(
                "frame rate {} Hz undersamples a {:.3} Hz drive",
                self.frame_rate,
                self.omega_m / (2.0 * std::f64::consts::PI)
            )));
        }
        if self.n_frames < 1 {
            return Err(OmxError::InvalidParameter("n_frames must be at least 1".into()));
        }
        if !self.xi0.is_finite() || !self.phase0.is_finite() {
            return Err(OmxError::InvalidParameter("non-finite drive amplitude or phase".into()));
        }
        Ok(())
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 / self.frame_rate
    }

    pub fn displacement(&self, j: usize) -> f64 {
        self.xi0 * (self.omega_m * self.time(j) + self.phase0).sin()
    }

    /// Same timing with the motion switched off.
    pub fn at_rest(&self) -> Self {
        Self { xi0: 0.0, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub shot: bool,
    /// RMS of the relative classical intensity fluctuation.
    pub classical_rms: f64,
    /// Correlation time of the classical fluctuation, seconds.
    pub classical_tau: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            shot: true,
            classical_rms: 0.0,
            classical_tau: 0.05,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.classical_rms.is_finite() && self.classical_rms >= 0.0) {
            return Err(OmxError::InvalidParameter(format!("classical_rms = {}", self.classical_rms)));
        }
        if !(self.classical_tau.is_finite() && self.classical_tau >= 0.0) {
            return Err(OmxError::InvalidParameter(format!("classical_tau = {}", self.classical_tau)));
        }
        Ok(())
    }
}

/// Mean photon count per pixel, `N·|u|²·pitch²`.
pub fn expected_intensity(model: &ScatterModel, input: &Input, xi: f64, n_photons: f64) -> Result<RealField> {
    if !(n_photons.is_finite() && n_photons >= 0.0) {
        return Err(OmxError::InvalidParameter(format!("N = {n_photons}")));
    }
    let u = model.transmit(input, xi)?;
    let s = n_photons * u.grid.area();
    Ok(RealField {
        grid: u.grid,
        val: u.amp.iter().map(|a| a.norm_sqr() * s).collect(),
    })
}

/// Independent Poisson draw per pixel.
pub fn sample_frame<R: Rng + ?Sized>(expected: &RealField, rng: &mut R) -> Vec<u32> {
    expected
        .val
        .iter()
        .map(|&m| {
            if m > 0.0 {
                let c: f64 = Poisson::new(m).expect("positive finite mean").sample(rng);
                c as u32
            } else {
                0
            }
        })
        .collect()
}

/// Multiplicative classical factors `1 + η_j` from a stationary AR(1) process,
/// clipped at 0.1 so intensities stay positive.
pub fn classical_factors(noise: &NoiseConfig, frame_rate: f64, n: usize, seed: u64) -> Vec<f64> {
    if noise.classical_rms == 0.0 {
        return vec![1.0; n];
    }
    let rho = if noise.classical_tau > 0.0 {
        (-1.0 / (frame_rate * noise.classical_tau)).exp()
    } else {
        0.0
    };
    let sigma = noise.classical_rms;
    let innov = sigma * (1.0 - rho * rho).sqrt();
    let mut rng = seeded(seed);
    let mut eta = 0.0;
    (0..n)
        .map(|j| {
            let z: f64 = StandardNormal.sample(&mut rng);
            eta = if j == 0 { sigma * z } else { rho * eta + innov * z };
            (1.0 + eta).max(0.1)
        })
        .collect()
}

fn classical_seed(noise: &NoiseConfig, seed: u64) -> u64 {
    derive_seed(derive_seed(noise.seed, "classical"), &seed.to_string())
}

fn realize(expected: &RealField, factor: f64, shot: bool, shot_seed: u64, j: usize) -> Vec<u32> {
    if shot {
        if factor == 1.0 {
            sample_frame(expected, &mut frame_rng(shot_seed, j as u64))
        } else {
            let scaled = RealField {
                grid: expected.grid,
                val: expected.val.iter().map(|v| v * factor).collect(),
            };
            sample_frame(&scaled, &mut frame_rng(shot_seed, j as u64))
        }
    } else {
        expected.val.iter().map(|v| (v * factor).round() as u32).collect()
    }
}

const MAX_CACHED_DISPLACEMENTS: usize = 64;

/// Frames of a driven displacement with shot and classical noise. Frame `j`
/// depends only on `(seed, j)` and the classical process.
pub fn record_sequence(
    model: &ScatterModel,
    input: &Input,
    drive: &DriveConfig,
    noise: &NoiseConfig,
    n_photons: f64,
    seed: u64,
) -> Result<Vec<Frame>> {
    drive.validate()?;
    noise.validate()?;
    let factors = classical_factors(noise, drive.frame_rate, drive.n_frames, classical_seed(noise, seed));
    let shot_seed = derive_seed(seed, "shot");
    let xis: Vec<f64> = (0..drive.n_frames).map(|j| drive.displacement(j)).collect();
    // Commensurate drives revisit a few displacements; render each once.
    let mut distinct: Vec<u64> = xis.iter().map(|x| x.to_bits()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    let cache: Option<HashMap<u64, RealField>> = if distinct.len() <= MAX_CACHED_DISPLACEMENTS {
        let fields = distinct
            .par_iter()
            .map(|&b| Ok((b, expected_intensity(model, input, f64::from_bits(b), n_photons)?)))
            .collect::<Result<Vec<_>>>()?;
        Some(fields.into_iter().collect())
    } else {
        None
    };
    (0..drive.n_frames)
        .into_par_iter()
        .map(|j| {
            let xi = xis[j];
            let counts = match &cache {
                Some(c) => realize(&c[&xi.to_bits()], factors[j], noise.shot, shot_seed, j),
                None => {
                    let e = expected_intensity(model, input, xi, n_photons)?;
                    realize(&e, factors[j], noise.shot, shot_seed, j)
                }
            };
            Ok(Frame {
                grid: model.camera_grid(),
                counts,
                t: drive.time(j),
                xi_true: xi,
            })
        })
        .collect()
}

/// Average of `m` motion-free frames, or the exact expectation when `m == 0`.
pub fn reference_frame(
    model: &ScatterModel,
    input: &Input,
    n_photons: f64,
    m: usize,
    noise: &NoiseConfig,
    frame_rate: f64,
    seed: u64,
) -> Result<RealField> {
    if m == 0 {
        return expected_intensity(model, input, 0.0, n_photons);
    }
    let drive = DriveConfig {
        omega_m: 0.0,
        xi0: 0.0,
        frame_rate,
        n_frames: m,
        phase0: 0.0,
    };
    let frames = record_sequence(model, input, &drive, noise, n_photons, seed)?;
    mean_frame(&frames)
}

/// Pixel-wise mean of a frame stack.
pub fn mean_frame(frames: &[Frame]) -> Result<RealField> {
    let first = frames
        .first()
        .ok_or_else(|| OmxError::Degenerate("no frames to average".into()))?;
    let mut acc = vec![0u64; first.counts.len()];
    for f in frames {
        f.grid.same_as(&first.grid)?;
        for (a, &c) in acc.iter_mut().zip(&f.counts) {
            *a += u64::from(c);
        }
    }
    let inv = 1.0 / frames.len() as f64;
    Ok(RealField {
        grid: first.grid,
        val: acc.into_iter().map(|a| a as f64 * inv).collect(),
    })
}
