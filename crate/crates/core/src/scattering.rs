//! Ground-truth optical systems mapping an input to a displacement-dependent
//! camera field.

use num_complex::Complex64 as C64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OmxError, Result};
use crate::fft::{fftfreq, fftshift2, Fft2};
use crate::grid_optics::{derivative_mode, shifted_field, tem00, BeamParams, ComplexField, PixelGrid, RealField};
use crate::rng::{derive_seed, seeded};
use crate::tm::TransmissionMatrix;

/// What is sent into a model: segment amplitudes for a shaped medium or a
/// rendered field for direct beam displacement.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Pattern(Vec<C64>),
    Field(ComplexField),
}

/// A beam imaged straight onto the camera and displaced rigidly.
#[derive(Debug, Clone)]
pub struct PureDisplacement {
    pub grid: PixelGrid,
    pub beam: BeamParams,
    pub dir: (f64, f64),
}

/// Parameters of the synthetic scattering medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomMediumParams {
    /// Segments per side of the square control array.
    pub n_seg: usize,
    pub scatter_n: usize,
    pub camera_n: usize,
    /// Shared pixel pitch of the scatterer and camera planes.
    pub pitch: f64,
    /// Side length of the illuminated control array in the scatterer plane.
    pub span: f64,
    /// Power fraction of the image-preserving (ballistic) channel.
    pub imaging_fraction: f64,
    /// Correlation length of the random phase screen, in scatterer pixels.
    pub screen_corr_px: f64,
    /// Edge softness of each segment image, in scatterer pixels.
    pub edge_px: f64,
}

impl Default for RandomMediumParams {
    fn default() -> Self {
        Self {
            n_seg: 16,
            scatter_n: 128,
            camera_n: 64,
            pitch: 1.0 / 16.0,
            span: 6.0,
            imaging_fraction: 0.5,
            screen_corr_px: 0.5,
            edge_px: 1.0,
        }
    }
}

impl RandomMediumParams {
    pub fn n_in(&self) -> usize {
        self.n_seg * self.n_seg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OmxError::InvalidParameter(m));
        if self.n_seg < 1 {
            return bad("n_seg must be positive".into());
        }
        if self.scatter_n < 2 || self.scatter_n % 2 != 0 {
            return bad(format!("scatter_n must be even, got {}", self.scatter_n));
        }
        if self.camera_n < 2 || self.camera_n > self.scatter_n || self.camera_n % 2 != 0 {
            return bad(format!(
                "camera_n must be even and at most scatter_n, got {}",
                self.camera_n
            ));
        }
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            return bad(format!("pitch = {}", self.pitch));
        }
        if !(self.span.is_finite() && self.span > 0.0) {
            return bad(format!("span = {}", self.span));
        }
        if !(0.0..=1.0).contains(&self.imaging_fraction) {
            return bad(format!("imaging_fraction = {}", self.imaging_fraction));
        }
        if !(self.screen_corr_px.is_finite() && self.screen_corr_px >= 0.0) {
            return bad(format!("screen_corr_px = {}", self.screen_corr_px));
        }
        if !(self.edge_px.is_finite() && self.edge_px > 0.0) {
            return bad(format!("edge_px = {}", self.edge_px));
        }
        Ok(())
    }
}

/// Square control segments imaged onto a scatterer plane, shifted there by
/// the mechanical motion, then split between a ballistic imaging channel and
/// a far-field speckle channel behind a random phase screen.
#[derive(Debug, Clone)]
pub struct RandomMedium {
    pub params: RandomMediumParams,
    pub seed: u64,
    pub dir: (f64, f64),
    pub scatter_grid: PixelGrid,
    pub camera_grid: PixelGrid,
    /// `profile[k * scatter_n + i]`: 1D edge-softened box of segment index `k`.
    profile: Vec<f64>,
    screen: Vec<C64>,
    fft: Fft2,
    norm: f64,
}

impl RandomMedium {
    pub fn new(params: RandomMediumParams, seed: u64, dir: (f64, f64)) -> Result<Self> {
        params.validate()?;
        check_unit(dir)?;
        let ns = params.scatter_n;
        let scatter_grid = PixelGrid::square(ns, params.pitch)?;
        let camera_grid = PixelGrid::square(params.camera_n, params.pitch)?;
        let d = params.span / params.n_seg as f64;
        let sw = params.edge_px * params.pitch;
        let mut profile = Vec::with_capacity(params.n_seg * ns);
        for k in 0..params.n_seg {
            let c = (k as f64 - (params.n_seg as f64 - 1.0) / 2.0) * d;
            for i in 0..ns {
                let x = scatter_grid.x(i) - c;
                profile.push(0.5 * (libm::erf((x + d / 2.0) / sw) - libm::erf((x - d / 2.0) / sw)));
            }
        }
        let fft = Fft2::new(ns);
        let screen = phase_screen(&fft, derive_seed(seed, "phase-screen"), params.screen_corr_px);
        let mut m = Self {
            params,
            seed,
            dir,
            scatter_grid,
            camera_grid,
            profile,
            screen,
            fft,
            norm: 1.0,
        };
        let u = m.transmit_pattern(&m.reference_pattern(), 0.0)?;
        let e = u.energy();
        if !(e > 0.0) {
            return Err(OmxError::Degenerate("reference input transmits no light".into()));
        }
        m.norm = 1.0 / e.sqrt();
        Ok(m)
    }

    pub fn n_in(&self) -> usize {
        self.params.n_in()
    }

    /// Uniform-phase pattern at unit total input energy.
    pub fn reference_pattern(&self) -> Vec<C64> {
        let n = self.n_in();
        vec![C64::new(1.0 / (n as f64).sqrt(), 0.0); n]
    }

    /// Global normalization constant fixed by the reference input at rest.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Field in the scatterer plane produced by a segment pattern.
    pub fn render(&self, eps: &[C64]) -> Result<ComplexField> {
        let n = self.params.n_seg;
        if eps.len() != n * n {
            return Err(OmxError::DimensionMismatch(format!(
                "pattern of {} segments for a model with {}",
                eps.len(),
                n * n
            )));
        }
        let ns = self.params.scatter_n;
        let mut rows = vec![C64::new(0.0, 0.0); n * ns];
        for ky in 0..n {
            let acc = &mut rows[ky * ns..(ky + 1) * ns];
            for kx in 0..n {
                let e = eps[ky * n + kx];
                if e.re == 0.0 && e.im == 0.0 {
                    continue;
                }
                let p = &self.profile[kx * ns..(kx + 1) * ns];
                for (a, &pv) in acc.iter_mut().zip(p) {
                    *a += e * pv;
                }
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); ns * ns];
        for j in 0..ns {
            let dst = &mut out[j * ns..(j + 1) * ns];
            for ky in 0..n {
                let py = self.profile[ky * ns + j];
                if py == 0.0 {
                    continue;
                }
                let src = &rows[ky * ns..(ky + 1) * ns];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += s * py;
                }
            }
        }
        Ok(ComplexField {
            grid: self.scatter_grid,
            amp: out,
        })
    }

    pub fn transmit_pattern(&self, eps: &[C64], xi: f64) -> Result<ComplexField> {
        let x = self.render(eps)?;
        let x = shifted_field(&x, xi, self.dir)?;
        Ok(self.propagate(&x))
    }

    /// Applies the medium to a scatterer-plane field.
    pub fn propagate(&self, x: &ComplexField) -> ComplexField {
        let ns = self.params.scatter_n;
        let nc = self.params.camera_n;
        let off = (ns - nc) / 2;
        let f = self.params.imaging_fraction;
        let (ci, cr) = (f.sqrt(), (1.0 - f).sqrt());
        let mut far: Vec<C64> = x.amp.iter().zip(&self.screen).map(|(a, t)| a * t).collect();
        fftshift2(&mut far, ns);
        self.fft.forward(&mut far);
        fftshift2(&mut far, ns);
        let scale = 1.0 / ns as f64;
        let mut amp = Vec::with_capacity(nc * nc);
        for j in 0..nc {
            for i in 0..nc {
                let s = (j + off) * ns + i + off;
                amp.push(self.norm * (ci * x.amp[s] + cr * scale * far[s]));
            }
        }
        ComplexField {
            grid: self.camera_grid,
            amp,
        }
    }

    /// Camera-by-segment transmission matrix at rest.
    pub fn true_tm(&self) -> Result<TransmissionMatrix> {
        let n_in = self.n_in();
        let cols: Vec<Vec<C64>> = (0..n_in)
            .into_par_iter()
            .map(|k| {
                let mut e = vec![C64::new(0.0, 0.0); n_in];
                e[k] = C64::new(1.0, 0.0);
                self.transmit_pattern(&e, 0.0).map(|f| f.amp)
            })
            .collect::<Result<_>>()?;
        let n_out = self.camera_grid.len();
        let mut data = vec![C64::new(0.0, 0.0); n_out * n_in];
        for (k, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                data[r * n_in + k] = *v;
            }
        }
        TransmissionMatrix::new(n_out, n_in, data)
    }
}

fn phase_screen(fft: &Fft2, seed: u64, corr_px: f64) -> Vec<C64> {
    let n = fft.size();
    let mut rng = seeded(seed);
    let mut z: Vec<C64> = (0..n * n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im)
        })
        .collect();
    if corr_px > 0.0 {
        fft.forward(&mut z);
        let c = (std::f64::consts::PI * corr_px).powi(2);
        for j in 0..n {
            let ky = fftfreq(j, n);
            for i in 0..n {
                let kx = fftfreq(i, n);
                z[j * n + i] *= (-(kx * kx + ky * ky) * c).exp();
            }
        }
        fft.inverse(&mut z);
    }
    z.into_iter().map(|v| C64::from_polar(1.0, v.arg())).collect()
}

fn check_unit(dir: (f64, f64)) -> Result<()> {
    let n = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(OmxError::InvalidParameter(format!("|dir| = {n}")));
    }
    Ok(())
}

/// Unit vector at `deg` degrees from the x axis.
pub fn dir_from_degrees(deg: f64) -> (f64, f64) {
    let r = deg.to_radians();
    (r.cos(), r.sin())
}

#[derive(Debug, Clone)]
pub enum ScatterModel {
    PureDisplacement(PureDisplacement),
    RandomMedium(Box<RandomMedium>),
}

impl ScatterModel {
    pub fn pure(beam: BeamParams, grid: PixelGrid, dir: (f64, f64)) -> Result<Self> {
        beam.validate()?;
        check_unit(dir)?;
        Ok(ScatterModel::PureDisplacement(PureDisplacement { grid, beam, dir }))
    }

    pub fn random_medium(params: RandomMediumParams, seed: u64, dir: (f64, f64)) -> Result<Self> {
        Ok(ScatterModel::RandomMedium(Box::new(RandomMedium::new(params, seed, dir)?)))
    }

    pub fn dir(&self) -> (f64, f64) {
        match self {
            ScatterModel::PureDisplacement(m) => m.dir,
            ScatterModel::RandomMedium(m) => m.dir,
        }
    }

    pub fn camera_grid(&self) -> PixelGrid {
        match self {
            ScatterModel::PureDisplacement(m) => m.grid,
            ScatterModel::RandomMedium(m) => m.camera_grid,
        }
    }

    /// Unshaped input: the TEM00 beam, or the uniform segment pattern.
    pub fn reference_input(&self) -> Result<Input> {
        match self {
            ScatterModel::PureDisplacement(m) => Ok(Input::Field(tem00(&m.beam, &m.grid)?)),
            ScatterModel::RandomMedium(m) => Ok(Input::Pattern(m.reference_pattern())),
        }
    }

    pub fn transmit(&self, input: &Input, xi: f64) -> Result<ComplexField> {
        match (self, input) {
            (ScatterModel::PureDisplacement(m), Input::Field(f)) => {
                f.grid.same_as(&m.grid)?;
                shifted_field(f, xi, m.dir)
            }
            (ScatterModel::RandomMedium(m), Input::Pattern(eps)) => m.transmit_pattern(eps, xi),
            (ScatterModel::PureDisplacement(_), Input::Pattern(_)) => Err(OmxError::DimensionMismatch(
                "beam-displacement model expects a field input".into(),
            )),
            (ScatterModel::RandomMedium(_), Input::Field(_)) => Err(OmxError::DimensionMismatch(
                "random medium expects a segment pattern".into(),
            )),
        }
    }

    /// Exact derivative mode and optomechanical waist of the model for `input`.
    pub fn true_derivative(&self, input: &Input, h: f64) -> Result<(RealField, f64)> {
        derivative_mode(|xi| self.transmit(input, xi), h)
    }
}
