//! Sampled transverse-plane fields: grids, Gaussian beams, sub-pixel shifts
//! and amplitude-derivative modes.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{OmxError, Result};

/// Centered square-pixel grid. Pixel `(i, j)` sits at
/// `((i - (nx-1)/2) * pitch, (j - (ny-1)/2) * pitch)`; storage is row-major
/// with `y` outer, so the flat index is `j * nx + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
}

impl PixelGrid {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(OmxError::InvalidParameter(format!(
                "grid must be at least 2x2, got {nx}x{ny}"
            )));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(OmxError::InvalidParameter(format!(
                "pitch must be positive and finite, got {pitch}"
            )));
        }
        Ok(Self { nx, ny, pitch })
    }

    pub fn square(n: usize, pitch: f64) -> Result<Self> {
        Self::new(n, n, pitch)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.nx as f64 - 1.0) / 2.0) * self.pitch
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.ny as f64 - 1.0) / 2.0) * self.pitch
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> (f64, f64) {
        (self.x(idx % self.nx), self.y(idx / self.nx))
    }

    /// Pixel area, the measure used by every discrete integral.
    pub fn area(&self) -> f64 {
        self.pitch * self.pitch
    }

    /// Largest admissible lateral shift: half the smaller grid extent.
    pub fn shift_budget(&self) -> f64 {
        0.5 * self.nx.min(self.ny) as f64 * self.pitch
    }

    /// Pixel whose center is closest to `(x, y)` (ties resolved to the lower index).
    pub fn nearest_pixel(&self, x: f64, y: f64) -> (usize, usize) {
        let fi = x / self.pitch + (self.nx as f64 - 1.0) / 2.0;
        let fj = y / self.pitch + (self.ny as f64 - 1.0) / 2.0;
        let snap = |f: f64, n: usize| -> usize {
            let r = (f - 0.5).ceil();
            r.clamp(0.0, (n - 1) as f64) as usize
        };
        (snap(fi, self.nx), snap(fj, self.ny))
    }

    pub fn same_as(&self, other: &PixelGrid) -> Result<()> {
        if self.nx != other.nx || self.ny != other.ny || self.pitch != other.pitch {
            return Err(OmxError::DimensionMismatch(format!(
                "grid {}x{}@{} vs {}x{}@{}",
                self.nx, self.ny, self.pitch, other.nx, other.ny, other.pitch
            )));
        }
        Ok(())
    }
}

/// Complex amplitude sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: PixelGrid,
    pub amp: Vec<C64>,
}

/// Real scalar sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    pub grid: PixelGrid,
    pub val: Vec<f64>,
}

impl ComplexField {
    pub fn new(grid: PixelGrid, amp: Vec<C64>) -> Result<Self> {
        if amp.len() != grid.len() {
            return Err(OmxError::DimensionMismatch(format!(
                "{} samples for a grid of {}",
                amp.len(),
                grid.len()
            )));
        }
        if amp.iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
            return Err(OmxError::InvalidParameter("non-finite field sample".into()));
        }
        Ok(Self { grid, amp })
    }

    pub fn zeros(grid: PixelGrid) -> Self {
        Self {
            grid,
            amp: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: PixelGrid, f: impl Fn(f64, f64) -> C64) -> Self {
        let amp = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.coord(idx);
                f(x, y)
            })
            .collect();
        Self { grid, amp }
    }

    /// Discrete energy `Σ|amp|² pitch²`.
    pub fn energy(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.area()
    }

    pub fn abs(&self) -> RealField {
        RealField {
            grid: self.grid,
            val: self.amp.iter().map(|a| a.norm()).collect(),
        }
    }

    pub fn intensity(&self) -> RealField {
        RealField {
            grid: self.grid,
            val: self.amp.iter().map(|a| a.norm_sqr()).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.amp {
            *a *= s;
        }
    }
}

impl RealField {
    pub fn new(grid: PixelGrid, val: Vec<f64>) -> Result<Self> {
        if val.len() != grid.len() {
            return Err(OmxError::DimensionMismatch(format!(
                "{} samples for a grid of {}",
                val.len(),
                grid.len()
            )));
        }
        if val.iter().any(|v| !v.is_finite()) {
            return Err(OmxError::InvalidParameter("non-finite field sample".into()));
        }
        Ok(Self { grid, val })
    }

    pub fn zeros(grid: PixelGrid) -> Self {
        Self {
            grid,
            val: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: PixelGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let val = (0..grid.len())
            .map(|idx| {
                let (x, y) = grid.coord(idx);
                f(x, y)
            })
            .collect();
        Self { grid, val }
    }

    pub fn energy(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum::<f64>() * self.grid.area()
    }

    pub fn sum(&self) -> f64 {
        self.val.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.val.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Inner product `Σ conj(a)·b·pitch²` over matching grids.
pub trait Inner {
    type Output;
    fn inner(&self, other: &Self) -> Result<Self::Output>;
    /// Copy scaled to unit norm; errors on the null field.
    fn normalized(&self) -> Result<Self>
    where
        Self: Sized;
}

impl Inner for RealField {
    type Output = f64;

    fn inner(&self, other: &Self) -> Result<f64> {
        self.grid.same_as(&other.grid)?;
        let s: f64 = self.val.iter().zip(&other.val).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.area())
    }

    fn normalized(&self) -> Result<Self> {
        let n = self.energy().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(OmxError::Degenerate("cannot normalize a null field".into()));
        }
        Ok(Self {
            grid: self.grid,
            val: self.val.iter().map(|v| v / n).collect(),
        })
    }
}

impl Inner for ComplexField {
    type Output = C64;

    fn inner(&self, other: &Self) -> Result<C64> {
        self.grid.same_as(&other.grid)?;
        let s: C64 = self
            .amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.area())
    }

    fn normalized(&self) -> Result<Self> {
        let n = self.energy().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(OmxError::Degenerate("cannot normalize a null field".into()));
        }
        Ok(Self {
            grid: self.grid,
            amp: self.amp.iter().map(|a| a / n).collect(),
        })
    }
}

pub fn inner<F: Inner>(a: &F, b: &F) -> Result<F::Output> {
    a.inner(b)
}

pub fn normalize<F: Inner>(f: &F) -> Result<F> {
    f.normalized()
}

/// Gaussian beam parameters in waist-normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub w0: f64,
    pub k: f64,
    pub z: f64,
}

impl BeamParams {
    pub fn new(w0: f64, k: f64, z: f64) -> Result<Self> {
        let p = Self { w0, k, z };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w0.is_finite() && self.w0 > 0.0) {
            return Err(OmxError::InvalidParameter(format!("w0 = {}", self.w0)));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(OmxError::InvalidParameter(format!("k = {}", self.k)));
        }
        if !self.z.is_finite() {
            return Err(OmxError::InvalidParameter(format!("z = {}", self.z)));
        }
        Ok(())
    }

    pub fn rayleigh_range(&self) -> f64 {
        0.5 * self.k * self.w0 * self.w0
    }

    pub fn width(&self) -> f64 {
        let q = self.z / self.rayleigh_range();
        self.w0 * (1.0 + q * q).sqrt()
    }

    /// Radius of curvature; infinite at the waist.
    pub fn curvature_radius(&self) -> f64 {
        if self.z == 0.0 {
            f64::INFINITY
        } else {
            let zr = self.rayleigh_range();
            self.z + zr * zr / self.z
        }
    }

    pub fn gouy_phase(&self) -> f64 {
        (self.z / self.rayleigh_range()).atan()
    }
}

/// TEM00 amplitude at pixel centers, scaled to unit discrete energy.
pub fn tem00(params: &BeamParams, grid: &PixelGrid) -> Result<ComplexField> {
    params.validate()?;
    let w = params.width();
    let r_c = params.curvature_radius();
    let curv = if r_c.is_infinite() {
        0.0
    } else {
        params.k / (2.0 * r_c)
    };
    let gouy = C64::from_polar(1.0, -params.gouy_phase());
    let f = ComplexField::from_fn(*grid, |x, y| {
        let r2 = x * x + y * y;
        let env = (-r2 / (w * w)).exp();
        if curv == 0.0 {
            gouy * env
        } else {
            C64::from_polar(env, -curv * r2) * gouy
        }
    });
    f.normalized()
}

fn check_dir(dir: (f64, f64)) -> Result<()> {
    let n = (dir.0 * dir.0 + dir.1 * dir.1).sqrt();
    if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
        return Err(OmxError::InvalidParameter(format!(
            "direction must be a unit vector, |dir| = {n}"
        )));
    }
    Ok(())
}

/// Samples `u(ρ + ξ·dir)` by bilinear interpolation; samples falling outside
/// the grid read as zero.
pub fn shifted_field(f: &ComplexField, xi: f64, dir: (f64, f64)) -> Result<ComplexField> {
    check_dir(dir)?;
    let g = f.grid;
    let budget = g.shift_budget();
    if !xi.is_finite() || xi.abs() >= budget {
        return Err(OmxError::ShiftOutOfRange { shift: xi, budget });
    }
    if xi == 0.0 {
        return Ok(f.clone());
    }
    let sx = xi * dir.0 / g.pitch;
    let sy = xi * dir.1 / g.pitch;
    let fx = sx.floor();
    let fy = sy.floor();
    let tx = sx - fx;
    let ty = sy - fy;
    let (ox, oy) = (fx as i64, fy as i64);
    let (nx, ny) = (g.nx as i64, g.ny as i64);
    let zero = C64::new(0.0, 0.0);
    let at = |i: i64, j: i64| -> C64 {
        if i < 0 || j < 0 || i >= nx || j >= ny {
            zero
        } else {
            f.amp[(j * nx + i) as usize]
        }
    };
    let w00 = (1.0 - tx) * (1.0 - ty);
    let w10 = tx * (1.0 - ty);
    let w01 = (1.0 - tx) * ty;
    let w11 = tx * ty;
    let mut out = Vec::with_capacity(g.len());
    for j in 0..ny {
        for i in 0..nx {
            let (i0, j0) = (i + ox, j + oy);
            let mut v = at(i0, j0) * w00;
            if w10 != 0.0 {
                v += at(i0 + 1, j0) * w10;
            }
            if w01 != 0.0 {
                v += at(i0, j0 + 1) * w01;
            }
            if w11 != 0.0 {
                v += at(i0 + 1, j0 + 1) * w11;
            }
            out.push(v);
        }
    }
    Ok(ComplexField { grid: g, amp: out })
}

/// First-order displaced mode `(1 + 2(ρ·dir)ξ/w²)·ε00`.
pub fn first_order_displaced(
    params: &BeamParams,
    grid: &PixelGrid,
    xi: f64,
    dir: (f64, f64),
) -> Result<ComplexField> {
    check_dir(dir)?;
    if !xi.is_finite() {
        return Err(OmxError::InvalidParameter(format!("xi = {xi}")));
    }
    let mut f = tem00(params, grid)?;
    if xi == 0.0 {
        return Ok(f);
    }
    let w = params.width();
    let c = 2.0 * xi / (w * w);
    for (idx, a) in f.amp.iter_mut().enumerate() {
        let (x, y) = grid.coord(idx);
        *a *= 1.0 + c * (x * dir.0 + y * dir.1);
    }
    Ok(f)
}

/// Normalized amplitude derivative `v` and optomechanical waist `a` of a
/// displacement-parameterized field, by central differences with step `h`.
pub fn derivative_mode<G>(generator: G, h: f64) -> Result<(RealField, f64)>
where
    G: Fn(f64) -> Result<ComplexField>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(OmxError::InvalidParameter(format!("step h = {h}")));
    }
    let up = generator(h)?;
    let dn = generator(-h)?;
    up.grid.same_as(&dn.grid)?;
    let d: Vec<f64> = up
        .amp
        .iter()
        .zip(&dn.amp)
        .map(|(a, b)| (a.norm() - b.norm()) / (2.0 * h))
        .collect();
    let e: f64 = d.iter().map(|v| v * v).sum::<f64>() * up.grid.area();
    if !(e > 0.0) || !e.is_finite() {
        return Err(OmxError::InsensitiveConfiguration);
    }
    let a = 1.0 / e.sqrt();
    let v = RealField {
        grid: up.grid,
        val: d.into_iter().map(|x| a * x).collect(),
    };
    Ok((v, a))
}

/// Unit-norm optimal detection mode of a displaced waist, `∝ ρx·|ε00|`.
pub fn analytic_v00(grid: &PixelGrid, w0: f64) -> Result<RealField> {
    if !(w0.is_finite() && w0 > 0.0) {
        return Err(OmxError::InvalidParameter(format!("w0 = {w0}")));
    }
    RealField::from_fn(*grid, |x, y| x * (-(x * x + y * y) / (w0 * w0)).exp()).normalized()
}
