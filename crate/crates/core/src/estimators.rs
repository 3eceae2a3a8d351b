//! Linear pixel-gain motion estimators, their figures of merit and the
//! balanced-mask shot-noise audit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{expected_intensity, Frame};
use crate::error::{OmxError, Result};
use crate::grid_optics::{Inner, PixelGrid, RealField};
use crate::scattering::{Input, ScatterModel};

/// Real per-pixel weights defining `x̂ = Σ g·(counts − reference)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub grid: PixelGrid,
    pub g: Vec<f64>,
    pub label: String,
}

impl GainMap {
    pub fn new(grid: PixelGrid, g: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if g.len() != grid.len() {
            return Err(OmxError::DimensionMismatch(format!(
                "{} gains for a grid of {}",
                g.len(),
                grid.len()
            )));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(OmxError::InvalidParameter("non-finite gain".into()));
        }
        Ok(Self {
            grid,
            g,
            label: label.into(),
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            g: self.g.iter().map(|v| v * s).collect(),
            label: self.label.clone(),
        }
    }

    /// Rescaled so that the detection mode `g·|u0|` has unit norm.
    pub fn unit_detection(&self, u0_amp: &RealField) -> Result<Self> {
        self.grid.same_as(&u0_amp.grid)?;
        let e: f64 = self
            .g
            .iter()
            .zip(&u0_amp.val)
            .map(|(g, u)| (g * u) * (g * u))
            .sum::<f64>()
            * self.grid.area();
        if !(e > 0.0) {
            return Err(OmxError::Degenerate(format!(
                "gain '{}' has no overlap with the illuminated pixels",
                self.label
            )));
        }
        Ok(self.scaled(1.0 / e.sqrt()))
    }
}

/// Figures of merit of one estimator on one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub label: String,
    pub input: String,
    pub mu: f64,
    pub dmu2: f64,
    pub snr: f64,
    pub projection: f64,
    pub a_eps: f64,
    #[serde(rename = "N")]
    pub n_photons: f64,
    pub notes: String,
}

/// `x̂_j = Σ g·(counts_j − reference)` for every frame.
pub fn motion_signal(frames: &[Frame], reference: &RealField, gain: &GainMap) -> Result<Vec<f64>> {
    reference.grid.same_as(&gain.grid)?;
    for f in frames {
        f.grid.same_as(&gain.grid)?;
    }
    let offset: f64 = gain.g.iter().zip(&reference.val).map(|(g, r)| g * r).sum();
    Ok(frames
        .par_iter()
        .map(|f| {
            let s: f64 = gain.g.iter().zip(&f.counts).map(|(g, &c)| g * f64::from(c)).sum();
            s - offset
        })
        .collect())
}

/// Noiseless analog of [`motion_signal`] on expected intensities.
pub fn motion_signal_fields(fields: &[RealField], reference: &RealField, gain: &GainMap) -> Result<Vec<f64>> {
    reference.grid.same_as(&gain.grid)?;
    fields
        .iter()
        .map(|f| {
            f.grid.same_as(&gain.grid)?;
            Ok(gain
                .g
                .iter()
                .zip(f.val.iter().zip(&reference.val))
                .map(|(g, (v, r))| g * (v - r))
                .sum())
        })
        .collect()
}

/// Half-plane gain: −1 ahead of the motion axis, +1 behind, 0 on it.
pub fn split_gain(grid: &PixelGrid, dir: (f64, f64)) -> GainMap {
    let g = (0..grid.len())
        .map(|idx| {
            let (x, y) = grid.coord(idx);
            let p = x * dir.0 + y * dir.1;
            if p.abs() < 1e-12 {
                0.0
            } else if p > 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    GainMap {
        grid: *grid,
        g,
        label: "split".into(),
    }
}

/// Position along the motion axis, `g = ρ·dir`.
pub fn tracking_gain(grid: &PixelGrid, dir: (f64, f64)) -> GainMap {
    let g = (0..grid.len())
        .map(|idx| {
            let (x, y) = grid.coord(idx);
            x * dir.0 + y * dir.1
        })
        .collect();
    GainMap {
        grid: *grid,
        g,
        label: "tracking".into(),
    }
}

/// `g = v/|u0|` on pixels brighter than `floor·max|u0|`, scaled for a
/// unit-norm detection mode. A floor that discards more than half of the
/// derivative mode's energy is reported as degenerate.
pub fn optimal_gain(u0_amp: &RealField, v: &RealField, floor: f64) -> Result<GainMap> {
    u0_amp.grid.same_as(&v.grid)?;
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(OmxError::InvalidParameter(format!("floor = {floor}")));
    }
    let thr = floor * u0_amp.max();
    let g: Vec<f64> = u0_amp
        .val
        .iter()
        .zip(&v.val)
        .map(|(&u, &d)| if u >= thr && u > 0.0 { d / u } else { 0.0 })
        .collect();
    let kept: f64 = g
        .iter()
        .zip(&v.val)
        .filter(|(g, _)| **g != 0.0)
        .map(|(_, d)| d * d)
        .sum::<f64>()
        * v.grid.area();
    let total = v.energy();
    if total > 0.0 && kept < 0.5 * total {
        return Err(OmxError::Degenerate(format!(
            "floor {floor} keeps only {:.1}% of the derivative mode",
            100.0 * kept / total
        )));
    }
    let gm = GainMap {
        grid: u0_amp.grid,
        g,
        label: "optimal".into(),
    };
    gm.unit_detection(u0_amp).map_err(|_| {
        OmxError::Degenerate("derivative mode and illuminated pixels have disjoint support".into())
    })
}

/// Unit-norm measurement mode `g·|u0|`.
pub fn detection_mode(gain: &GainMap, u0_amp: &RealField) -> Result<RealField> {
    gain.grid.same_as(&u0_amp.grid)?;
    RealField {
        grid: gain.grid,
        val: gain.g.iter().zip(&u0_amp.val).map(|(g, u)| g * u).collect(),
    }
    .normalized()
}

/// Overlap `⟨v_g, v⟩` of the detection mode with the derivative mode.
pub fn projection(gain: &GainMap, u0_amp: &RealField, v: &RealField) -> Result<f64> {
    detection_mode(gain, u0_amp)?.inner(v)
}

fn mean_var(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let m = series.iter().sum::<f64>() / n;
    let v = series.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v)
}

/// `μ = √2·std(series)/N`.
pub fn modulation_depth(series: &[f64], n_photons: f64) -> Result<f64> {
    if series.is_empty() {
        return Err(OmxError::Degenerate("empty series".into()));
    }
    if !(n_photons > 0.0) {
        return Err(OmxError::InvalidParameter(format!("N = {n_photons}")));
    }
    let (_, v) = mean_var(series);
    Ok(std::f64::consts::SQRT_2 * v.sqrt() / n_photons)
}

/// Noise contrast `Δμ²` of a motion-free series and `SNR = μ²/(2Δμ²)`.
pub fn snr(mu_signal: f64, series_noise: &[f64], n_photons: f64) -> Result<(f64, f64)> {
    let dmu = modulation_depth(series_noise, n_photons)?;
    let dmu2 = dmu * dmu;
    if !(dmu2 > 0.0) {
        return Err(OmxError::NoiselessSnr);
    }
    Ok((dmu2, mu_signal * mu_signal / (2.0 * dmu2)))
}

/// Coherent-state ceiling `N/2`.
pub fn quantum_limit(n_photons: f64) -> f64 {
    0.5 * n_photons
}

/// Poisson Fisher information `Σ (dI/dξ)²/I` for displacement at rest.
pub fn fisher_info(model: &ScatterModel, input: &Input, n_photons: f64, h: f64) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(OmxError::InvalidParameter(format!("step h = {h}")));
    }
    let i0 = expected_intensity(model, input, 0.0, n_photons)?;
    let up = expected_intensity(model, input, h, n_photons)?;
    let dn = expected_intensity(model, input, -h, n_photons)?;
    let f: f64 = i0
        .val
        .iter()
        .zip(up.val.iter().zip(&dn.val))
        .filter(|(i, _)| **i > 0.0)
        .map(|(i, (a, b))| {
            let d = (a - b) / (2.0 * h);
            d * d / i
        })
        .sum();
    if !(f > 0.0) {
        return Err(OmxError::InsensitiveConfiguration);
    }
    Ok(f)
}

/// Cramér-Rao bound on the displacement variance per frame.
pub fn crb(model: &ScatterModel, input: &Input, n_photons: f64, h: f64) -> Result<f64> {
    Ok(1.0 / fisher_info(model, input, n_photons, h)?)
}

/// Intensity-weighted mean position.
pub fn barycenter(intensity: &RealField) -> Result<(f64, f64)> {
    let g = intensity.grid;
    let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
    for (idx, &v) in intensity.val.iter().enumerate() {
        let (x, y) = g.coord(idx);
        sx += x * v;
        sy += y * v;
        s += v;
    }
    if s == 0.0 {
        return Err(OmxError::Degenerate("barycenter of a dark frame".into()));
    }
    Ok((sx / s, sy / s))
}

/// Principal axis of the 2D tracking trajectory, oriented into `x > 0`.
pub fn motion_direction(frames: &[Frame], reference: &RealField) -> Result<(f64, f64)> {
    if frames.len() < 2 {
        return Err(OmxError::Degenerate("need at least two frames".into()));
    }
    let g = reference.grid;
    let sx = motion_signal(frames, reference, &tracking_gain(&g, (1.0, 0.0)))?;
    let sy = motion_signal(frames, reference, &tracking_gain(&g, (0.0, 1.0)))?;
    let (mx, vxx) = mean_var(&sx);
    let (my, vyy) = mean_var(&sy);
    let n = sx.len() as f64;
    let vxy = sx.iter().zip(&sy).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    let tr = vxx + vyy;
    let det = vxx * vyy - vxy * vxy;
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let l1 = 0.5 * tr + disc;
    let l2 = 0.5 * tr - disc;
    let ratio = if l2 > 0.0 { l1 / l2 } else if l1 > 0.0 { f64::INFINITY } else { 1.0 };
    if ratio < 1.2 {
        return Err(OmxError::DirectionIllDefined(ratio));
    }
    let th = 0.5 * (2.0 * vxy).atan2(vxx - vyy);
    let (mut dx, mut dy) = (th.cos(), th.sin());
    if dx < 0.0 || (dx == 0.0 && dy < 0.0) {
        dx = -dx;
        dy = -dy;
    }
    Ok((dx, dy))
}

/// Per-frame total counts over their mean, and the modulation depth of that
/// normalized series.
pub fn intensity_series(frames: &[Frame]) -> Result<(Vec<f64>, f64)> {
    if frames.is_empty() {
        return Err(OmxError::Degenerate("empty frame list".into()));
    }
    let tot: Vec<f64> = frames.iter().map(|f| f.total() as f64).collect();
    let m = tot.iter().sum::<f64>() / tot.len() as f64;
    if m == 0.0 {
        return Err(OmxError::Degenerate("all frames are dark".into()));
    }
    let norm: Vec<f64> = tot.iter().map(|t| t / m).collect();
    let depth = modulation_depth(&norm, 1.0)?;
    Ok((norm, depth))
}

/// Band widths in pixels spanning 1 to 60 px on a 256-pixel-wide camera,
/// scaled to `grid.nx`, deduplicated after rounding.
pub fn audit_widths(grid: &PixelGrid, count: usize) -> Vec<f64> {
    let scale = grid.nx as f64 / 256.0;
    let mut out: Vec<f64> = Vec::new();
    let count = count.max(1);
    for i in 0..count {
        let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
        let w = ((1.0 + 59.0 * t) * scale).round().max(1.0);
        if out.last() != Some(&w) {
            out.push(w);
        }
    }
    out
}

/// Split gains with a centered band of `widths_px[i]` pixels (measured along
/// `dir`) removed.
pub fn balanced_masks(grid: &PixelGrid, dir: (f64, f64), widths_px: &[f64]) -> Result<Vec<GainMap>> {
    let split = split_gain(grid, dir);
    widths_px
        .iter()
        .map(|&w| {
            if !(w.is_finite() && w >= 0.0) {
                return Err(OmxError::InvalidParameter(format!("band width {w}")));
            }
            let half = 0.5 * w * grid.pitch;
            let g: Vec<f64> = split
                .g
                .iter()
                .enumerate()
                .map(|(idx, &s)| {
                    let (x, y) = grid.coord(idx);
                    if (x * dir.0 + y * dir.1).abs() < half {
                        0.0
                    } else {
                        s
                    }
                })
                .collect();
            if g.iter().all(|&v| v == 0.0) {
                return Err(OmxError::Degenerate(format!("band of {w} px leaves an empty mask")));
            }
            Ok(GainMap {
                grid: *grid,
                g,
                label: format!("balanced_{w}px"),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub delta_px: f64,
    pub mean_sum: f64,
    pub var_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub points: Vec<AuditPoint>,
    pub slope: f64,
    pub slope_se: f64,
    /// Half-width of the 95% confidence interval on the slope.
    pub slope_ci95: f64,
}

/// Variance of each differential estimator against the mean of its sum
/// estimator, with a least-squares slope through the origin.
pub fn noise_audit(frames: &[Frame], masks: &[GainMap]) -> Result<AuditResult> {
    if frames.len() < 2 {
        return Err(OmxError::Degenerate("noise audit needs at least two frames".into()));
    }
    if masks.is_empty() {
        return Err(OmxError::InvalidParameter("no masks".into()));
    }
    let mut points = Vec::with_capacity(masks.len());
    for m in masks {
        for f in frames {
            f.grid.same_as(&m.grid)?;
        }
        let (diff, sum): (Vec<f64>, Vec<f64>) = frames
            .par_iter()
            .map(|f| {
                let mut d = 0.0;
                let mut s = 0.0;
                for (g, &c) in m.g.iter().zip(&f.counts) {
                    let c = f64::from(c);
                    d += g * c;
                    s += g.abs() * c;
                }
                (d, s)
            })
            .unzip();
        let n = diff.len() as f64;
        let (_, vd) = mean_var(&diff);
        let (ms, _) = mean_var(&sum);
        let delta_px = m
            .label
            .strip_prefix("balanced_")
            .and_then(|s| s.strip_suffix("px"))
            .and_then(|s| s.parse().ok())
            .unwrap_or(f64::NAN);
        points.push(AuditPoint {
            delta_px,
            mean_sum: ms,
            var_diff: vd * n / (n - 1.0),
        });
    }
    let sxx: f64 = points.iter().map(|p| p.mean_sum * p.mean_sum).sum();
    if !(sxx > 0.0) {
        return Err(OmxError::Degenerate("audit masks collect no light".into()));
    }
    let sxy: f64 = points.iter().map(|p| p.mean_sum * p.var_diff).sum();
    let slope = sxy / sxx;
    let k = points.len();
    let slope_se = if k > 1 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.var_diff - slope * p.mean_sum).powi(2))
            .sum();
        (rss / (k - 1) as f64 / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(AuditResult {
        points,
        slope,
        slope_se,
        slope_ci95: 1.96 * slope_se,
    })
}
