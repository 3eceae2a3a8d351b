//! Intensity-only transmission-matrix calibration, optical-grain sizing and
//! phase-conjugate focusing.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OmxError, Result};
use crate::fft::Fft2;
use crate::grid_optics::{ComplexField, Inner, PixelGrid, RealField};

/// Dense complex `n_out x n_in` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionMatrix {
    pub n_out: usize,
    pub n_in: usize,
    pub data: Vec<C64>,
}

impl TransmissionMatrix {
    pub fn new(n_out: usize, n_in: usize, data: Vec<C64>) -> Result<Self> {
        if n_out == 0 || n_in == 0 {
            return Err(OmxError::InvalidParameter("empty transmission matrix".into()));
        }
        if data.len() != n_out * n_in {
            return Err(OmxError::DimensionMismatch(format!(
                "{} entries for a {n_out}x{n_in} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(OmxError::InvalidParameter("non-finite matrix entry".into()));
        }
        Ok(Self { n_out, n_in, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = C64::new(1.0, 0.0);
        }
        Self { n_out: n, n_in: n, data }
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.n_in..(r + 1) * self.n_in]
    }

    pub fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.n_in {
            return Err(OmxError::DimensionMismatch(format!(
                "input of length {} for n_in = {}",
                x.len(),
                self.n_in
            )));
        }
        Ok((0..self.n_out)
            .map(|r| self.row(r).iter().zip(x).map(|(t, v)| t * v).sum())
            .collect())
    }

    /// `T† y`.
    pub fn adjoint_apply(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.n_out {
            return Err(OmxError::DimensionMismatch(format!(
                "output of length {} for n_out = {}",
                y.len(),
                self.n_out
            )));
        }
        let mut out = vec![C64::new(0.0, 0.0); self.n_in];
        for (r, yr) in y.iter().enumerate() {
            if yr.re == 0.0 && yr.im == 0.0 {
                continue;
            }
            for (o, t) in out.iter_mut().zip(self.row(r)) {
                *o += t.conj() * yr;
            }
        }
        Ok(out)
    }
}

/// Summary of an intensity-only calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub basis: String,
    pub n_out: usize,
    pub n_in: usize,
    pub phase_steps: usize,
    /// Reference intensity below which a row is flagged and zeroed.
    pub reference_floor: f64,
    pub reference_max: f64,
    pub n_low_signal: usize,
    pub low_signal_rows: Vec<usize>,
    /// Smallest and mean row-wise correlation against ground truth, when known.
    pub min_row_correlation: Option<f64>,
    pub mean_row_correlation: Option<f64>,
}

fn is_pow2(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

/// Walsh-Hadamard (Sylvester) patterns as unit-amplitude `{0, π}` phases.
pub fn hadamard_patterns(n_in: usize) -> Result<Vec<Vec<C64>>> {
    if !is_pow2(n_in) {
        return Err(OmxError::InvalidParameter(format!(
            "Hadamard basis needs a power of two, got {n_in}"
        )));
    }
    Ok((0..n_in)
        .map(|k| {
            (0..n_in)
                .map(|j| {
                    if (k & j).count_ones() % 2 == 0 {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(-1.0, 0.0)
                    }
                })
                .collect()
        })
        .collect())
}

/// Interferometric term `conj(A)·B` from intensities `|A + e^{iθ_m} B|²` at
/// equally spaced steps `θ_m = 2πm/M`.
pub fn phase_step_combine(intensities: &[f64]) -> C64 {
    let m = intensities.len() as f64;
    intensities
        .iter()
        .enumerate()
        .map(|(s, &i)| i * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * s as f64 / m))
        .sum::<C64>()
        / m
}

/// Input basis used to probe the system during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationBasis {
    Hadamard,
    Direct,
}

/// Calibrates the observed transmission matrix from an intensity oracle.
///
/// Each probe `p` is sent as `(r + e^{iθ} p)/‖r + p‖` where `r` is the
/// uniform-phase reference, giving `conj(T r)·(T p)` per output pixel. The
/// result is expressed in the segment basis.
pub fn measure_tm<F>(
    oracle: F,
    n_in: usize,
    phase_steps: usize,
    basis: CalibrationBasis,
) -> Result<(TransmissionMatrix, CalibrationReport)>
where
    F: Fn(&[C64]) -> Result<Vec<f64>> + Sync,
{
    if phase_steps < 3 {
        return Err(OmxError::InvalidParameter(format!(
            "phase stepping needs at least 3 steps, got {phase_steps}"
        )));
    }
    if n_in == 0 {
        return Err(OmxError::InvalidParameter("n_in must be positive".into()));
    }
    let probes: Vec<Vec<C64>> = match basis {
        CalibrationBasis::Hadamard => hadamard_patterns(n_in)?,
        CalibrationBasis::Direct => {
            let amp = (n_in as f64).sqrt();
            (0..n_in)
                .map(|k| {
                    let mut p = vec![C64::new(0.0, 0.0); n_in];
                    p[k] = C64::new(amp, 0.0);
                    p
                })
                .collect()
        }
    };
    let reference = vec![C64::new(1.0, 0.0); n_in];
    let ref_energy = n_in as f64;
    let ref_int: Vec<f64> = {
        let s = 1.0 / ref_energy.sqrt();
        let scaled: Vec<C64> = reference.iter().map(|r| r * s).collect();
        oracle(&scaled)?.into_iter().map(|i| i * ref_energy).collect()
    };
    let n_out = ref_int.len();
    if n_out == 0 {
        return Err(OmxError::Degenerate("oracle returned an empty frame".into()));
    }

    let columns: Vec<Vec<C64>> = probes
        .par_iter()
        .map(|p| -> Result<Vec<C64>> {
            let energy = ref_energy + p.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let s = 1.0 / energy.sqrt();
            let mut frames = Vec::with_capacity(phase_steps);
            for m in 0..phase_steps {
                let ph = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / phase_steps as f64);
                let x: Vec<C64> = reference.iter().zip(p).map(|(r, v)| (r + ph * v) * s).collect();
                let frame = oracle(&x)?;
                if frame.len() != n_out {
                    return Err(OmxError::DimensionMismatch("oracle frame size changed".into()));
                }
                frames.push(frame);
            }
            Ok((0..n_out)
                .map(|o| {
                    let steps: Vec<f64> = frames.iter().map(|f| f[o]).collect();
                    phase_step_combine(&steps) * energy
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut data = vec![C64::new(0.0, 0.0); n_out * n_in];
    match basis {
        CalibrationBasis::Hadamard => {
            let h = &probes;
            let inv_n = 1.0 / n_in as f64;
            for o in 0..n_out {
                let row = &mut data[o * n_in..(o + 1) * n_in];
                for (k, col) in columns.iter().enumerate() {
                    let ck = col[o] * inv_n;
                    for (r, hk) in row.iter_mut().zip(&h[k]) {
                        *r += ck * hk.re;
                    }
                }
            }
        }
        CalibrationBasis::Direct => {
            let inv = 1.0 / (n_in as f64).sqrt();
            for o in 0..n_out {
                for (k, col) in columns.iter().enumerate() {
                    data[o * n_in + k] = col[o] * inv;
                }
            }
        }
    }

    let reference_max = ref_int.iter().cloned().fold(0.0, f64::max);
    let reference_floor = 1e-6 * reference_max;
    let mut low = Vec::new();
    for (o, &i) in ref_int.iter().enumerate() {
        if i < reference_floor {
            low.push(o);
            for v in &mut data[o * n_in..(o + 1) * n_in] {
                *v = C64::new(0.0, 0.0);
            }
        }
    }
    let report = CalibrationReport {
        basis: match basis {
            CalibrationBasis::Hadamard => "hadamard".into(),
            CalibrationBasis::Direct => "segment".into(),
        },
        n_out,
        n_in,
        phase_steps,
        reference_floor,
        reference_max,
        n_low_signal: low.len(),
        low_signal_rows: low,
        min_row_correlation: None,
        mean_row_correlation: None,
    };
    Ok((TransmissionMatrix::new(n_out, n_in, data)?, report))
}

/// `|⟨a_r, b_r⟩| / (‖a_r‖‖b_r‖)` for every row; zero rows give 0.
pub fn row_correlations(a: &TransmissionMatrix, b: &TransmissionMatrix) -> Result<Vec<f64>> {
    if a.n_out != b.n_out || a.n_in != b.n_in {
        return Err(OmxError::DimensionMismatch("matrices differ in shape".into()));
    }
    Ok((0..a.n_out)
        .map(|r| {
            let (ra, rb) = (a.row(r), b.row(r));
            let dot: C64 = ra.iter().zip(rb).map(|(x, y)| x.conj() * y).sum();
            let na: f64 = ra.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            let nb: f64 = rb.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot.norm() / (na * nb)
            }
        })
        .collect())
}

/// Fills the correlation fields of a report against the true matrix, over
/// rows that were not flagged.
pub fn score_against_truth(
    report: &mut CalibrationReport,
    observed: &TransmissionMatrix,
    truth: &TransmissionMatrix,
) -> Result<()> {
    let corr = row_correlations(observed, truth)?;
    let good: Vec<f64> = corr
        .iter()
        .enumerate()
        .filter(|(r, _)| report.low_signal_rows.binary_search(r).is_err())
        .map(|(_, &c)| c)
        .collect();
    if !good.is_empty() {
        report.min_row_correlation = Some(good.iter().cloned().fold(f64::INFINITY, f64::min));
        report.mean_row_correlation = Some(good.iter().sum::<f64>() / good.len() as f64);
    }
    Ok(())
}

fn half_max_crossing(r: &[f64]) -> Option<f64> {
    let k = r.iter().position(|&v| v < 0.5)?;
    if k == 0 {
        return None;
    }
    // Quadratic through three neighbouring lags, solved for the 0.5 level.
    let base = if k + 1 < r.len() { k - 1 } else { k.saturating_sub(2) };
    if base + 2 >= r.len() {
        return Some((k - 1) as f64 + (r[k - 1] - 0.5) / (r[k - 1] - r[k]));
    }
    let (y0, y1, y2) = (r[base], r[base + 1], r[base + 2]);
    let a = 0.5 * (y0 - 2.0 * y1 + y2);
    let b = 0.5 * (y2 - y0);
    let c = y1 - 0.5;
    let lo = (k - 1) as f64 - (base + 1) as f64;
    let hi = lo + 1.0;
    let linear = (k - 1) as f64 + (r[k - 1] - 0.5) / (r[k - 1] - r[k]);
    let t = if a.abs() < 1e-14 {
        -c / b
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Some(linear);
        }
        let s = disc.sqrt();
        let t1 = (-b + s) / (2.0 * a);
        let t2 = (-b - s) / (2.0 * a);
        let inside = |t: f64| t >= lo - 1e-12 && t <= hi + 1e-12;
        match (inside(t1), inside(t2)) {
            (true, _) => t1,
            (_, true) => t2,
            _ => return Some(linear),
        }
    };
    Some((base + 1) as f64 + t)
}

/// Optical grain: half-width at half-maximum of the central autocorrelation
/// peak of the mean-subtracted intensity, geometric mean of the x and y
/// widths, in grid length units.
pub fn grain_size(intensity: &RealField) -> Result<f64> {
    let g = intensity.grid;
    let mean = intensity.sum() / g.len() as f64;
    let m = 2 * g.nx.max(g.ny);
    let mut buf = vec![C64::new(0.0, 0.0); m * m];
    for j in 0..g.ny {
        for i in 0..g.nx {
            buf[j * m + i] = C64::new(intensity.val[g.index(i, j)] - mean, 0.0);
        }
    }
    let fft = Fft2::new(m);
    fft.forward(&mut buf);
    for v in &mut buf {
        *v = C64::new(v.norm_sqr(), 0.0);
    }
    fft.inverse(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 1e-300 * (m * m) as f64) {
        return Err(OmxError::NoAutocorrelationPeak);
    }
    let row: Vec<f64> = (0..g.nx).map(|i| buf[i].re / c0).collect();
    let col: Vec<f64> = (0..g.ny).map(|j| buf[j * m].re / c0).collect();
    let hx = half_max_crossing(&row).ok_or(OmxError::NoAutocorrelationPeak)?;
    let hy = half_max_crossing(&col).ok_or(OmxError::NoAutocorrelationPeak)?;
    Ok((hx * hy).sqrt() * g.pitch)
}

/// Unit-norm Gaussian amplitude of 1/e radius `radius` centered at `center`.
pub fn target_spot(grid: &PixelGrid, center: (f64, f64), radius: f64) -> Result<ComplexField> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(OmxError::InvalidParameter(format!("target radius = {radius}")));
    }
    ComplexField::from_fn(*grid, |x, y| {
        let (dx, dy) = (x - center.0, y - center.1);
        C64::new((-(dx * dx + dy * dy) / (radius * radius)).exp(), 0.0)
    })
    .normalized()
}

/// `T† u_foc` at unit input energy, or its phase-only projection.
pub fn phase_conjugate(t: &TransmissionMatrix, u_foc: &ComplexField, phase_only: bool) -> Result<Vec<C64>> {
    let e = t.adjoint_apply(&u_foc.amp)?;
    let norm: f64 = e.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(OmxError::Degenerate("target is orthogonal to every input".into()));
    }
    if phase_only {
        let a = 1.0 / (e.len() as f64).sqrt();
        Ok(e.iter().map(|v| C64::from_polar(a, v.arg())).collect())
    } else {
        Ok(e.iter().map(|v| v / norm).collect())
    }
}

/// Shaped intensity at the target pixel over the mean unshaped intensity in
/// a disk of `disk_radius` around the target (the target pixel alone when
/// the disk holds no pixel center).
pub fn enhancement(
    shaped: &RealField,
    unshaped: &RealField,
    center: (f64, f64),
    disk_radius: f64,
) -> Result<f64> {
    shaped.grid.same_as(&unshaped.grid)?;
    let g = shaped.grid;
    let (ti, tj) = g.nearest_pixel(center.0, center.1);
    let target = shaped.val[g.index(ti, tj)];
    let r2 = disk_radius * disk_radius;
    let (mut s, mut n) = (0.0, 0usize);
    for (idx, &v) in unshaped.val.iter().enumerate() {
        let (x, y) = g.coord(idx);
        let (dx, dy) = (x - center.0, y - center.1);
        if dx * dx + dy * dy <= r2 {
            s += v;
            n += 1;
        }
    }
    let mean = if n == 0 {
        unshaped.val[g.index(ti, tj)]
    } else {
        s / n as f64
    };
    if !(mean > 0.0) {
        return Err(OmxError::Degenerate("unshaped intensity vanishes around the target".into()));
    }
    Ok(target / mean)
}
