//! Experiment pipelines: calibration, focusing, acquisition, estimation,
//! noise audit and report assembly, each available in memory and as a
//! file-producing command.

pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::detection::{mean_frame, record_sequence, reference_frame, DriveConfig, Frame};
use crate::error::{OmxError, Result};
use crate::estimators::{
    audit_widths, balanced_masks, intensity_series, modulation_depth, motion_direction, motion_signal,
    noise_audit, optimal_gain, projection, quantum_limit, snr, split_gain, tracking_gain, AuditResult,
    EstimatorReport, GainMap,
};
use crate::grid_optics::{RealField, Inner};
use crate::io;
use crate::scattering::{Input, ScatterModel};
use crate::tm::{
    enhancement, grain_size, measure_tm, phase_conjugate, score_against_truth, target_spot, CalibrationBasis,
    CalibrationReport, TransmissionMatrix,
};

pub use config::*;

/// Where a report's numbers came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub version: String,
    pub config: ExperimentConfig,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        let mut seeds = BTreeMap::new();
        seeds.insert("model".to_string(), cfg.sub_seed("model"));
        seeds.insert("noise".to_string(), cfg.sub_seed("noise"));
        seeds.insert("audit".to_string(), cfg.sub_seed("audit"));
        for label in &cfg.inputs {
            for stage in ["reference", "motion", "rest", "diff-plus", "diff-minus"] {
                let tag = format!("{stage}-{label}");
                seeds.insert(tag.clone(), cfg.sub_seed(&tag));
            }
            if label == cfg.direction_input() {
                let tag = format!("dircal-{label}");
                seeds.insert(tag.clone(), cfg.sub_seed(&tag));
            }
        }
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
        }
    }
}

fn medium(model: &ScatterModel) -> Result<&crate::scattering::RandomMedium> {
    match model {
        ScatterModel::RandomMedium(m) => Ok(m),
        ScatterModel::PureDisplacement(_) => Err(OmxError::Config(
            "wavefront shaping requires model.kind = random_medium".into(),
        )),
    }
}

/// Intensity-only calibration of the model at rest, scored against its true TM.
pub fn calibrate(cfg: &ExperimentConfig, model: &ScatterModel) -> Result<(TransmissionMatrix, CalibrationReport)> {
    let m = medium(model)?;
    let n_in = cfg.shaping.n_in;
    if n_in == 0 || n_in & (n_in - 1) != 0 {
        return Err(OmxError::Config(format!(
            "shaping.n_in = {n_in} is not a power of two"
        )));
    }
    let oracle = |eps: &[C64]| -> Result<Vec<f64>> {
        Ok(m.transmit_pattern(eps, 0.0)?.amp.iter().map(|a| a.norm_sqr()).collect())
    };
    let (tm, mut report) = measure_tm(oracle, n_in, cfg.shaping.phase_steps, CalibrationBasis::Hadamard)?;
    let truth = m.true_tm()?;
    score_against_truth(&mut report, &tm, &truth)?;
    Ok((tm, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusSummary {
    pub grain_size: f64,
    pub target_center: [f64; 2],
    pub target_pixel: [usize; 2],
    pub target_radius: f64,
    pub disk_radius: f64,
    pub phase_only: bool,
    pub enhancement: f64,
    /// Output energy of the shaped input relative to the unshaped one.
    pub delivered_energy: f64,
}

/// Grain sizing, target definition and phase conjugation through `tm`.
pub fn focus(cfg: &ExperimentConfig, model: &ScatterModel, tm: &TransmissionMatrix) -> Result<(Vec<C64>, FocusSummary)> {
    let m = medium(model)?;
    let unshaped_field = m.transmit_pattern(&m.reference_pattern(), 0.0)?;
    let unshaped = unshaped_field.intensity();
    let grain = grain_size(&unshaped)?;
    let grid = m.camera_grid;
    let (ti, tj) = match cfg.shaping.target_center {
        Some([x, y]) => grid.nearest_pixel(x, y),
        None => grid.nearest_pixel(0.0, 0.0),
    };
    let center = match cfg.shaping.target_center {
        Some([x, y]) => (x, y),
        None => (grid.x(ti), grid.y(tj)),
    };
    let radius = cfg.shaping.target_radius.unwrap_or(grain);
    let target = target_spot(&grid, center, radius)?;
    let pattern = phase_conjugate(tm, &target, cfg.shaping.phase_only)?;
    let shaped_field = m.transmit_pattern(&pattern, 0.0)?;
    let disk = cfg.shaping.disk_grains * grain;
    let eta = enhancement(&shaped_field.intensity(), &unshaped, center, disk)?;
    Ok((
        pattern,
        FocusSummary {
            grain_size: grain,
            target_center: [center.0, center.1],
            target_pixel: [ti, tj],
            target_radius: radius,
            disk_radius: disk,
            phase_only: cfg.shaping.phase_only,
            enhancement: eta,
            delivered_energy: shaped_field.energy() / unshaped_field.energy(),
        },
    ))
}

/// Resolves an input label against the model and an optional shaped pattern.
pub fn resolve_input(model: &ScatterModel, label: &str, pattern: Option<&[C64]>) -> Result<Input> {
    match label {
        "unshaped" => model.reference_input(),
        "shaped" => {
            medium(model)?;
            let p = pattern.ok_or_else(|| OmxError::MissingArtifact {
                path: "pattern.csv".into(),
                command: "focus".into(),
            })?;
            Ok(Input::Pattern(p.to_vec()))
        }
        other => Err(OmxError::Config(format!("unknown input '{other}'"))),
    }
}

/// All frames recorded for one input.
#[derive(Debug, Clone)]
pub struct Acquisition {
    pub label: String,
    pub reference: RealField,
    pub motion: Vec<Frame>,
    pub rest: Vec<Frame>,
    pub dircal: Vec<Frame>,
    /// Mean frames at `±differential_step` when the optimal gain is estimated
    /// from data.
    pub differential: Option<(RealField, RealField)>,
}

fn static_drive(cfg: &ExperimentConfig, xi: f64, n: usize) -> DriveConfig {
    DriveConfig {
        omega_m: 0.0,
        xi0: xi,
        frame_rate: cfg.drive.frame_rate,
        n_frames: n,
        phase0: std::f64::consts::FRAC_PI_2,
    }
}

pub fn acquire(cfg: &ExperimentConfig, model: &ScatterModel, label: &str, input: &Input) -> Result<Acquisition> {
    let drive = cfg.drive_config();
    let noise = cfg.noise_config();
    let n = cfg.photons;
    let seed = |stage: &str| cfg.sub_seed(&format!("{stage}-{label}"));
    let reference = reference_frame(
        model,
        input,
        n,
        cfg.estimator.reference_frames,
        &noise,
        drive.frame_rate,
        seed("reference"),
    )?;
    let motion = record_sequence(model, input, &drive, &noise, n, seed("motion"))?;
    let rest = record_sequence(model, input, &drive.at_rest(), &noise, n, seed("rest"))?;
    let dircal = if cfg.estimator.direction == DirectionPolicy::Fit && label == cfg.direction_input() {
        let d = DriveConfig {
            n_frames: cfg.estimator.calibration_frames,
            xi0: cfg.estimator.calibration_xi0,
            ..drive
        };
        record_sequence(model, input, &d, &noise, n, seed("dircal"))?
    } else {
        Vec::new()
    };
    let differential = if cfg.estimator.optimal_source == OptimalSource::Differential {
        let step = cfg.estimator.differential_step;
        let m = cfg.estimator.differential_frames.max(1);
        let plus = record_sequence(model, input, &static_drive(cfg, step, m), &noise, n, seed("diff-plus"))?;
        let minus = record_sequence(model, input, &static_drive(cfg, -step, m), &noise, n, seed("diff-minus"))?;
        Some((mean_frame(&plus)?, mean_frame(&minus)?))
    } else {
        None
    };
    Ok(Acquisition {
        label: label.to_string(),
        reference,
        motion,
        rest,
        dircal,
        differential,
    })
}

/// Per-input estimation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEstimate {
    pub input: String,
    pub direction: [f64; 2],
    pub direction_deg: f64,
    pub a_eps: f64,
    pub intensity_depth: f64,
    pub reports: Vec<EstimatorReport>,
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub summary: InputEstimate,
    pub gains: Vec<GainMap>,
    pub series: Vec<Vec<f64>>,
}

fn amplitude_from_counts(counts: &RealField, n_photons: f64) -> RealField {
    let s = 1.0 / (n_photons * counts.grid.area());
    RealField {
        grid: counts.grid,
        val: counts.val.iter().map(|v| (v.max(0.0) * s).sqrt()).collect(),
    }
}

/// Motion axis used to orient the split and tracking gains.
pub fn motion_axis(cfg: &ExperimentConfig, model: &ScatterModel, acqs: &[Acquisition]) -> Result<(f64, f64)> {
    match cfg.estimator.direction {
        DirectionPolicy::Model => Ok(model.dir()),
        DirectionPolicy::Fit => {
            let label = cfg.direction_input();
            let acq = acqs
                .iter()
                .find(|a| a.label == label)
                .ok_or_else(|| OmxError::Config(format!("no acquisition for input '{label}'")))?;
            motion_direction(&acq.dircal, &acq.reference)
        }
    }
}

pub fn estimate(
    cfg: &ExperimentConfig,
    model: &ScatterModel,
    input: &Input,
    acq: &Acquisition,
    dir: (f64, f64),
) -> Result<EstimateOutput> {
    let n = cfg.photons;
    let grid = model.camera_grid();
    let u0_true = model.transmit(input, 0.0)?.abs();
    let (v, a) = model.true_derivative(input, cfg.estimator.derivative_step)?;
    let u0_est = amplitude_from_counts(&acq.reference, n);
    let mut reports = Vec::new();
    let mut gains = Vec::new();
    let mut series = Vec::new();
    for label in &cfg.estimator.gains {
        let raw = match label.as_str() {
            "split" => split_gain(&grid, dir),
            "tracking" => tracking_gain(&grid, dir),
            "optimal" => match (cfg.estimator.optimal_source, &acq.differential) {
                (OptimalSource::Model, _) => optimal_gain(&u0_true, &v, cfg.estimator.floor)?,
                (OptimalSource::Differential, Some((plus, minus))) => {
                    let step = cfg.estimator.differential_step;
                    let (ap, am) = (amplitude_from_counts(plus, n), amplitude_from_counts(minus, n));
                    let d = RealField {
                        grid,
                        val: ap.val.iter().zip(&am.val).map(|(p, m)| (p - m) / (2.0 * step)).collect(),
                    };
                    optimal_gain(&u0_est, &d.normalized()?, cfg.estimator.floor)?
                }
                (OptimalSource::Differential, None) => {
                    return Err(OmxError::Config("differential frames were not acquired".into()))
                }
            },
            other => return Err(OmxError::Config(format!("unknown gain '{other}'"))),
        };
        let g = raw.unit_detection(&u0_est)?;
        let proj = projection(&g, &u0_true, &v)?;
        let x = motion_signal(&acq.motion, &acq.reference, &g)?;
        let mu = modulation_depth(&x, n)?;
        let xn = motion_signal(&acq.rest, &acq.reference, &g)?;
        let (dmu2, s) = snr(mu, &xn, n)?;
        reports.push(EstimatorReport {
            label: label.clone(),
            input: acq.label.clone(),
            mu,
            dmu2,
            snr: s,
            projection: proj,
            a_eps: a,
            n_photons: n,
            notes: format!("direction {:.4} deg", dir.1.atan2(dir.0).to_degrees()),
        });
        gains.push(g);
        series.push(x);
    }
    let (_, depth) = intensity_series(&acq.motion)?;
    Ok(EstimateOutput {
        summary: InputEstimate {
            input: acq.label.clone(),
            direction: [dir.0, dir.1],
            direction_deg: dir.1.atan2(dir.0).to_degrees(),
            a_eps: a,
            intensity_depth: depth,
            reports,
        },
        gains,
        series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub source: AuditSource,
    pub n_frames: usize,
    pub classical_rms: f64,
    pub result: AuditResult,
    /// Variance of the plain total-count estimator over its mean.
    pub sum_variance_ratio: f64,
}

/// Motion-free frames of the audit source.
pub fn audit_frames(cfg: &ExperimentConfig) -> Result<(ScatterModel, Vec<Frame>)> {
    if cfg.audit.n_frames == 0 {
        return Err(OmxError::Config("noise audit needs frames, audit.n_frames = 0".into()));
    }
    let model = match cfg.audit.source {
        AuditSource::Beam => ScatterModel::pure(cfg.beam_params()?, cfg.beam_grid()?, cfg.dir())?,
        AuditSource::Model => cfg.build_model()?,
    };
    let input = model.reference_input()?;
    let drive = DriveConfig {
        n_frames: cfg.audit.n_frames,
        ..cfg.drive_config().at_rest()
    };
    let frames = record_sequence(&model, &input, &drive, &cfg.noise_config(), cfg.photons, cfg.sub_seed("audit"))?;
    Ok((model, frames))
}

pub fn audit(cfg: &ExperimentConfig, model: &ScatterModel, frames: &[Frame]) -> Result<AuditSummary> {
    if frames.is_empty() {
        return Err(OmxError::Degenerate("noise audit received zero frames".into()));
    }
    let grid = model.camera_grid();
    let masks = balanced_masks(&grid, model.dir(), &audit_widths(&grid, cfg.audit.n_widths))?;
    let result = noise_audit(frames, &masks)?;
    let totals: Vec<f64> = frames.iter().map(|f| f.total() as f64).collect();
    let k = totals.len() as f64;
    let m = totals.iter().sum::<f64>() / k;
    let var = totals.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok(AuditSummary {
        source: cfg.audit.source,
        n_frames: frames.len(),
        classical_rms: cfg.noise.classical_rms,
        result,
        sum_variance_ratio: var / m,
    })
}

/// Consolidated results of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub estimators: Vec<EstimatorReport>,
    pub calibration: Option<CalibrationReport>,
    pub grain_size: Option<f64>,
    pub enhancement: Option<f64>,
    pub a_00: Option<f64>,
    pub a_foc: Option<f64>,
    pub a_ratio: Option<f64>,
    /// SNR(shaped, optimal) over SNR(unshaped, split).
    pub improvement: Option<f64>,
    pub audit_slope: Option<f64>,
    pub audit_slope_ci95: Option<f64>,
    pub quantum_limit: f64,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn find(&self, input: &str, gain: &str) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|r| r.input == input && r.label == gain)
    }
}

pub fn assemble_report(
    cfg: &ExperimentConfig,
    calibration: Option<&CalibrationReport>,
    focus: Option<&FocusSummary>,
    estimates: &[InputEstimate],
    audit: Option<&AuditSummary>,
) -> RunReport {
    let estimators: Vec<EstimatorReport> = estimates.iter().flat_map(|e| e.reports.iter().cloned()).collect();
    let a_of = |label: &str| estimates.iter().find(|e| e.input == label).map(|e| e.a_eps);
    let (a_00, a_foc) = (a_of("unshaped"), a_of("shaped"));
    let snr_of = |input: &str, gain: &str| {
        estimators
            .iter()
            .find(|r| r.input == input && r.label == gain)
            .map(|r| r.snr)
    };
    let improvement = match (snr_of("shaped", "optimal"), snr_of("unshaped", "split")) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    RunReport {
        estimators,
        calibration: calibration.cloned(),
        grain_size: focus.map(|f| f.grain_size),
        enhancement: focus.map(|f| f.enhancement),
        a_00,
        a_foc,
        a_ratio: match (a_00, a_foc) {
            (Some(a), Some(b)) => Some(a / b),
            _ => None,
        },
        improvement,
        audit_slope: audit.map(|a| a.result.slope),
        audit_slope_ci95: audit.map(|a| a.result.slope_ci95),
        quantum_limit: quantum_limit(cfg.photons),
        provenance: Provenance::new(cfg),
    }
}

/// Figure-data CSVs: `(fig3, fig4, fig5)`.
pub fn figure_csvs(report: &RunReport) -> (String, String, String) {
    let mut fig3 = String::from("gain,mu,projection\n");
    let mut fig4 = String::from("gain,mu,projection,a_00_over_a_foc,enhancement\n");
    let mut fig5 = String::from("gain,input,snr,snr_q\n");
    let ratio = report.a_ratio.map_or("".to_string(), |r| r.to_string());
    let eta = report.enhancement.map_or("".to_string(), |e| e.to_string());
    for r in &report.estimators {
        match r.input.as_str() {
            "unshaped" => {
                let _ = writeln!(fig3, "{},{},{}", r.label, r.mu, r.projection);
            }
            "shaped" => {
                let _ = writeln!(fig4, "{},{},{},{},{}", r.label, r.mu, r.projection, ratio, eta);
            }
            _ => {}
        }
        let _ = writeln!(fig5, "{},{},{},{}", r.label, r.input, r.snr, report.quantum_limit);
    }
    (fig3, fig4, fig5)
}

/// Everything an in-memory run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub calibration: Option<CalibrationReport>,
    pub focus: Option<FocusSummary>,
    pub estimates: Vec<InputEstimate>,
    pub audit: Option<AuditSummary>,
    pub report: RunReport,
}

/// Runs calibration, focusing, acquisition and estimation for every
/// configured input, plus the noise audit when `with_audit` is set.
pub fn run_pipeline(cfg: &ExperimentConfig, with_audit: bool) -> Result<PipelineOutput> {
    cfg.validate()?;
    let model = cfg.build_model()?;
    let needs_shaping = cfg.inputs.iter().any(|i| i == "shaped");
    let (calibration, focus_out) = if needs_shaping {
        let (tm, rep) = calibrate(cfg, &model)?;
        let f = focus(cfg, &model, &tm)?;
        (Some(rep), Some(f))
    } else {
        (None, None)
    };
    let pattern = focus_out.as_ref().map(|(p, _)| p.as_slice());
    let mut inputs = Vec::new();
    let mut acqs = Vec::new();
    for label in &cfg.inputs {
        let input = resolve_input(&model, label, pattern)?;
        acqs.push(acquire(cfg, &model, label, &input)?);
        inputs.push(input);
    }
    let dir = motion_axis(cfg, &model, &acqs)?;
    let estimates = inputs
        .iter()
        .zip(&acqs)
        .map(|(input, acq)| estimate(cfg, &model, input, acq, dir).map(|e| e.summary))
        .collect::<Result<Vec<_>>>()?;
    let audit_summary = if with_audit {
        let (am, frames) = audit_frames(cfg)?;
        Some(audit(cfg, &am, &frames)?)
    } else {
        None
    };
    let focus_summary = focus_out.map(|(_, s)| s);
    let report = assemble_report(
        cfg,
        calibration.as_ref(),
        focus_summary.as_ref(),
        &estimates,
        audit_summary.as_ref(),
    );
    Ok(PipelineOutput {
        calibration,
        focus: focus_summary,
        estimates,
        audit: audit_summary,
        report,
    })
}

// File-level commands.

fn write(path: PathBuf, data: &[u8]) -> Result<()> {
    fs::write(&path, data).map_err(|e| OmxError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_required(dir: &Path, name: &str, command: &str) -> Result<Vec<u8>> {
    let p = dir.join(name);
    fs::read(&p).map_err(|_| OmxError::MissingArtifact {
        path: p.display().to_string(),
        command: command.to_string(),
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn load_pattern(dir: &Path) -> Result<Vec<C64>> {
    let bytes = read_required(dir, "pattern.csv", "focus")?;
    io::read_pattern_csv(&String::from_utf8_lossy(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub report: CalibrationReport,
    pub provenance: Provenance,
}

/// Writes `tm.tmx` (observed TM, TMX1) and `calibration.json`.
pub fn cmd_calibrate(cfg: &ExperimentConfig, out: &Path) -> Result<CalibrationReport> {
    fs::create_dir_all(out)?;
    let model = cfg.build_model()?;
    let (tm, report) = calibrate(cfg, &model)?;
    let mut buf = Vec::new();
    io::write_tmx1(&mut buf, &tm)?;
    write(out.join("tm.tmx"), &buf)?;
    write(
        out.join("calibration.json"),
        &to_json(&CalibrationFile {
            report: report.clone(),
            provenance: Provenance::new(cfg),
        })?,
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusFile {
    pub focus: FocusSummary,
    pub provenance: Provenance,
}

/// Reads `tm.tmx`, writes `pattern.csv` and `focus.json`.
pub fn cmd_focus(cfg: &ExperimentConfig, out: &Path) -> Result<FocusSummary> {
    let bytes = read_required(out, "tm.tmx", "calibrate")?;
    let tm = io::read_tmx1(&mut bytes.as_slice())?;
    let model = cfg.build_model()?;
    let (pattern, summary) = focus(cfg, &model, &tm)?;
    write(out.join("pattern.csv"), io::pattern_csv(&pattern).as_bytes())?;
    write(
        out.join("focus.json"),
        &to_json(&FocusFile {
            focus: summary.clone(),
            provenance: Provenance::new(cfg),
        })?,
    )?;
    Ok(summary)
}

fn frm(frames: &[Frame]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    io::write_frm1(&mut buf, frames)?;
    Ok(buf)
}

/// Records every configured input; writes `<input>_frames.frm1` with its
/// `<input>_sidecar.csv`, plus the motion-free, direction-calibration and
/// reference acquisitions the estimator consumes.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let model = cfg.build_model()?;
    let pattern = if cfg.inputs.iter().any(|i| i == "shaped") {
        Some(load_pattern(out)?)
    } else {
        None
    };
    for label in &cfg.inputs {
        let input = resolve_input(&model, label, pattern.as_deref())?;
        let acq = acquire(cfg, &model, label, &input)?;
        write(out.join(format!("{label}_frames.frm1")), &frm(&acq.motion)?)?;
        write(out.join(format!("{label}_sidecar.csv")), io::sidecar_csv(&acq.motion).as_bytes())?;
        write(out.join(format!("{label}_rest.frm1")), &frm(&acq.rest)?)?;
        if !acq.dircal.is_empty() {
            write(out.join(format!("{label}_dircal.frm1")), &frm(&acq.dircal)?)?;
        }
        write(
            out.join(format!("{label}_reference.csv")),
            io::real_field_csv(&acq.reference).as_bytes(),
        )?;
        if let Some((p, m)) = &acq.differential {
            write(out.join(format!("{label}_diff_plus.csv")), io::real_field_csv(p).as_bytes())?;
            write(out.join(format!("{label}_diff_minus.csv")), io::real_field_csv(m).as_bytes())?;
        }
    }
    Ok(())
}

fn load_acquisition(cfg: &ExperimentConfig, model: &ScatterModel, out: &Path, label: &str) -> Result<Acquisition> {
    let grid = model.camera_grid();
    let frames = |name: &str| -> Result<Vec<Frame>> {
        let bytes = read_required(out, name, "simulate")?;
        let f = io::read_frm1(&mut bytes.as_slice(), grid.pitch)?;
        if let Some(first) = f.first() {
            first.grid.same_as(&grid)?;
        }
        Ok(f)
    };
    let field = |name: &str| -> Result<RealField> {
        let bytes = read_required(out, name, "simulate")?;
        io::read_real_field_csv(&String::from_utf8_lossy(&bytes), grid)
    };
    let mut motion = frames(&format!("{label}_frames.frm1"))?;
    let side = read_required(out, &format!("{label}_sidecar.csv"), "simulate")?;
    io::apply_sidecar(&mut motion, &String::from_utf8_lossy(&side))?;
    let dircal = if cfg.estimator.direction == DirectionPolicy::Fit && label == cfg.direction_input() {
        frames(&format!("{label}_dircal.frm1"))?
    } else {
        Vec::new()
    };
    let differential = if cfg.estimator.optimal_source == OptimalSource::Differential {
        Some((
            field(&format!("{label}_diff_plus.csv"))?,
            field(&format!("{label}_diff_minus.csv"))?,
        ))
    } else {
        None
    };
    Ok(Acquisition {
        label: label.to_string(),
        reference: field(&format!("{label}_reference.csv"))?,
        motion,
        rest: frames(&format!("{label}_rest.frm1"))?,
        dircal,
        differential,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub inputs: Vec<InputEstimate>,
    pub provenance: Provenance,
}

/// Reads the simulated acquisitions and writes per-gain maps and series plus
/// `estimate.json`.
pub fn cmd_estimate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<InputEstimate>> {
    let model = cfg.build_model()?;
    let pattern = if cfg.inputs.iter().any(|i| i == "shaped") {
        Some(load_pattern(out)?)
    } else {
        None
    };
    let mut inputs = Vec::new();
    let mut acqs = Vec::new();
    for label in &cfg.inputs {
        inputs.push(resolve_input(&model, label, pattern.as_deref())?);
        acqs.push(load_acquisition(cfg, &model, out, label)?);
    }
    let dir = motion_axis(cfg, &model, &acqs)?;
    let mut all = Vec::new();
    for ((label, input), acq) in cfg.inputs.iter().zip(&inputs).zip(&acqs) {
        let est = estimate(cfg, &model, input, acq, dir)?;
        let t: Vec<f64> = acq.motion.iter().map(|f| f.t).collect();
        let xi: Vec<f64> = acq.motion.iter().map(|f| f.xi_true).collect();
        for (g, x) in est.gains.iter().zip(&est.series) {
            write(out.join(format!("{label}_{}_gain.csv", g.label)), io::gain_csv(g).as_bytes())?;
            write(
                out.join(format!("{label}_{}_series.csv", g.label)),
                io::series_csv(&t, &xi, x).as_bytes(),
            )?;
        }
        all.push(est.summary);
    }
    write(
        out.join("estimate.json"),
        &to_json(&EstimateFile {
            inputs: all.clone(),
            provenance: Provenance::new(cfg),
        })?,
    )?;
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFile {
    pub audit: AuditSummary,
    pub provenance: Provenance,
}

/// Records motion-free frames of the audit source and writes `audit.csv`
/// and `audit.json`.
pub fn cmd_noise_audit(cfg: &ExperimentConfig, out: &Path) -> Result<AuditSummary> {
    fs::create_dir_all(out)?;
    let (model, frames) = audit_frames(cfg)?;
    let summary = audit(cfg, &model, &frames)?;
    write(out.join("audit.csv"), io::audit_csv(&summary.result).as_bytes())?;
    write(
        out.join("audit.json"),
        &to_json(&AuditFile {
            audit: summary.clone(),
            provenance: Provenance::new(cfg),
        })?,
    )?;
    Ok(summary)
}

/// Consolidates the artifacts of the other commands into `run_report.json`
/// and the figure-data CSVs.
pub fn cmd_report(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let shaped = cfg.inputs.iter().any(|i| i == "shaped");
    let mut missing = Vec::new();
    let mut commands = Vec::new();
    let mut need = vec![("estimate.json", "estimate"), ("audit.json", "noise-audit")];
    if shaped {
        need.push(("calibration.json", "calibrate"));
        need.push(("focus.json", "focus"));
    }
    for (name, cmd) in &need {
        if !out.join(name).exists() {
            missing.push(name.to_string());
            commands.push(cmd.to_string());
        }
    }
    if !missing.is_empty() {
        return Err(OmxError::MissingArtifact {
            path: missing.join(", "),
            command: commands.join(", omx "),
        });
    }
    let est: EstimateFile = serde_json::from_slice(&read_required(out, "estimate.json", "estimate")?)?;
    let aud: AuditFile = serde_json::from_slice(&read_required(out, "audit.json", "noise-audit")?)?;
    let (cal, foc) = if shaped {
        let c: CalibrationFile = serde_json::from_slice(&read_required(out, "calibration.json", "calibrate")?)?;
        let f: FocusFile = serde_json::from_slice(&read_required(out, "focus.json", "focus")?)?;
        (Some(c.report), Some(f.focus))
    } else {
        (None, None)
    };
    let report = assemble_report(cfg, cal.as_ref(), foc.as_ref(), &est.inputs, Some(&aud.audit));
    let (f3, f4, f5) = figure_csvs(&report);
    write(out.join("run_report.json"), &to_json(&report)?)?;
    write(out.join("fig3.csv"), f3.as_bytes())?;
    write(out.join("fig4.csv"), f4.as_bytes())?;
    write(out.join("fig5.csv"), f5.as_bytes())?;
    Ok(report)
}
