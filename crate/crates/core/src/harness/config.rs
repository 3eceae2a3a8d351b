//! JSON experiment configuration. Every field has a default, and the fully
//! materialized document is what gets hashed into a report's provenance.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::{DriveConfig, NoiseConfig};
use crate::error::{OmxError, Result};
use crate::grid_optics::{BeamParams, PixelGrid};
use crate::rng::derive_seed;
use crate::scattering::{dir_from_degrees, RandomMediumParams, ScatterModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PureDisplacement,
    RandomMedium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub kind: ModelKind,
    /// Motion direction, degrees from the camera x axis.
    pub dir_deg: f64,
    pub medium: RandomMediumParams,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            kind: ModelKind::RandomMedium,
            dir_deg: 10.0,
            medium: RandomMediumParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamBlock {
    pub w0: f64,
    pub k: f64,
    pub z: f64,
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
}

impl Default for BeamBlock {
    fn default() -> Self {
        Self {
            w0: 1.0,
            k: 100.0,
            z: 0.0,
            nx: 256,
            ny: 256,
            pitch: 1.0 / 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveBlock {
    pub freq_hz: f64,
    pub xi0: f64,
    pub frame_rate: f64,
    pub n_frames: usize,
    pub phase0: f64,
}

impl Default for DriveBlock {
    fn default() -> Self {
        let d = DriveConfig::default();
        Self {
            freq_hz: 133.0,
            xi0: 0.1,
            frame_rate: d.frame_rate,
            n_frames: d.n_frames,
            phase0: d.phase0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseBlock {
    pub shot: bool,
    pub classical_rms: f64,
    pub classical_tau: f64,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            shot: n.shot,
            classical_rms: n.classical_rms,
            classical_tau: n.classical_tau,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPolicy {
    /// Principal axis of a motion calibration run.
    Fit,
    /// The model's true direction.
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimalSource {
    /// Exact derivative mode of the simulated system.
    Model,
    /// Frame differences at two known static offsets.
    Differential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorBlock {
    pub gains: Vec<String>,
    pub floor: f64,
    pub reference_frames: usize,
    pub calibration_frames: usize,
    /// Drive amplitude of the direction calibration run.
    pub calibration_xi0: f64,
    pub direction: DirectionPolicy,
    pub optimal_source: OptimalSource,
    /// Static offset used by the differential optimal-gain estimate.
    pub differential_step: f64,
    /// Frames averaged at each static offset of the differential estimate.
    pub differential_frames: usize,
    /// Central-difference step of the derivative mode.
    pub derivative_step: f64,
}

impl Default for EstimatorBlock {
    fn default() -> Self {
        Self {
            gains: vec!["split".into(), "tracking".into(), "optimal".into()],
            floor: 1e-3,
            reference_frames: 200,
            calibration_frames: 200,
            calibration_xi0: 0.25,
            direction: DirectionPolicy::Fit,
            optimal_source: OptimalSource::Model,
            differential_step: 0.02,
            differential_frames: 200,
            derivative_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingBlock {
    pub n_in: usize,
    pub phase_only: bool,
    pub phase_steps: usize,
    /// Target position; `None` picks the camera pixel nearest the origin.
    pub target_center: Option<[f64; 2]>,
    /// Target 1/e radius; `None` uses the measured optical grain.
    pub target_radius: Option<f64>,
    /// Radius of the enhancement reference disk, in optical grains.
    pub disk_grains: f64,
}

impl Default for ShapingBlock {
    fn default() -> Self {
        Self {
            n_in: 256,
            phase_only: false,
            phase_steps: 4,
            target_center: None,
            target_radius: None,
            disk_grains: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditSource {
    /// The bare TEM00 beam on the beam grid.
    Beam,
    /// The configured model's unshaped output.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditBlock {
    pub source: AuditSource,
    pub n_frames: usize,
    pub n_widths: usize,
}

impl Default for AuditBlock {
    fn default() -> Self {
        Self {
            source: AuditSource::Beam,
            n_frames: 5000,
            n_widths: 12,
        }
    }
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Photons per frame.
    pub photons: f64,
    pub inputs: Vec<String>,
    pub model: ModelBlock,
    pub beam: BeamBlock,
    pub drive: DriveBlock,
    pub noise: NoiseBlock,
    pub estimator: EstimatorBlock,
    pub shaping: ShapingBlock,
    pub audit: AuditBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            photons: 7e4,
            inputs: vec!["unshaped".into(), "shaped".into()],
            model: ModelBlock::default(),
            beam: BeamBlock::default(),
            drive: DriveBlock::default(),
            noise: NoiseBlock::default(),
            estimator: EstimatorBlock::default(),
            shaping: ShapingBlock::default(),
            audit: AuditBlock::default(),
        }
    }
}

pub const KNOWN_GAINS: [&str; 3] = ["split", "tracking", "optimal"];
pub const KNOWN_INPUTS: [&str; 2] = ["unshaped", "shaped"];

fn cfg_err(e: crate::error::OmxError) -> OmxError {
    match e {
        OmxError::Config(_) => e,
        other => OmxError::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| OmxError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OmxError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OmxError::Config(m));
        if !(self.photons.is_finite() && self.photons > 0.0) {
            return bad(format!("photons must be positive, got {}", self.photons));
        }
        if self.estimator.gains.is_empty() {
            return bad("estimator.gains is empty".into());
        }
        for g in &self.estimator.gains {
            if !KNOWN_GAINS.contains(&g.as_str()) {
                return bad(format!("unknown gain '{g}'"));
            }
        }
        if self.inputs.is_empty() {
            return bad("inputs is empty".into());
        }
        for i in &self.inputs {
            if !KNOWN_INPUTS.contains(&i.as_str()) {
                return bad(format!("unknown input '{i}'"));
            }
        }
        if self.model.kind == ModelKind::PureDisplacement && self.inputs.iter().any(|i| i == "shaped") {
            return bad("shaped input requires model.kind = random_medium".into());
        }
        if !(self.estimator.floor.is_finite() && (0.0..=1.0).contains(&self.estimator.floor)) {
            return bad(format!("estimator.floor = {}", self.estimator.floor));
        }
        if !(self.estimator.derivative_step > 0.0 && self.estimator.differential_step > 0.0) {
            return bad("derivative and differential steps must be positive".into());
        }
        if self.estimator.calibration_frames < 2 && self.estimator.direction == DirectionPolicy::Fit {
            return bad("direction fitting needs calibration_frames >= 2".into());
        }
        if !(self.shaping.disk_grains.is_finite() && self.shaping.disk_grains >= 0.0) {
            return bad(format!("shaping.disk_grains = {}", self.shaping.disk_grains));
        }
        if self.model.kind == ModelKind::RandomMedium && self.shaping.n_in != self.model.medium.n_in() {
            return bad(format!(
                "shaping.n_in = {} but the medium has {} segments",
                self.shaping.n_in,
                self.model.medium.n_in()
            ));
        }
        if self.audit.n_widths == 0 {
            return bad("audit.n_widths must be positive".into());
        }
        self.model.medium.validate().map_err(cfg_err)?;
        self.beam_params().map_err(cfg_err)?;
        self.beam_grid().map_err(cfg_err)?;
        self.drive_config().validate().map_err(cfg_err)?;
        self.noise_config().validate().map_err(cfg_err)?;
        Ok(())
    }

    pub fn beam_params(&self) -> Result<BeamParams> {
        BeamParams::new(self.beam.w0, self.beam.k, self.beam.z)
    }

    pub fn beam_grid(&self) -> Result<PixelGrid> {
        PixelGrid::new(self.beam.nx, self.beam.ny, self.beam.pitch)
    }

    pub fn dir(&self) -> (f64, f64) {
        dir_from_degrees(self.model.dir_deg)
    }

    pub fn drive_config(&self) -> DriveConfig {
        DriveConfig {
            omega_m: 2.0 * std::f64::consts::PI * self.drive.freq_hz,
            xi0: self.drive.xi0,
            frame_rate: self.drive.frame_rate,
            n_frames: self.drive.n_frames,
            phase0: self.drive.phase0,
        }
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            shot: self.noise.shot,
            classical_rms: self.noise.classical_rms,
            classical_tau: self.noise.classical_tau,
            seed: self.sub_seed("noise"),
        }
    }

    /// Seed for a named stage, derived from the master seed.
    pub fn sub_seed(&self, tag: &str) -> u64 {
        derive_seed(self.seed, tag)
    }

    pub fn build_model(&self) -> Result<ScatterModel> {
        match self.model.kind {
            ModelKind::PureDisplacement => ScatterModel::pure(self.beam_params()?, self.beam_grid()?, self.dir()),
            ModelKind::RandomMedium => {
                ScatterModel::random_medium(self.model.medium, self.sub_seed("model"), self.dir())
            }
        }
    }

    /// Input whose calibration run fixes the motion axis for every estimator:
    /// the shaped input when present, since its output tracks the motion best.
    pub fn direction_input(&self) -> &str {
        if self.inputs.iter().any(|i| i == "shaped") {
            "shaped"
        } else {
            &self.inputs[0]
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical materialized document.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
