use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actions::GripperCalibration;
use crate::compositor::EditMode;
use crate::error::{Error, Result};
use crate::handpose::JointLimits;
use crate::registration::IcpParams;
use crate::robot::IkParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    /// Chain description file.
    pub chain: PathBuf,
    /// Seed for the first frame's IK; empty means all zeros clamped to the
    /// joint limits.
    pub home: Vec<f64>,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            chain: PathBuf::from("robot/arm.toml"),
            home: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub n_variants: usize,
    /// Base shifts are drawn uniformly from ±this (m) along base x.
    pub max_shift_x: f64,
    pub rng_seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            n_variants: 5,
            max_shift_x: 0.20,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub edit_mode: EditMode,
    /// Directory holding `demo_<id>` folders.
    pub input_root: PathBuf,
    pub output: PathBuf,
    /// Meters of slack before scene depth hides the robot.
    pub occlusion_eps: f64,
    /// Pixels of dilation applied to the hand mask before editing.
    pub mask_dilation: u32,
    pub inpaint_radius: u32,
    /// A demo fails when more than this fraction of frames is invalid.
    pub max_invalid_fraction: f64,
    /// Read arm-removed frames from `demo_<id>/inpainted/` instead of
    /// editing them here.
    pub use_preinpainted: bool,
    /// Hand mesh vertices used for registration are stride-sampled down to
    /// this count.
    pub max_source_points: usize,
    pub robot: RobotConfig,
    pub icp: IcpParams,
    pub ik: IkParams,
    pub gripper: GripperCalibration,
    pub joint_limits: JointLimits,
    pub augmentation: AugmentationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            edit_mode: EditMode::InpaintFmm,
            input_root: PathBuf::from("."),
            output: PathBuf::from("out"),
            occlusion_eps: 0.005,
            mask_dilation: 5,
            inpaint_radius: 5,
            max_invalid_fraction: 0.5,
            use_preinpainted: false,
            max_source_points: 2000,
            robot: RobotConfig::default(),
            icp: IcpParams::default(),
            ik: IkParams::default(),
            gripper: GripperCalibration::default(),
            joint_limits: JointLimits::default(),
            augmentation: AugmentationConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config; relative paths are taken from the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::schema(path, "config", e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(dir);
        cfg.validate()
            .map_err(|e| Error::schema(path, "config", e.to_string()))?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        for p in [&mut self.input_root, &mut self.output, &mut self.robot.chain] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.icp.validate()?;
        self.ik.validate()?;
        self.gripper.validate()?;
        self.joint_limits.validate()?;
        if self.augmentation.n_variants < 1 {
            return Err(Error::InvalidParameter("augmentation.n_variants must be >= 1".into()));
        }
        if !(self.augmentation.max_shift_x >= 0.0) {
            return Err(Error::InvalidParameter("augmentation.max_shift_x must be >= 0".into()));
        }
        if !(self.occlusion_eps >= 0.0) {
            return Err(Error::InvalidParameter("occlusion_eps must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.max_invalid_fraction) {
            return Err(Error::InvalidParameter("max_invalid_fraction must lie in [0, 1]".into()));
        }
        if self.max_source_points < self.icp.min_correspondences.max(3) {
            return Err(Error::InvalidParameter(
                "max_source_points is below icp.min_correspondences".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields serialize")
    }

    /// Hash of every setting that affects dataset content (the output
    /// location is excluded).
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}
