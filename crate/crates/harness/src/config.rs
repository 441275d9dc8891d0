//! Session configuration loaded from TOML.
//!
//! ```toml
//! vessel = "beaker"          # or a [profile] table for a custom vessel
//! seed = 7
//! timestep = 0.011111111111111112
//! threshold_report = "calibration.json"   # optional, relative to this file
//!
//! [fluid]
//! particle_count = 600
//!
//! [actuators]
//! motor_count = 8
//! mounting = "inside"
//!
//! [trigger]
//! pulse_strength = 255
//! ```
//!
//! The top-level `seed` and `timestep` override the ones in `[fluid]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slosh_core::calibration::ThresholdReport;
use slosh_core::engine::{default_fill_height, TriggerConfig};
use slosh_core::fluid::{FluidParams, DEFAULT_TIMESTEP};
use slosh_core::vessel::{
    ActuatorLayout, Mounting, ProfileSpec, VesselProfile, DEFAULT_ANCHOR_HEIGHT, DEFAULT_ANCHOR_REACH,
    DEFAULT_RING_HEIGHT,
};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorConfig {
    pub motor_count: usize,
    /// m
    pub ring_height: f64,
    /// m
    pub anchor_height: f64,
    /// Anchor distance from the axis as a fraction of the wall radius.
    pub anchor_reach: f64,
    pub mounting: Mounting,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        ActuatorConfig {
            motor_count: 8,
            ring_height: DEFAULT_RING_HEIGHT,
            anchor_height: DEFAULT_ANCHOR_HEIGHT,
            anchor_reach: DEFAULT_ANCHOR_REACH,
            mounting: Mounting::Inside,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub vessel: String,
    /// Custom vessel; takes precedence over `vessel` when present.
    pub profile: Option<ProfileSpec>,
    pub seed: u64,
    /// s
    pub timestep: f64,
    /// Reference height for the vertical-shake bands (m). Defaults to half
    /// the vessel height.
    pub fill_height: Option<f64>,
    /// Calibration report whose selected threshold replaces
    /// `trigger.accel_threshold`.
    pub threshold_report: Option<PathBuf>,
    pub fluid: FluidParams,
    pub actuators: ActuatorConfig,
    pub trigger: TriggerConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            vessel: "beaker".into(),
            profile: None,
            seed: 7,
            timestep: DEFAULT_TIMESTEP,
            fill_height: None,
            threshold_report: None,
            fluid: FluidParams::default(),
            actuators: ActuatorConfig::default(),
            trigger: TriggerConfig::default(),
        }
    }
}

impl SessionConfig {
    /// Parses TOML and applies a referenced threshold report, resolving its
    /// path against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let mut cfg: SessionConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(path) = cfg.threshold_report.clone() {
            let path = if path.is_absolute() { path } else { base_dir.join(path) };
            let report = crate::formats::read_report(&path)?;
            cfg.apply_report(&report);
            cfg.threshold_report = Some(path);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn apply_report(&mut self, report: &ThresholdReport) {
        self.trigger.accel_threshold = report.selected;
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let profile = self.profile()?;
        self.fluid_params().validate()?;
        self.layout_for(&profile)?;
        self.trigger.validate()?;
        if let Some(h) = self.fill_height {
            if !(h.is_finite() && h > 0.0) {
                return Err(HarnessError::Config(format!("fill_height must be positive, got {h}")));
            }
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<VesselProfile, HarnessError> {
        match &self.profile {
            Some(spec) => Ok(VesselProfile::try_from(spec.clone())?),
            None => Ok(VesselProfile::by_name(&self.vessel)?),
        }
    }

    pub fn fluid_params(&self) -> FluidParams {
        FluidParams { seed: self.seed, timestep: self.timestep, ..self.fluid.clone() }
    }

    pub fn layout_for(&self, profile: &VesselProfile) -> Result<ActuatorLayout, HarnessError> {
        let a = &self.actuators;
        Ok(ActuatorLayout::new(profile, a.motor_count, a.ring_height, a.anchor_height, a.anchor_reach, a.mounting)?)
    }

    pub fn fill_height_for(&self, profile: &VesselProfile) -> f64 {
        self.fill_height.unwrap_or_else(|| default_fill_height(profile))
    }
}
