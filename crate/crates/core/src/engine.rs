//! Haptic event engine.
//!
//! Folds a center-of-gravity trace into motor pulses. Two rules fire pulses:
//!
//! * proximity: the CoG is within `distance_threshold` of a motor's anchor
//!   while its per-step acceleration exceeds `accel_threshold`;
//! * vertical shake: the CoG rises above the high band and drops back below
//!   the low band within `vertical_window`, which fires every motor at once.
//!
//! A motor that is already pulsing ignores new triggers until its pulse ends.

use std::collections::VecDeque;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::CogSample;
use crate::vessel::{ActuatorLayout, VesselProfile};

pub const DEFAULT_DISTANCE_THRESHOLD: f64 = 0.01;
pub const DEFAULT_PULSE_MS: u32 = 80;
pub const DEFAULT_STRENGTH: u8 = 255;
/// 25th percentile of CoG acceleration (m/step²) over the default
/// calibration mix, seed 7, default fluid in the beaker.
pub const DEFAULT_ACCEL_THRESHOLD: f64 = 5.46e-6;

/// Fraction of the vessel height used as the vertical-band reference when
/// none is configured. The bands must straddle the heights a shaken fluid
/// reaches, which are several times its resting depth.
pub const DEFAULT_FILL_FRACTION: f64 = 0.5;

/// Default reference height for the vertical-shake bands.
pub fn default_fill_height(profile: &VesselProfile) -> f64 {
    DEFAULT_FILL_FRACTION * profile.height()
}

/// Slack allowed between consecutive sample times and the nominal step (s).
const TIMESTAMP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("samples at t = {prev} and t = {next} are not one timestep ({timestep} s) apart")]
    Timestamp { prev: f64, next: f64, timestep: f64 },
    #[error("invalid trigger configuration: {0}")]
    Config(String),
    #[error("motor {motor} is outside a {count}-motor layout")]
    MotorRange { motor: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cause {
    Proximity,
    Vertical,
}

impl Cause {
    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Proximity => "proximity",
            Cause::Vertical => "vertical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerConfig {
    /// m
    pub distance_threshold: f64,
    /// m/step²
    pub accel_threshold: f64,
    pub pulse_duration_ms: u32,
    pub pulse_strength: u8,
    pub vertical_low_frac: f64,
    pub vertical_high_frac: f64,
    /// s
    pub vertical_window: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            distance_threshold: DEFAULT_DISTANCE_THRESHOLD,
            accel_threshold: DEFAULT_ACCEL_THRESHOLD,
            pulse_duration_ms: DEFAULT_PULSE_MS,
            pulse_strength: DEFAULT_STRENGTH,
            vertical_low_frac: 0.25,
            vertical_high_frac: 0.75,
            vertical_window: 1.0,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if !(self.distance_threshold.is_finite() && self.distance_threshold > 0.0) {
            return bad(format!("distance_threshold must be positive, got {}", self.distance_threshold));
        }
        if !(self.accel_threshold.is_finite() && self.accel_threshold >= 0.0) {
            return bad(format!("accel_threshold must be non-negative, got {}", self.accel_threshold));
        }
        let (lo, hi) = (self.vertical_low_frac, self.vertical_high_frac);
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad(format!("vertical bands must satisfy 0 <= low < high <= 1, got {lo} and {hi}"));
        }
        if !(self.vertical_window.is_finite() && self.vertical_window > 0.0) {
            return bad(format!("vertical_window must be positive, got {}", self.vertical_window));
        }
        Ok(())
    }

    pub fn pulse_seconds(&self) -> f64 {
        f64::from(self.pulse_duration_ms) / 1000.0
    }
}

/// One timed vibration on one motor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseCommand {
    /// s
    pub t_start: f64,
    pub motor: usize,
    pub duration_ms: u32,
    pub strength: u8,
    pub cause: Cause,
}

impl PulseCommand {
    pub fn t_end(&self) -> f64 {
        self.t_start + f64::from(self.duration_ms) / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerticalPhase {
    Idle,
    /// CoG crossed above the high band at `since`.
    Rose { since: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    history: VecDeque<CogSample>,
    active_until: Vec<Option<f64>>,
    vertical: VerticalPhase,
    last_z: Option<f64>,
}

impl EngineState {
    pub fn new(motor_count: usize) -> Self {
        EngineState {
            history: VecDeque::with_capacity(3),
            active_until: vec![None; motor_count],
            vertical: VerticalPhase::Idle,
            last_z: None,
        }
    }

    pub fn history(&self) -> impl Iterator<Item = &CogSample> {
        self.history.iter()
    }

    pub fn vertical_phase(&self) -> VerticalPhase {
        self.vertical
    }

    pub fn is_active(&self, motor: usize, t: f64) -> bool {
        self.active_until.get(motor).copied().flatten().is_some_and(|end| end > t)
    }

    /// End time of the motor's last pulse, if it has not been retired yet.
    pub fn active_until(&self, motor: usize) -> Option<f64> {
        self.active_until.get(motor).copied().flatten()
    }

    /// Motors pulsing at time `t`.
    pub fn active_motors(&self, t: f64) -> Vec<usize> {
        (0..self.active_until.len()).filter(|&m| self.is_active(m, t)).collect()
    }

    pub fn motor_count(&self) -> usize {
        self.active_until.len()
    }

    fn expire(&mut self, t: f64) {
        for slot in &mut self.active_until {
            if slot.is_some_and(|end| end <= t) {
                *slot = None;
            }
        }
    }
}

/// Magnitude of the second difference of three CoG samples, in m/step².
pub fn cog_acceleration(history: &[CogSample; 3], timestep: f64) -> Result<f64, EngineError> {
    for pair in history.windows(2) {
        check_spacing(&pair[0], &pair[1], timestep)?;
    }
    let [a, b, c] = history.map(|s| s.point());
    Ok(((c - b) - (b - a)).norm())
}

fn check_spacing(prev: &CogSample, next: &CogSample, timestep: f64) -> Result<(), EngineError> {
    if ((next.t - prev.t) - timestep).abs() > TIMESTAMP_TOLERANCE {
        return Err(EngineError::Timestamp { prev: prev.t, next: next.t, timestep });
    }
    Ok(())
}

/// Motors whose anchor lies strictly within the distance threshold while the
/// acceleration strictly exceeds the acceleration threshold. Ascending order.
pub fn proximity_triggers(
    cog: &Point3<f64>,
    accel: f64,
    layout: &ActuatorLayout,
    cfg: &TriggerConfig,
) -> Vec<usize> {
    // NaN never triggers.
    if accel.partial_cmp(&cfg.accel_threshold) != Some(std::cmp::Ordering::Greater) {
        return Vec::new();
    }
    layout
        .anchor_positions()
        .iter()
        .enumerate()
        .filter(|(_, anchor)| (cog - *anchor).norm() < cfg.distance_threshold)
        .map(|(k, _)| k)
        .collect()
}

/// Advances the bottom-top-bottom detector by one sample.
///
/// Returns `true` on the step where the CoG drops below the low band after
/// having crossed above the high band no more than `vertical_window` earlier.
pub fn vertical_shake_detect(
    state: &mut EngineState,
    sample: &CogSample,
    fill_height: f64,
    cfg: &TriggerConfig,
) -> bool {
    let z = sample.cog[2];
    let high = cfg.vertical_high_frac * fill_height;
    let low = cfg.vertical_low_frac * fill_height;
    let prev = state.last_z.replace(z);

    if let VerticalPhase::Rose { since } = state.vertical {
        if sample.t - since > cfg.vertical_window {
            state.vertical = VerticalPhase::Idle;
        } else if z < low {
            state.vertical = VerticalPhase::Idle;
            return true;
        }
    }
    if state.vertical == VerticalPhase::Idle && prev.is_some_and(|p| p <= high) && z > high {
        state.vertical = VerticalPhase::Rose { since: sample.t };
    }
    false
}

/// Emits a pulse for every listed motor that is not already pulsing at `t`.
pub fn schedule(
    t: f64,
    motors: &[usize],
    cause: Cause,
    state: &mut EngineState,
    cfg: &TriggerConfig,
) -> Result<Vec<PulseCommand>, EngineError> {
    let count = state.motor_count();
    let mut out = Vec::new();
    for &motor in motors {
        if motor >= count {
            return Err(EngineError::MotorRange { motor, count });
        }
        if state.is_active(motor, t) {
            continue;
        }
        let cmd = PulseCommand {
            t_start: t,
            motor,
            duration_ms: cfg.pulse_duration_ms,
            strength: cfg.pulse_strength,
            cause,
        };
        state.active_until[motor] = Some(cmd.t_end());
        out.push(cmd);
    }
    Ok(out)
}

/// Streaming form of [`run_engine`]: feed one CoG sample per step.
#[derive(Debug, Clone)]
pub struct HapticEngine {
    layout: ActuatorLayout,
    cfg: TriggerConfig,
    fill_height: f64,
    timestep: f64,
    state: EngineState,
}

impl HapticEngine {
    pub fn new(
        layout: ActuatorLayout,
        cfg: TriggerConfig,
        fill_height: f64,
        timestep: f64,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        if !(fill_height.is_finite() && fill_height > 0.0) {
            return Err(EngineError::Config(format!("fill_height must be positive, got {fill_height}")));
        }
        if !(timestep.is_finite() && timestep > 0.0) {
            return Err(EngineError::Config(format!("timestep must be positive, got {timestep}")));
        }
        let state = EngineState::new(layout.motor_count());
        Ok(HapticEngine { layout, cfg, fill_height, timestep, state })
    }

    pub fn layout(&self) -> &ActuatorLayout {
        &self.layout
    }

    pub fn config(&self) -> &TriggerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn fill_height(&self) -> f64 {
        self.fill_height
    }

    pub fn timestep(&self) -> f64 {
        self.timestep
    }

    /// Swaps the trigger settings, keeping the CoG history and pulse state.
    pub fn set_config(&mut self, cfg: TriggerConfig) -> Result<(), EngineError> {
        cfg.validate()?;
        self.cfg = cfg;
        Ok(())
    }

    /// Swaps the actuator layout. Pulses in flight are forgotten when the
    /// motor count changes; the CoG history is kept.
    pub fn set_layout(&mut self, layout: ActuatorLayout) {
        if layout.motor_count() != self.layout.motor_count() {
            self.state.active_until = vec![None; layout.motor_count()];
        }
        self.layout = layout;
    }

    /// Processes one sample; the returned pulses share its timestamp and are
    /// ordered by motor index.
    pub fn push(&mut self, sample: CogSample) -> Result<Vec<PulseCommand>, EngineError> {
        if let Some(last) = self.state.history.back() {
            check_spacing(last, &sample, self.timestep)?;
        }
        if self.state.history.len() == 3 {
            self.state.history.pop_front();
        }
        self.state.history.push_back(sample);
        self.state.expire(sample.t);

        let mut out = Vec::new();
        if vertical_shake_detect(&mut self.state, &sample, self.fill_height, &self.cfg) {
            let all: Vec<usize> = (0..self.layout.motor_count()).collect();
            out.extend(schedule(sample.t, &all, Cause::Vertical, &mut self.state, &self.cfg)?);
        }
        if self.state.history.len() == 3 {
            let window = [self.state.history[0], self.state.history[1], self.state.history[2]];
            let accel = cog_acceleration(&window, self.timestep)?;
            let hits = proximity_triggers(&sample.point(), accel, &self.layout, &self.cfg);
            out.extend(schedule(sample.t, &hits, Cause::Proximity, &mut self.state, &self.cfg)?);
        }
        out.sort_by_key(|c| c.motor);
        Ok(out)
    }
}

/// Runs the trigger rules over a whole trace. Output is ordered by start
/// time, then motor index.
pub fn run_engine(
    trace: &[CogSample],
    layout: &ActuatorLayout,
    cfg: &TriggerConfig,
    fill_height: f64,
    timestep: f64,
) -> Result<Vec<PulseCommand>, EngineError> {
    let mut engine = HapticEngine::new(layout.clone(), cfg.clone(), fill_height, timestep)?;
    let mut out = Vec::new();
    for sample in trace {
        out.extend(engine.push(*sample)?);
    }
    Ok(out)
}
