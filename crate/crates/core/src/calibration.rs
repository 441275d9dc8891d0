//! Canonical vessel motions and acceleration-threshold calibration.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{cog_acceleration, EngineError};
use crate::fluid::{settle, CogSample, FluidError, FluidParams, FluidSolver};
use crate::pose::{trajectory_drives, PoseError, PoseSample, Trajectory};
use crate::vessel::VesselProfile;

/// Shortest mix `calibrate` accepts (s).
pub const MIN_CALIBRATION_SECONDS: f64 = 60.0;
/// Length of the default mix (s).
pub const DEFAULT_CALIBRATION_SECONDS: f64 = 600.0;
/// Rest period before the mix starts; not sampled.
pub const SETTLE_SECONDS: f64 = 2.0;

pub const MIX_AMPLITUDES: [f64; 3] = [0.02, 0.05, 0.1];
pub const MIX_FREQUENCIES: [f64; 3] = [0.3, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("cannot take a percentile of an empty sample")]
    Empty,
    #[error("percentile fraction {0} is outside [0, 1]")]
    Fraction(f64),
    #[error("invalid motion: {0}")]
    Motion(String),
    #[error("calibration mix lasts {0} s, need at least {MIN_CALIBRATION_SECONDS} s")]
    TooShort(f64),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    /// Side to side along x.
    Sway,
    /// Up and down along z.
    Shake,
    /// Circular translation in the horizontal plane.
    Swirl,
}

impl MotionKind {
    pub const ALL: [MotionKind; 3] = [MotionKind::Sway, MotionKind::Shake, MotionKind::Swirl];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    pub kind: MotionKind,
    /// m
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    /// s
    pub duration: f64,
    /// rad
    #[serde(default)]
    pub phase: f64,
}

impl MotionSpec {
    pub fn new(kind: MotionKind, amplitude: f64, frequency: f64, duration: f64) -> Self {
        MotionSpec { kind, amplitude, frequency, duration, phase: 0.0 }
    }

    /// 2 Hz, 0.1 m.
    pub fn fast(kind: MotionKind, duration: f64) -> Self {
        Self::new(kind, 0.1, 2.0, duration)
    }

    /// 0.3 Hz, 0.02 m.
    pub fn slow(kind: MotionKind, duration: f64) -> Self {
        Self::new(kind, 0.02, 0.3, duration)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        let ok = self.amplitude.is_finite()
            && self.amplitude >= 0.0
            && self.frequency.is_finite()
            && self.frequency >= 0.0
            && self.duration.is_finite()
            && self.duration > 0.0
            && self.phase.is_finite();
        if ok {
            Ok(())
        } else {
            Err(CalibrationError::Motion(format!("{self:?}")))
        }
    }

    /// Vessel position at time `t`.
    pub fn position_at(&self, t: f64) -> [f64; 3] {
        let arg = TAU * self.frequency * t + self.phase;
        let a = self.amplitude;
        match self.kind {
            MotionKind::Sway => [a * arg.sin(), 0.0, 0.0],
            MotionKind::Shake => [0.0, 0.0, a * arg.sin()],
            MotionKind::Swirl => [a * arg.cos(), a * arg.sin(), 0.0],
        }
    }

    /// Number of samples covering the duration at the given step.
    pub fn sample_count(&self, timestep: f64) -> usize {
        (self.duration / timestep).round() as usize
    }
}

/// Samples a motion at `t = k·timestep` for `k` in `0..duration/timestep`,
/// always upright.
pub fn generate_motion(spec: &MotionSpec, timestep: f64) -> Result<Trajectory, CalibrationError> {
    spec.validate()?;
    if !(timestep.is_finite() && timestep > 0.0) {
        return Err(CalibrationError::Motion(format!("timestep must be positive, got {timestep}")));
    }
    Ok((0..spec.sample_count(timestep))
        .map(|k| {
            let t = k as f64 * timestep;
            PoseSample::upright(t, spec.position_at(t))
        })
        .collect())
}

/// Linear-interpolation percentile: with the values sorted, take the
/// fractional index `(n - 1)·q` and interpolate between its neighbours.
pub fn percentile(values: &[f64], q: f64) -> Result<f64, CalibrationError> {
    if values.is_empty() {
        return Err(CalibrationError::Empty);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(CalibrationError::Fraction(q));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, q))
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = h - lo as f64;
    // Written as a convex combination so the result never leaves [lo, hi].
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    /// The threshold to use; always the 25th percentile.
    pub selected: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl ThresholdReport {
    pub fn from_samples(samples: &[f64], seed: u64) -> Result<Self, CalibrationError> {
        if samples.is_empty() {
            return Err(CalibrationError::Empty);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p25 = percentile_sorted(&sorted, 0.25);
        Ok(ThresholdReport {
            p25,
            p50: percentile_sorted(&sorted, 0.50),
            p75: percentile_sorted(&sorted, 0.75),
            p90: percentile_sorted(&sorted, 0.90),
            selected: p25,
            sample_count: samples.len(),
            seed,
        })
    }
}

/// Every motion kind × amplitude × frequency with equal segment lengths
/// summing to `total_seconds`.
pub fn default_mix(total_seconds: f64) -> Vec<MotionSpec> {
    let count = MotionKind::ALL.len() * MIX_AMPLITUDES.len() * MIX_FREQUENCIES.len();
    let each = total_seconds / count as f64;
    let mut mix = Vec::with_capacity(count);
    for kind in MotionKind::ALL {
        for amplitude in MIX_AMPLITUDES {
            for frequency in MIX_FREQUENCIES {
                mix.push(MotionSpec::new(kind, amplitude, frequency, each));
            }
        }
    }
    mix
}

/// Per-step CoG acceleration magnitudes (m/step²) over a motion mix.
///
/// The fluid is spawned with `seed`, settled, then driven through each
/// segment in order without resetting. Each segment's drive is computed from
/// its own poses, so segment boundaries change the acceleration but never
/// teleport the vessel. The settled rest samples seed the difference
/// history, giving one acceleration sample per motion step.
pub fn acceleration_samples(
    profile: &VesselProfile,
    params: &FluidParams,
    mix: &[MotionSpec],
    seed: u64,
) -> Result<Vec<f64>, CalibrationError> {
    let params = FluidParams { seed, ..params.clone() };
    let dt = params.timestep;
    let mut solver = FluidSolver::new(profile.clone(), params.clone())?;
    let mut state = solver.spawn()?;
    settle(&mut solver, &mut state, SETTLE_SECONDS)?;

    let rest = state.center_of_gravity();
    let mut history = [-2.0, -1.0, 0.0].map(|k| CogSample::new(k * dt, rest));
    let mut step = 0u64;
    let mut out = Vec::new();
    for spec in mix {
        let poses = generate_motion(spec, dt)?;
        for drive in trajectory_drives(&poses, dt, params.gravity)? {
            solver.step(&mut state, &drive)?;
            step += 1;
            history.rotate_left(1);
            history[2] = CogSample::new(step as f64 * dt, state.center_of_gravity());
            out.push(cog_acceleration(&history, dt)?);
        }
    }
    Ok(out)
}

/// Runs the mix and reports the acceleration percentiles; the selected
/// threshold is the 25th percentile.
pub fn calibrate(
    profile: &VesselProfile,
    params: &FluidParams,
    mix: &[MotionSpec],
    seed: u64,
) -> Result<ThresholdReport, CalibrationError> {
    let total: f64 = mix.iter().map(|m| m.duration).sum();
    if total < MIN_CALIBRATION_SECONDS - 1e-9 {
        return Err(CalibrationError::TooShort(total));
    }
    for spec in mix {
        spec.validate()?;
    }
    let samples = acceleration_samples(profile, params, mix, seed)?;
    ThresholdReport::from_samples(&samples, seed)
}
