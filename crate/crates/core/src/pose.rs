//! Vessel pose samples and their conversion into the inertial drive seen by
//! fluid in the vessel-local frame.

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum deviation from unit norm accepted for an orientation quaternion.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    #[error("orientation at t = {t} s has norm {norm}, expected a unit quaternion")]
    NonUnitQuaternion { t: f64, norm: f64 },
    #[error("non-finite pose value at t = {0} s")]
    NonFinite(f64),
    #[error("timestep must be positive, got {0}")]
    BadTimestep(f64),
}

/// Timestamped vessel pose in the world frame.
///
/// `orientation` rotates vessel-local vectors into the world frame and is
/// stored as `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub position: [f64; 3],
    pub orientation: [f64; 4],
}

impl PoseSample {
    pub const IDENTITY: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

    pub fn upright(t: f64, position: [f64; 3]) -> Self {
        PoseSample { t, position, orientation: Self::IDENTITY }
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::from(self.position)
    }

    /// The orientation as a unit quaternion, rejecting inputs whose norm is
    /// more than [`QUATERNION_NORM_TOLERANCE`] away from one.
    pub fn rotation(&self) -> Result<UnitQuaternion<f64>, PoseError> {
        let [w, x, y, z] = self.orientation;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() {
            return Err(PoseError::NonFinite(self.t));
        }
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(PoseError::NonUnitQuaternion { t: self.t, norm });
        }
        Ok(UnitQuaternion::new_normalize(q))
    }

    pub fn validate(&self) -> Result<(), PoseError> {
        if !(self.t.is_finite() && self.position.iter().all(|v| v.is_finite())) {
            return Err(PoseError::NonFinite(self.t));
        }
        self.rotation().map(|_| ())
    }
}

/// Ordered pose stream at a fixed timestep.
pub type Trajectory = Vec<PoseSample>;

/// External forcing for one fluid step, expressed in the vessel-local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    /// Acceleration of the vessel origin (m/s²).
    pub frame_accel: Vector3<f64>,
    /// World gravity as seen from the vessel (m/s²).
    pub gravity_local: Vector3<f64>,
}

impl Drive {
    /// Upright, motionless vessel.
    pub fn at_rest(gravity: f64) -> Self {
        Drive { frame_accel: Vector3::zeros(), gravity_local: Vector3::new(0.0, 0.0, -gravity) }
    }

    /// Acceleration a fluid particle experiences relative to the vessel.
    pub fn effective(&self) -> Vector3<f64> {
        self.gravity_local - self.frame_accel
    }
}

/// Inertial drive for the middle of three consecutive poses.
///
/// The vessel acceleration is the second central difference of the positions,
/// rotated into the frame of `curr`; world gravity `(0, 0, -g)` is rotated the
/// same way.
pub fn world_to_local_drive(
    prev: &PoseSample,
    curr: &PoseSample,
    next: &PoseSample,
    timestep: f64,
    gravity: f64,
) -> Result<Drive, PoseError> {
    if !(timestep.is_finite() && timestep > 0.0) {
        return Err(PoseError::BadTimestep(timestep));
    }
    prev.validate()?;
    next.validate()?;
    curr.validate()?;
    let to_local = curr.rotation()?.inverse();
    let second_diff = (next.position() - curr.position()) - (curr.position() - prev.position());
    let world_accel = second_diff / (timestep * timestep);
    Ok(Drive {
        frame_accel: to_local * world_accel,
        gravity_local: to_local * Vector3::new(0.0, 0.0, -gravity),
    })
}

/// Drive for every sample of a trajectory.
///
/// The stream is extended at both ends by point reflection (`2·p₀ − p₁`),
/// so the end samples see zero vessel acceleration rather than a spurious
/// stop.
pub fn trajectory_drives(
    poses: &[PoseSample],
    timestep: f64,
    gravity: f64,
) -> Result<Vec<Drive>, PoseError> {
    let n = poses.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        let p = &poses[0];
        return world_to_local_drive(p, p, p, timestep, gravity).map(|d| vec![d]);
    }
    let reflect = |a: &PoseSample, b: &PoseSample| {
        let mut p = *a;
        for i in 0..3 {
            p.position[i] = 2.0 * a.position[i] - b.position[i];
        }
        p
    };
    let before = reflect(&poses[0], &poses[1]);
    let after = reflect(&poses[n - 1], &poses[n - 2]);
    (0..n)
        .map(|i| {
            let prev = if i == 0 { &before } else { &poses[i - 1] };
            let next = if i + 1 == n { &after } else { &poses[i + 1] };
            world_to_local_drive(prev, &poses[i], next, timestep, gravity)
        })
        .collect()
}
