//! Axisymmetric vessel geometry and actuator placement.
//!
//! A vessel is described by a piecewise-linear radius-versus-height profile in
//! the vessel-local frame: `z` is the symmetry axis, the floor sits at `z = 0`
//! and the rim at `z = height`. All lengths are meters.

use std::f64::consts::TAU;

use nalgebra::{Point3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vessel height shared by the three built-in profiles.
pub const STANDARD_HEIGHT: f64 = 0.165;
/// Wall thickness of the printed vessels. Carried as metadata only.
pub const STANDARD_SHELL: f64 = 0.002;

pub const DEFAULT_RING_HEIGHT: f64 = 0.040;
pub const DEFAULT_ANCHOR_HEIGHT: f64 = 0.015;
/// Anchor distance from the axis as a fraction of the wall radius.
pub const DEFAULT_ANCHOR_REACH: f64 = 0.7;

/// Motor counts the controller and layout code support.
pub const SUPPORTED_MOTOR_COUNTS: [usize; 3] = [4, 6, 8];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VesselError {
    #[error("height {z} m is outside the vessel range [0, {height}] m")]
    Domain { z: f64, height: f64 },
    #[error("invalid vessel profile: {0}")]
    InvalidProfile(String),
    #[error("unsupported motor count {0}; expected one of 4, 6 or 8")]
    UnsupportedMotorCount(usize),
    #[error("anchor reach must lie in (0, 1], got {0}")]
    AnchorReach(f64),
    #[error("unknown vessel '{0}'")]
    UnknownVessel(String),
}

/// One profile knot: the interior radius at height `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub z: f64,
    pub radius: f64,
}

/// Unvalidated profile as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub name: String,
    pub height: f64,
    pub knots: Vec<Knot>,
    #[serde(default = "default_shell")]
    pub shell_thickness: f64,
}

fn default_shell() -> f64 {
    STANDARD_SHELL
}

/// Validated axisymmetric vessel profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileSpec", into = "ProfileSpec")]
pub struct VesselProfile {
    name: String,
    height: f64,
    knots: Vec<Knot>,
    shell_thickness: f64,
}

impl TryFrom<ProfileSpec> for VesselProfile {
    type Error = VesselError;

    fn try_from(spec: ProfileSpec) -> Result<Self, Self::Error> {
        VesselProfile::new(spec.name, spec.height, spec.knots, spec.shell_thickness)
    }
}

impl From<VesselProfile> for ProfileSpec {
    fn from(p: VesselProfile) -> Self {
        ProfileSpec {
            name: p.name,
            height: p.height,
            knots: p.knots,
            shell_thickness: p.shell_thickness,
        }
    }
}

/// Result of clamping a point into the vessel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: Point3<f64>,
    /// Inward normal of the clamp that was applied, `None` for interior points.
    pub normal: Option<Unit<Vector3<f64>>>,
}

impl Projection {
    pub fn corrected(&self) -> bool {
        self.normal.is_some()
    }
}

impl VesselProfile {
    pub fn new(
        name: impl Into<String>,
        height: f64,
        knots: Vec<Knot>,
        shell_thickness: f64,
    ) -> Result<Self, VesselError> {
        let invalid = |msg: String| Err(VesselError::InvalidProfile(msg));
        if !(height.is_finite() && height > 0.0) {
            return invalid(format!("height must be positive, got {height}"));
        }
        if knots.len() < 2 {
            return invalid("at least two knots are required".into());
        }
        if knots[0].z != 0.0 {
            return invalid(format!("first knot must sit at z = 0, got {}", knots[0].z));
        }
        let last = knots[knots.len() - 1].z;
        if last != height {
            return invalid(format!("last knot must sit at z = height ({height}), got {last}"));
        }
        for pair in knots.windows(2) {
            if pair[1].z.partial_cmp(&pair[0].z) != Some(std::cmp::Ordering::Greater) {
                return invalid(format!(
                    "knot heights must be strictly increasing ({} then {})",
                    pair[0].z, pair[1].z
                ));
            }
        }
        if let Some(k) = knots.iter().find(|k| !(k.radius.is_finite() && k.radius > 0.0)) {
            return invalid(format!("radius at z = {} must be positive, got {}", k.z, k.radius));
        }
        if !(shell_thickness.is_finite() && shell_thickness >= 0.0) {
            return invalid(format!("shell thickness must be non-negative, got {shell_thickness}"));
        }
        Ok(VesselProfile { name: name.into(), height, knots, shell_thickness })
    }

    /// Cylindrical beaker, 165 mm tall with a 62.5 mm radius.
    pub fn beaker() -> Self {
        Self::builtin("beaker", &[(0.0, 0.0625), (STANDARD_HEIGHT, 0.0625)])
    }

    /// Erlenmeyer flask: a single linear taper from 62.5 mm down to 20 mm.
    pub fn erlen() -> Self {
        Self::builtin("erlen", &[(0.0, 0.0625), (STANDARD_HEIGHT, 0.020)])
    }

    /// Florence flask: 62.5 mm at the floor, bulging to 80 mm at half height, 20 mm at the neck.
    pub fn florence() -> Self {
        Self::builtin(
            "florence",
            &[(0.0, 0.0625), (STANDARD_HEIGHT / 2.0, 0.080), (STANDARD_HEIGHT, 0.020)],
        )
    }

    pub fn builtin_names() -> [&'static str; 3] {
        ["beaker", "erlen", "florence"]
    }

    pub fn by_name(name: &str) -> Result<Self, VesselError> {
        match name {
            "beaker" => Ok(Self::beaker()),
            "erlen" => Ok(Self::erlen()),
            "florence" => Ok(Self::florence()),
            other => Err(VesselError::UnknownVessel(other.to_string())),
        }
    }

    fn builtin(name: &str, knots: &[(f64, f64)]) -> Self {
        let knots = knots.iter().map(|&(z, radius)| Knot { z, radius }).collect();
        Self::new(name, STANDARD_HEIGHT, knots, STANDARD_SHELL).expect("built-in profile is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn shell_thickness(&self) -> f64 {
        self.shell_thickness
    }

    pub fn max_radius(&self) -> f64 {
        self.knots.iter().map(|k| k.radius).fold(0.0, f64::max)
    }

    pub fn min_radius(&self) -> f64 {
        self.knots.iter().map(|k| k.radius).fold(f64::INFINITY, f64::min)
    }

    /// Interior radius at height `z`, linearly interpolated between knots.
    pub fn radius(&self, z: f64) -> Result<f64, VesselError> {
        if !(0.0..=self.height).contains(&z) {
            return Err(VesselError::Domain { z, height: self.height });
        }
        Ok(self.radius_clamped(z))
    }

    /// Same as [`radius`](Self::radius) but clamps `z` into range instead of failing.
    pub(crate) fn radius_clamped(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, self.height);
        // First knot with k.z >= z; knots[0].z == 0 so idx is at least 0.
        let idx = self.knots.partition_point(|k| k.z < z);
        if idx == 0 {
            return self.knots[0].radius;
        }
        let (a, b) = (self.knots[idx - 1], self.knots[idx]);
        let s = (z - a.z) / (b.z - a.z);
        a.radius + s * (b.radius - a.radius)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        if !(0.0..=self.height).contains(&p.z) {
            return false;
        }
        p.x.hypot(p.y) <= self.radius_clamped(p.z)
    }

    /// Nearest admissible point: axial clamp into `[0, height]`, then a radial
    /// clamp to the wall at that height.
    ///
    /// A point exactly on the axis never needs a radial clamp; if one is ever
    /// required there the point goes to the `+x` wall with normal `-x`.
    pub fn project(&self, p: &Point3<f64>) -> Projection {
        let mut normal = Vector3::zeros();
        let mut corrected = false;

        let z = if p.z < 0.0 {
            normal.z += 1.0;
            corrected = true;
            0.0
        } else if p.z > self.height {
            normal.z -= 1.0;
            corrected = true;
            self.height
        } else {
            p.z
        };

        let wall = self.radius_clamped(z);
        let r = p.x.hypot(p.y);
        let (x, y) = if r > wall {
            corrected = true;
            if r > 0.0 {
                let (ux, uy) = (p.x / r, p.y / r);
                normal.x -= ux;
                normal.y -= uy;
                (ux * wall, uy * wall)
            } else {
                normal.x -= 1.0;
                (wall, 0.0)
            }
        } else {
            (p.x, p.y)
        };

        Projection {
            point: Point3::new(x, y, z),
            normal: corrected.then(|| Unit::new_normalize(normal)),
        }
    }

    /// Interior volume between the floor and height `z` (m³).
    pub fn volume_below(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, self.height);
        let mut total = 0.0;
        for pair in self.knots.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.z >= z {
                break;
            }
            let top = b.z.min(z);
            let r_top = self.radius_clamped(top);
            total += frustum_volume(top - a.z, a.radius, r_top);
        }
        total
    }

    pub fn volume(&self) -> f64 {
        self.volume_below(self.height)
    }

    /// Height of a liquid column of the given volume resting on the floor.
    ///
    /// Volumes beyond the vessel capacity saturate at the rim.
    pub fn fill_height_for_volume(&self, volume: f64) -> f64 {
        if volume <= 0.0 {
            return 0.0;
        }
        if volume >= self.volume() {
            return self.height;
        }
        let (mut lo, mut hi) = (0.0, self.height);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.volume_below(mid) < volume {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn frustum_volume(h: f64, r0: f64, r1: f64) -> f64 {
    std::f64::consts::PI * h / 3.0 * (r0 * r0 + r0 * r1 + r1 * r1)
}

/// Where the motors are mounted relative to the printed shell. Metadata only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mounting {
    #[default]
    Inside,
    Outside,
}

/// Circular motor ring plus the trigger anchors paired with each motor.
///
/// Motor `k` sits at azimuth `2πk/N` on the wall at `ring_height`. Anchor `k`
/// shares the azimuth and sits at `anchor_height`, `anchor_reach` of the way
/// from the axis to the wall. A fluid's center of gravity never gets close to
/// the wall itself, so anchors placed there would never trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorLayout {
    motor_count: usize,
    ring_height: f64,
    anchor_height: f64,
    anchor_reach: f64,
    motor_positions: Vec<Point3<f64>>,
    anchor_positions: Vec<Point3<f64>>,
    mounting: Mounting,
}

impl ActuatorLayout {
    pub fn new(
        profile: &VesselProfile,
        motor_count: usize,
        ring_height: f64,
        anchor_height: f64,
        anchor_reach: f64,
        mounting: Mounting,
    ) -> Result<Self, VesselError> {
        if !SUPPORTED_MOTOR_COUNTS.contains(&motor_count) {
            return Err(VesselError::UnsupportedMotorCount(motor_count));
        }
        if !(anchor_reach > 0.0 && anchor_reach <= 1.0) {
            return Err(VesselError::AnchorReach(anchor_reach));
        }
        let ring_radius = profile.radius(ring_height)?;
        let anchor_radius = anchor_reach * profile.radius(anchor_height)?;
        let ring = |radius: f64, z: f64| -> Vec<Point3<f64>> {
            (0..motor_count)
                .map(|k| {
                    let phi = azimuth(k, motor_count);
                    Point3::new(radius * phi.cos(), radius * phi.sin(), z)
                })
                .collect()
        };
        Ok(ActuatorLayout {
            motor_count,
            ring_height,
            anchor_height,
            anchor_reach,
            motor_positions: ring(ring_radius, ring_height),
            anchor_positions: ring(anchor_radius, anchor_height),
            mounting,
        })
    }

    /// Layout at the default ring height and anchor placement.
    pub fn with_defaults(profile: &VesselProfile, motor_count: usize) -> Result<Self, VesselError> {
        Self::new(
            profile,
            motor_count,
            DEFAULT_RING_HEIGHT,
            DEFAULT_ANCHOR_HEIGHT,
            DEFAULT_ANCHOR_REACH,
            Mounting::default(),
        )
    }

    pub fn motor_count(&self) -> usize {
        self.motor_count
    }

    pub fn ring_height(&self) -> f64 {
        self.ring_height
    }

    pub fn anchor_height(&self) -> f64 {
        self.anchor_height
    }

    pub fn anchor_reach(&self) -> f64 {
        self.anchor_reach
    }

    pub fn motor_positions(&self) -> &[Point3<f64>] {
        &self.motor_positions
    }

    pub fn anchor_positions(&self) -> &[Point3<f64>] {
        &self.anchor_positions
    }

    pub fn mounting(&self) -> Mounting {
        self.mounting
    }

    pub fn azimuth(&self, motor: usize) -> f64 {
        azimuth(motor, self.motor_count)
    }
}

fn azimuth(k: usize, n: usize) -> f64 {
    TAU * k as f64 / n as f64
}
