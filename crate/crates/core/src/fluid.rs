//! Position-based particle fluid in the vessel-local frame.
//!
//! Each step predicts particle motion under the effective acceleration
//! (rotated gravity minus the vessel's own acceleration), enforces a
//! density constraint for a fixed number of Jacobi iterations, smooths
//! velocities XSPH-style and clamps everything back inside the vessel. The
//! solver is single-threaded and visits particles in a fixed order, so a
//! given seed and drive sequence always produce the same bits.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::Drive;
use crate::vessel::VesselProfile;

pub const DEFAULT_TIMESTEP: f64 = 1.0 / 90.0;
pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const WATER_DENSITY: f64 = 1000.0;

/// Spawn jitter as a fraction of the rest spacing.
const SPAWN_JITTER: f64 = 0.01;
/// Constraint relaxation, relative to the gradient norm of a particle at rest.
const RELAXATION: f64 = 0.05;
/// Fraction of each particle's relative velocity removed per step. Stands in
/// for the dissipation a real liquid film has against the container walls.
const VELOCITY_DAMPING: f64 = 0.01;
/// Weight of the density deficit relative to the excess.
const COHESION: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluidError {
    #[error("invalid fluid parameters: {0}")]
    InvalidParams(String),
    #[error("{requested} particles do not fit in vessel '{vessel}' at {spacing} m spacing (room for {capacity})")]
    DoesNotFit { vessel: String, requested: usize, capacity: usize, spacing: f64 },
    #[error("simulation fault at step {step}: {detail}")]
    Fault { step: u64, detail: String },
    #[error("state holds {found} particles, solver was built for {expected}")]
    SizeMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FluidParams {
    pub particle_count: usize,
    /// kg
    pub particle_mass: f64,
    /// m
    pub rest_spacing: f64,
    /// m
    pub smoothing_radius: f64,
    /// XSPH blend in `[0, 1]`; higher is more viscous.
    pub viscosity: f64,
    pub constraint_iterations: usize,
    /// s
    pub timestep: f64,
    /// m/s²
    pub gravity: f64,
    pub seed: u64,
}

impl Default for FluidParams {
    fn default() -> Self {
        let rest_spacing = 0.006;
        FluidParams {
            particle_count: 600,
            particle_mass: WATER_DENSITY * rest_spacing * rest_spacing * rest_spacing,
            rest_spacing,
            smoothing_radius: 0.012,
            viscosity: 0.1,
            constraint_iterations: 5,
            timestep: DEFAULT_TIMESTEP,
            gravity: DEFAULT_GRAVITY,
            seed: 7,
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<(), FluidError> {
        let bad = |msg: String| Err(FluidError::InvalidParams(msg));
        if self.particle_count < 1 {
            return bad("particle_count must be at least 1".into());
        }
        if !(self.timestep.is_finite() && self.timestep > 0.0) {
            return bad(format!("timestep must be positive, got {}", self.timestep));
        }
        if self.constraint_iterations < 1 {
            return bad("constraint_iterations must be at least 1".into());
        }
        if !(self.rest_spacing.is_finite() && self.rest_spacing > 0.0) {
            return bad(format!("rest_spacing must be positive, got {}", self.rest_spacing));
        }
        if !(self.smoothing_radius.is_finite() && self.smoothing_radius > self.rest_spacing) {
            return bad(format!(
                "smoothing_radius ({}) must exceed rest_spacing ({})",
                self.smoothing_radius, self.rest_spacing
            ));
        }
        if !(self.particle_mass.is_finite() && self.particle_mass > 0.0) {
            return bad(format!("particle_mass must be positive, got {}", self.particle_mass));
        }
        if !(self.viscosity.is_finite() && self.viscosity >= 0.0) {
            return bad(format!("viscosity must be non-negative, got {}", self.viscosity));
        }
        if !self.gravity.is_finite() {
            return bad("gravity must be finite".into());
        }
        Ok(())
    }

    /// Liquid volume the particles stand for (count × spacing³).
    pub fn fluid_volume(&self) -> f64 {
        self.particle_count as f64 * self.rest_spacing.powi(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub positions: Vec<Point3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub step_index: u64,
}

impl FluidState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn center_of_gravity(&self) -> Point3<f64> {
        center_of_gravity(&self.positions)
    }
}

/// Center of gravity of a fluid sample in the vessel-local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CogSample {
    pub t: f64,
    pub cog: [f64; 3],
}

impl CogSample {
    pub fn new(t: f64, cog: Point3<f64>) -> Self {
        CogSample { t, cog: [cog.x, cog.y, cog.z] }
    }

    pub fn point(&self) -> Point3<f64> {
        Point3::from(self.cog)
    }
}

/// Arithmetic mean of equal-mass particle positions.
///
/// # Panics
///
/// Panics on an empty slice.
pub fn center_of_gravity(positions: &[Point3<f64>]) -> Point3<f64> {
    assert!(!positions.is_empty(), "center of gravity of an empty particle set");
    let sum = positions.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / positions.len() as f64)
}

/// Places particles on a cubic lattice resting on the vessel floor.
///
/// Lattice columns sit on integer multiples of the spacing around the axis
/// and layers at half-spacing offsets above the floor. Each layer is filled
/// from the axis outward, antipodal points adjacent, so a partial top layer
/// stays centred. A small seeded jitter breaks the lattice symmetry.
pub fn spawn(profile: &VesselProfile, params: &FluidParams) -> Result<FluidState, FluidError> {
    params.validate()?;
    let s = params.rest_spacing;
    let half = 0.5 * s;
    let reach = (profile.max_radius() / s).ceil() as i64;

    let mut lattice = Vec::with_capacity(params.particle_count);
    let mut layer = 0usize;
    while lattice.len() < params.particle_count {
        let z = half + layer as f64 * s;
        if z > profile.height() - half {
            return Err(FluidError::DoesNotFit {
                vessel: profile.name().to_string(),
                requested: params.particle_count,
                capacity: lattice.len(),
                spacing: s,
            });
        }
        let limit = profile.radius_clamped(z) - half;
        let mut points: Vec<(i64, i64)> = Vec::new();
        for i in -reach..=reach {
            for j in -reach..=reach {
                let (x, y) = (i as f64 * s, j as f64 * s);
                if x.hypot(y) <= limit {
                    points.push((i, j));
                }
            }
        }
        points.sort_by(|a, b| {
            let ra = a.0 * a.0 + a.1 * a.1;
            let rb = b.0 * b.0 + b.1 * b.1;
            ra.cmp(&rb).then_with(|| {
                let key = |p: &(i64, i64)| {
                    let angle = (p.1 as f64).atan2(p.0 as f64);
                    let folded = angle.rem_euclid(PI);
                    (folded, angle)
                };
                let (ka, kb) = (key(a), key(b));
                ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
            })
        });
        let needed = params.particle_count - lattice.len();
        lattice.extend(points.into_iter().take(needed).map(|(i, j)| Point3::new(i as f64 * s, j as f64 * s, z)));
        layer += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let amp = SPAWN_JITTER * s;
    let positions = lattice
        .into_iter()
        .map(|p| {
            let jitter = Vector3::new(
                rng.random_range(-amp..=amp),
                rng.random_range(-amp..=amp),
                rng.random_range(-amp..=amp),
            );
            profile.project(&(p + jitter)).point
        })
        .collect::<Vec<_>>();

    Ok(FluidState {
        velocities: vec![Vector3::zeros(); positions.len()],
        positions,
        step_index: 0,
    })
}

/// Uniform grid over the vessel's bounding box, rebuilt every step by a
/// counting sort so neighbour order never depends on hashing.
#[derive(Debug, Clone)]
struct Grid {
    cell: f64,
    origin: Vector3<f64>,
    dims: [usize; 3],
    starts: Vec<usize>,
    sorted: Vec<usize>,
    cell_of: Vec<usize>,
}

impl Grid {
    fn new(profile: &VesselProfile, cell: f64) -> Self {
        let r = profile.max_radius();
        let span = |len: f64| (len / cell).ceil() as usize + 1;
        let dims = [span(2.0 * r), span(2.0 * r), span(profile.height())];
        Grid {
            cell,
            origin: Vector3::new(-r, -r, 0.0),
            dims,
            starts: vec![0; dims[0] * dims[1] * dims[2] + 1],
            sorted: Vec::new(),
            cell_of: Vec::new(),
        }
    }

    fn coords(&self, p: &Point3<f64>) -> [usize; 3] {
        let rel = (p.coords - self.origin) / self.cell;
        let c = |v: f64, n: usize| (v.floor().max(0.0) as usize).min(n - 1);
        [c(rel.x, self.dims[0]), c(rel.y, self.dims[1]), c(rel.z, self.dims[2])]
    }

    fn index(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn rebuild(&mut self, points: &[Point3<f64>]) {
        let cells: Vec<usize> = points.iter().map(|p| self.index(self.coords(p))).collect();
        self.cell_of = cells;
        self.starts.iter_mut().for_each(|s| *s = 0);
        for &c in &self.cell_of {
            self.starts[c + 1] += 1;
        }
        for i in 1..self.starts.len() {
            self.starts[i] += self.starts[i - 1];
        }
        let mut fill = self.starts.clone();
        self.sorted.resize(points.len(), 0);
        for (i, &c) in self.cell_of.iter().enumerate() {
            self.sorted[fill[c]] = i;
            fill[c] += 1;
        }
    }

    /// Fills `out` (CSR layout) with every pair closer than `radius`.
    fn neighbours(&self, points: &[Point3<f64>], radius: f64, offsets: &mut Vec<usize>, out: &mut Vec<usize>) {
        let r2 = radius * radius;
        offsets.clear();
        out.clear();
        offsets.push(0);
        for (i, p) in points.iter().enumerate() {
            let c = self.coords(p);
            let lo = |v: usize| v.saturating_sub(1);
            let hi = |v: usize, n: usize| (v + 1).min(n - 1);
            for z in lo(c[2])..=hi(c[2], self.dims[2]) {
                for y in lo(c[1])..=hi(c[1], self.dims[1]) {
                    for x in lo(c[0])..=hi(c[0], self.dims[0]) {
                        let cell = self.index([x, y, z]);
                        for &j in &self.sorted[self.starts[cell]..self.starts[cell + 1]] {
                            if j != i && (points[j] - p).norm_squared() < r2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
            offsets.push(out.len());
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Kernels {
    h: f64,
    poly6: f64,
    spiky: f64,
}

impl Kernels {
    fn new(h: f64) -> Self {
        Kernels {
            h,
            poly6: 315.0 / (64.0 * PI * h.powi(9)),
            spiky: -45.0 / (PI * h.powi(6)),
        }
    }

    fn density(&self, r2: f64) -> f64 {
        let d = self.h * self.h - r2;
        if d <= 0.0 { 0.0 } else { self.poly6 * d * d * d }
    }

    /// Density kernel integrated over an infinite plane at normal distance `z`.
    fn plane(&self, z: f64) -> f64 {
        let d = self.h * self.h - z * z;
        if z.abs() >= self.h { 0.0 } else { 0.25 * PI * self.poly6 * d * d * d * d }
    }

    /// Derivative of [`plane`](Self::plane) with respect to `z`.
    fn plane_slope(&self, z: f64) -> f64 {
        let d = self.h * self.h - z * z;
        if z.abs() >= self.h { 0.0 } else { -2.0 * PI * self.poly6 * z * d * d * d }
    }

    fn gradient(&self, d: &Vector3<f64>) -> Vector3<f64> {
        let r = d.norm();
        if r <= 0.0 || r >= self.h {
            return Vector3::zeros();
        }
        let q = self.h - r;
        d * (self.spiky * q * q / r)
    }
}

/// Reusable solver bound to one vessel and one parameter set.
#[derive(Debug, Clone)]
pub struct FluidSolver {
    profile: VesselProfile,
    params: FluidParams,
    kernels: Kernels,
    rest_density: f64,
    relaxation: f64,
    grid: Grid,
    predicted: Vec<Point3<f64>>,
    deltas: Vec<Vector3<f64>>,
    lambdas: Vec<f64>,
    walls: Vec<Vector3<f64>>,
    smoothed: Vec<Vector3<f64>>,
    contact: Vec<Option<Vector3<f64>>>,
    offsets: Vec<usize>,
    neighbours: Vec<usize>,
}

impl FluidSolver {
    pub fn new(profile: VesselProfile, params: FluidParams) -> Result<Self, FluidError> {
        params.validate()?;
        let h = params.smoothing_radius;
        let kernels = Kernels::new(h);
        let (rest_density, rest_gradient) = lattice_rest_values(&kernels, &params);
        let grid = Grid::new(&profile, h);
        Ok(FluidSolver {
            profile,
            kernels,
            rest_density,
            relaxation: RELAXATION * rest_gradient,
            grid,
            predicted: Vec::new(),
            deltas: Vec::new(),
            lambdas: Vec::new(),
            walls: Vec::new(),
            smoothed: Vec::new(),
            contact: Vec::new(),
            offsets: Vec::new(),
            neighbours: Vec::new(),
            params,
        })
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn profile(&self) -> &VesselProfile {
        &self.profile
    }

    pub fn rest_density(&self) -> f64 {
        self.rest_density
    }

    pub fn spawn(&self) -> Result<FluidState, FluidError> {
        spawn(&self.profile, &self.params)
    }

    /// Density the vessel walls lend a particle, and its constraint gradient.
    ///
    /// Each wall stands in for a half-space of fluid at rest spacing whose
    /// first layer sits half a spacing beyond the wall, so a particle resting
    /// half a spacing inside sees the same density as one deep in the bulk.
    fn wall_terms(&self, p: &Point3<f64>) -> (f64, Vector3<f64>) {
        let h = self.kernels.h;
        let s = self.params.rest_spacing;
        let areal = self.params.particle_mass / (s * s);
        let r = p.x.hypot(p.y);
        let radial = if r > 0.0 { Vector3::new(-p.x / r, -p.y / r, 0.0) } else { Vector3::zeros() };
        let walls = [
            (p.z, Vector3::z()),
            (self.profile.height() - p.z, -Vector3::z()),
            (self.profile.radius_clamped(p.z) - r, radial),
        ];
        let mut density = 0.0;
        let mut slope = Vector3::zeros();
        for (dist, normal) in walls {
            let mut depth = dist.max(0.0) + 0.5 * s;
            while depth < h {
                density += areal * self.kernels.plane(depth);
                slope += normal * (areal * self.kernels.plane_slope(depth));
                depth += s;
            }
        }
        (density, slope / self.rest_density)
    }

    /// Advances the state by one timestep. On a fault the state is left as it was.
    pub fn step(&mut self, state: &mut FluidState, drive: &Drive) -> Result<(), FluidError> {
        let n = state.len();
        if n != self.params.particle_count || state.velocities.len() != n {
            return Err(FluidError::SizeMismatch { expected: self.params.particle_count, found: n });
        }
        let accel = drive.effective();
        if !(accel.x.is_finite() && accel.y.is_finite() && accel.z.is_finite()) {
            return Err(FluidError::Fault {
                step: state.step_index,
                detail: format!("non-finite drive {accel:?}"),
            });
        }
        let dt = self.params.timestep;
        let mass_per_rho = self.params.particle_mass / self.rest_density;

        self.predicted.clear();
        self.contact.clear();
        for (p, v) in state.positions.iter().zip(&state.velocities) {
            let v = v + accel * dt;
            let proj = self.profile.project(&(p + v * dt));
            self.predicted.push(proj.point);
            self.contact.push(proj.normal.map(|n| n.into_inner()));
        }

        self.grid.rebuild(&self.predicted);
        self.grid.neighbours(&self.predicted, self.kernels.h, &mut self.offsets, &mut self.neighbours);

        self.lambdas.resize(n, 0.0);
        self.walls.resize(n, Vector3::zeros());
        self.deltas.resize(n, Vector3::zeros());
        for _ in 0..self.params.constraint_iterations {
            for i in 0..n {
                let pi = self.predicted[i];
                let mut density = self.kernels.density(0.0);
                let mut grad_i = Vector3::zeros();
                let mut grad_sq = 0.0;
                for &j in &self.neighbours[self.offsets[i]..self.offsets[i + 1]] {
                    let d = pi - self.predicted[j];
                    density += self.kernels.density(d.norm_squared());
                    let g = self.kernels.gradient(&d) * mass_per_rho;
                    grad_i += g;
                    grad_sq += g.norm_squared();
                }
                density *= self.params.particle_mass;
                let (wall_density, wall_grad) = self.wall_terms(&pi);
                density += wall_density;
                grad_i += wall_grad;
                self.walls[i] = wall_grad;
                let c = density / self.rest_density - 1.0;
                let c = if c > 0.0 { c } else { COHESION * c };
                self.lambdas[i] = -c / (grad_sq + grad_i.norm_squared() + self.relaxation);
            }
            for i in 0..n {
                let pi = self.predicted[i];
                let mut delta = Vector3::zeros();
                for &j in &self.neighbours[self.offsets[i]..self.offsets[i + 1]] {
                    let d = pi - self.predicted[j];
                    delta += self.kernels.gradient(&d) * (self.lambdas[i] + self.lambdas[j]);
                }
                self.deltas[i] = delta * mass_per_rho + self.walls[i] * self.lambdas[i];
            }
            for i in 0..n {
                let proj = self.profile.project(&(self.predicted[i] + self.deltas[i]));
                self.predicted[i] = proj.point;
                if let Some(normal) = proj.normal {
                    self.contact[i] = Some(normal.into_inner());
                }
            }
        }

        // Velocities from the corrected positions, then XSPH smoothing.
        for i in 0..n {
            state.velocities[i] = (self.predicted[i] - state.positions[i]) / dt;
        }
        self.smoothed.clear();
        for i in 0..n {
            let vi = state.velocities[i];
            let mut blend = Vector3::zeros();
            for &j in &self.neighbours[self.offsets[i]..self.offsets[i + 1]] {
                let w = self.kernels.density((self.predicted[i] - self.predicted[j]).norm_squared());
                blend += (state.velocities[j] - vi) * (w * mass_per_rho);
            }
            let mut v = (vi + blend * self.params.viscosity) * (1.0 - VELOCITY_DAMPING);
            if let Some(normal) = self.contact[i] {
                let into_wall = v.dot(&normal);
                if into_wall < 0.0 {
                    v -= normal * into_wall;
                }
            }
            self.smoothed.push(v);
        }

        if let Some(i) = (0..n).find(|&i| {
            let p = self.predicted[i];
            let v = self.smoothed[i];
            !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite() && v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
        }) {
            return Err(FluidError::Fault {
                step: state.step_index,
                detail: format!("particle {i} became non-finite"),
            });
        }

        state.positions.copy_from_slice(&self.predicted);
        state.velocities.copy_from_slice(&self.smoothed);
        state.step_index += 1;
        Ok(())
    }
}

/// Kernel-summed density and constraint-gradient norm of a particle in an
/// unbounded lattice at the rest spacing.
fn lattice_rest_values(kernels: &Kernels, params: &FluidParams) -> (f64, f64) {
    let s = params.rest_spacing;
    let reach = (kernels.h / s).ceil() as i64;
    let mut density = 0.0;
    let mut grads = Vec::new();
    for i in -reach..=reach {
        for j in -reach..=reach {
            for k in -reach..=reach {
                let d = Vector3::new(i as f64, j as f64, k as f64) * s;
                density += kernels.density(d.norm_squared());
                grads.push(kernels.gradient(&d));
            }
        }
    }
    let rest_density = density * params.particle_mass;
    let scale = params.particle_mass / rest_density;
    let grad_sq: f64 = grads.iter().map(|g| (g * scale).norm_squared()).sum();
    (rest_density, grad_sq)
}

/// Settles a freshly spawned fluid in an upright, motionless vessel.
pub fn settle(solver: &mut FluidSolver, state: &mut FluidState, seconds: f64) -> Result<(), FluidError> {
    let drive = Drive::at_rest(solver.params().gravity);
    let steps = (seconds / solver.params().timestep).round() as usize;
    for _ in 0..steps {
        solver.step(state, &drive)?;
    }
    Ok(())
}
