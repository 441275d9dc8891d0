//! Batch pipelines behind the `simulate`, `calibrate` and `analyze` commands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use slosh_core::acoustics::{
    channel_asymmetry, impact_duration, load_pcm, mean_duration, AsymmetryClass, ImpactMeasurement,
};
use slosh_core::calibration::{calibrate, default_mix, MotionSpec, ThresholdReport, SETTLE_SECONDS};
use slosh_core::engine::{Cause, HapticEngine, PulseCommand};
use slosh_core::fluid::{settle, CogSample, FluidSolver, FluidState};
use slosh_core::pose::{trajectory_drives, Drive, PoseSample};
use slosh_core::vessel::VesselProfile;

use crate::config::SessionConfig;
use crate::formats;
use crate::HarnessError;

/// Fluid, engine and the bookkeeping that ties them to pose time.
///
/// The fluid is settled on construction. Before the first pose the engine's
/// difference history is primed with the resting CoG one and two steps
/// earlier, so the very first pose already yields an acceleration.
pub struct Simulation {
    profile: VesselProfile,
    solver: FluidSolver,
    state: FluidState,
    engine: HapticEngine,
    primed: bool,
}

impl Simulation {
    pub fn new(cfg: &SessionConfig) -> Result<Self, HarnessError> {
        let profile = cfg.profile()?;
        let layout = cfg.layout_for(&profile)?;
        let params = cfg.fluid_params();
        let mut solver = FluidSolver::new(profile.clone(), params.clone())?;
        let mut state = solver.spawn()?;
        settle(&mut solver, &mut state, SETTLE_SECONDS)?;
        let engine = HapticEngine::new(layout, cfg.trigger.clone(), cfg.fill_height_for(&profile), params.timestep)?;
        Ok(Simulation { profile, solver, state, engine, primed: false })
    }

    pub fn profile(&self) -> &VesselProfile {
        &self.profile
    }

    pub fn engine(&self) -> &HapticEngine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut HapticEngine {
        &mut self.engine
    }

    pub fn fluid(&self) -> &FluidState {
        &self.state
    }

    pub fn timestep(&self) -> f64 {
        self.solver.params().timestep
    }

    pub fn gravity(&self) -> f64 {
        self.solver.params().gravity
    }

    /// Steps the fluid for the pose at time `t` and runs the trigger rules.
    pub fn advance(&mut self, t: f64, drive: &Drive) -> Result<(CogSample, Vec<PulseCommand>), HarnessError> {
        let mut pulses = Vec::new();
        if !self.primed {
            let rest = self.state.center_of_gravity();
            let dt = self.timestep();
            for k in [2.0, 1.0] {
                pulses.extend(self.engine.push(CogSample::new(t - k * dt, rest))?);
            }
            self.primed = true;
        }
        self.solver.step(&mut self.state, drive)?;
        let sample = CogSample::new(t, self.state.center_of_gravity());
        pulses.extend(self.engine.push(sample)?);
        Ok((sample, pulses))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationOutput {
    pub events: Vec<PulseCommand>,
    pub cog: Vec<CogSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub steps: usize,
    pub simulated_seconds: f64,
    pub total_pulses: usize,
    pub by_cause: BTreeMap<Cause, usize>,
    /// Pulse count per motor index; every configured motor is listed.
    pub by_motor: Vec<usize>,
}

impl SimulationSummary {
    pub fn new(output: &SimulationOutput, motor_count: usize, timestep: f64) -> Self {
        let mut by_cause = BTreeMap::from([(Cause::Proximity, 0), (Cause::Vertical, 0)]);
        let mut by_motor = vec![0; motor_count];
        for e in &output.events {
            *by_cause.entry(e.cause).or_default() += 1;
            by_motor[e.motor] += 1;
        }
        SimulationSummary {
            steps: output.cog.len(),
            simulated_seconds: output.cog.len() as f64 * timestep,
            total_pulses: output.events.len(),
            by_cause,
            by_motor,
        }
    }
}

/// Runs the whole pose stream through a fresh simulation.
pub fn simulate(cfg: &SessionConfig, poses: &[PoseSample]) -> Result<SimulationOutput, HarnessError> {
    let mut sim = Simulation::new(cfg)?;
    let drives = trajectory_drives(poses, sim.timestep(), sim.gravity())?;
    let mut out = SimulationOutput::default();
    for (pose, drive) in poses.iter().zip(&drives) {
        let (sample, pulses) = sim.advance(pose.t, drive)?;
        out.cog.push(sample);
        out.events.extend(pulses);
    }
    Ok(out)
}

pub fn run_simulate(
    cfg: &SessionConfig,
    trajectory: &Path,
    events_out: &Path,
    cog_out: Option<&Path>,
) -> Result<SimulationSummary, HarnessError> {
    let poses = formats::read_trajectory(trajectory, cfg.timestep)?;
    let output = simulate(cfg, &poses)?;
    let file = File::create(events_out).map_err(|e| HarnessError::io(events_out, e))?;
    formats::write_events(BufWriter::new(file), &output.events).map_err(|e| HarnessError::io(events_out, e))?;
    if let Some(path) = cog_out {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        formats::write_cog_trace(BufWriter::new(file), &output.cog).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(SimulationSummary::new(&output, cfg.actuators.motor_count, cfg.timestep))
}

/// Calibrates over `mix`, or the default mix of `seconds` when `mix` is
/// `None`, and writes the report.
pub fn run_calibrate(
    cfg: &SessionConfig,
    mix: Option<&[MotionSpec]>,
    seconds: f64,
    report_out: &Path,
) -> Result<ThresholdReport, HarnessError> {
    let owned;
    let mix = match mix {
        Some(m) => m,
        None => {
            owned = default_mix(seconds);
            &owned
        }
    };
    let report = calibrate(&cfg.profile()?, &cfg.fluid_params(), mix, cfg.seed)?;
    formats::write_report(report_out, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    pub noise_floor: f64,
    pub asymmetry_threshold: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            noise_floor: slosh_core::acoustics::DEFAULT_NOISE_FLOOR,
            asymmetry_threshold: slosh_core::acoustics::DEFAULT_ASYMMETRY_THRESHOLD,
        }
    }
}

/// Measurement of one channel of one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub file: PathBuf,
    pub channel: usize,
    pub duration_ms: f64,
    pub first_crossing: usize,
    pub last_crossing: usize,
    /// Left/right peak ratio over the whole clip; stereo files only. An
    /// infinite ratio (silent right channel) is written as `null`.
    pub ratio: Option<f64>,
    pub classification: Option<AsymmetryClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileFailure {
    pub file: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub measurements: Vec<ChannelReport>,
    pub failures: Vec<FileFailure>,
    /// Mean over every measured channel; absent when nothing was measured.
    pub mean_duration_ms: Option<f64>,
}

fn analyze_file(path: &Path, opts: &AnalyzeOptions) -> Result<Vec<ChannelReport>, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let clip = load_pcm(&bytes).map_err(|e| e.to_string())?;
    let asym = if clip.channel_count() == 2 {
        match channel_asymmetry(&clip, 0..clip.len(), opts.asymmetry_threshold) {
            Ok(a) => Some(a),
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                None
            }
        }
    } else {
        None
    };
    (0..clip.channel_count())
        .map(|channel| {
            let m = impact_duration(&clip, channel, opts.noise_floor).map_err(|e| e.to_string())?;
            Ok(ChannelReport {
                file: path.to_path_buf(),
                channel,
                duration_ms: m.duration_ms,
                first_crossing: m.first_crossing,
                last_crossing: m.last_crossing,
                ratio: asym.map(|a| a.ratio).filter(|r| r.is_finite()),
                classification: asym.map(|a| a.class),
            })
        })
        .collect()
}

/// Measures every file; unreadable files are reported and skipped.
pub fn analyze(paths: &[PathBuf], opts: &AnalyzeOptions) -> Result<AnalyzeReport, HarnessError> {
    if paths.is_empty() {
        return Err(HarnessError::Usage("analyze needs at least one WAVE file".into()));
    }
    let mut measurements = Vec::new();
    let mut failures = Vec::new();
    for path in paths {
        match analyze_file(path, opts) {
            Ok(rows) => measurements.extend(rows),
            Err(error) => {
                log::warn!("{}: {error}", path.display());
                failures.push(FileFailure { file: path.clone(), error });
            }
        }
    }
    let durations: Vec<ImpactMeasurement> = measurements
        .iter()
        .map(|r| ImpactMeasurement {
            duration_ms: r.duration_ms,
            first_crossing: r.first_crossing,
            last_crossing: r.last_crossing,
        })
        .collect();
    let mean_duration_ms = mean_duration(&durations).ok();
    Ok(AnalyzeReport { measurements, failures, mean_duration_ms })
}

pub fn run_analyze(paths: &[PathBuf], opts: &AnalyzeOptions, report_out: &Path) -> Result<AnalyzeReport, HarnessError> {
    let report = analyze(paths, opts)?;
    let text = serde_json::to_string_pretty(&report).expect("report is plain data");
    std::fs::write(report_out, text + "\n").map_err(|e| HarnessError::io(report_out, e))?;
    Ok(report)
}
