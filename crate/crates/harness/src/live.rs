//! Interactive session state behind `serve`, independent of any transport.
//!
//! The session is clocked by pose timestamps. A pose is simulated once the
//! pose after it arrives, because the vessel acceleration is a central
//! difference; `flush` simulates the pending pose as if the stream ended
//! there. Poses must sit on the fixed step grid. A gap of several steps is
//! filled by holding the last pose, so the vessel appears to stand still.
//! Fed the same poses and then flushed, a session emits exactly the pulses
//! the batch pipeline writes.

use slosh_core::calibration::MotionSpec;
use slosh_core::engine::PulseCommand;
use slosh_core::fluid::CogSample;
use slosh_core::pose::{world_to_local_drive, PoseSample};

use crate::config::SessionConfig;
use crate::pipeline::Simulation;
use crate::wire::{ConfigPatch, MotorView, PresetCommand, ServerMessage, Snapshot};
use crate::HarnessError;

/// Upper bound on CoG messages per simulated second.
pub const COG_RATE_HZ: f64 = 30.0;
/// Longest gap (s) filled by holding the last pose.
pub const MAX_HOLD_SECONDS: f64 = 60.0;
/// Slack (fraction of a step) allowed when matching a pose to the step grid.
const GRID_TOLERANCE: f64 = 1e-3;

struct PresetRun {
    spec: MotionSpec,
    origin: [f64; 3],
    orientation: [f64; 4],
    t0: f64,
    emitted: usize,
    total: usize,
}

pub struct LiveSession {
    cfg: SessionConfig,
    sim: Simulation,
    /// Last simulated pose.
    prev: Option<PoseSample>,
    /// Received but not yet simulated.
    curr: Option<PoseSample>,
    steps: u64,
    cog_stride: u64,
    last_cog: Option<CogSample>,
    preset: Option<PresetRun>,
}

fn reflect(a: &PoseSample, b: &PoseSample) -> PoseSample {
    let mut p = *a;
    for i in 0..3 {
        p.position[i] = 2.0 * a.position[i] - b.position[i];
    }
    p
}

impl LiveSession {
    pub fn new(cfg: SessionConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let sim = Simulation::new(&cfg)?;
        let cog_stride = ((1.0 / COG_RATE_HZ) / sim.timestep() - 1e-9).ceil().max(1.0) as u64;
        Ok(LiveSession { cfg, sim, prev: None, curr: None, steps: 0, cog_stride, last_cog: None, preset: None })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn timestep(&self) -> f64 {
        self.sim.timestep()
    }

    pub fn preset_active(&self) -> bool {
        self.preset.is_some()
    }

    fn latest(&self) -> Option<&PoseSample> {
        self.curr.as_ref().or(self.prev.as_ref())
    }

    /// Accepts a client pose.
    pub fn on_pose(&mut self, pose: PoseSample) -> Vec<ServerMessage> {
        if self.preset.is_some() {
            return vec![error("pose ignored while a preset is running")];
        }
        self.ingest(pose).unwrap_or_else(|e| vec![error(e)])
    }

    fn ingest(&mut self, pose: PoseSample) -> Result<Vec<ServerMessage>, String> {
        pose.validate().map_err(|e| e.to_string())?;
        let dt = self.timestep();
        let mut queue = Vec::new();
        if let Some(last) = self.latest() {
            let gap = pose.t - last.t;
            if gap <= GRID_TOLERANCE * dt {
                return Err(format!("pose at t = {} s does not advance past t = {} s", pose.t, last.t));
            }
            let steps = (gap / dt).round();
            if (gap - steps * dt).abs() > GRID_TOLERANCE * dt {
                return Err(format!("pose at t = {} s is off the {dt} s step grid", pose.t));
            }
            if gap > MAX_HOLD_SECONDS {
                return Err(format!("gap of {gap} s exceeds the {MAX_HOLD_SECONDS} s hold limit"));
            }
            for k in 1..steps as u64 {
                queue.push(PoseSample { t: last.t + k as f64 * dt, ..*last });
            }
            queue.push(pose);
        } else {
            queue.push(pose);
        }
        let mut out = Vec::new();
        for next in queue {
            out.extend(self.push_pose(next)?);
        }
        Ok(out)
    }

    fn push_pose(&mut self, next: PoseSample) -> Result<Vec<ServerMessage>, String> {
        let Some(curr) = self.curr else {
            self.curr = Some(next);
            return Ok(Vec::new());
        };
        let prev = self.prev.unwrap_or_else(|| reflect(&curr, &next));
        let out = self.simulate(&prev, &curr, &next)?;
        self.prev = Some(curr);
        self.curr = Some(next);
        Ok(out)
    }

    fn simulate(&mut self, prev: &PoseSample, curr: &PoseSample, next: &PoseSample) -> Result<Vec<ServerMessage>, String> {
        let drive = world_to_local_drive(prev, curr, next, self.timestep(), self.sim.gravity()).map_err(|e| e.to_string())?;
        let (sample, pulses) = self.sim.advance(curr.t, &drive).map_err(|e| e.to_string())?;
        self.steps += 1;
        self.last_cog = Some(sample);
        let mut out: Vec<ServerMessage> = pulses.into_iter().map(ServerMessage::Pulse).collect();
        if (self.steps - 1).is_multiple_of(self.cog_stride) {
            out.push(ServerMessage::Cog(sample));
        }
        Ok(out)
    }

    /// Simulates the pending pose as the last of its stream.
    pub fn flush(&mut self) -> Vec<ServerMessage> {
        let Some(curr) = self.curr.take() else {
            return Vec::new();
        };
        let (prev, next) = match self.prev {
            Some(p) => (p, reflect(&curr, &p)),
            None => (curr, curr),
        };
        match self.simulate(&prev, &curr, &next) {
            Ok(out) => {
                self.prev = Some(curr);
                out
            }
            Err(e) => {
                self.curr = Some(curr);
                vec![error(e)]
            }
        }
    }

    /// Advances a running preset by one step. Returns nothing when idle.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        let dt = self.timestep();
        let Some(run) = self.preset.as_mut() else {
            return Vec::new();
        };
        run.emitted += 1;
        let tau = run.emitted as f64 * dt;
        let offset = run.spec.position_at(tau);
        let pose = PoseSample {
            t: run.t0 + tau,
            position: [0, 1, 2].map(|i| run.origin[i] + offset[i]),
            orientation: run.orientation,
        };
        if run.emitted >= run.total {
            self.preset = None;
        }
        self.ingest(pose).unwrap_or_else(|e| {
            self.preset = None;
            vec![error(e)]
        })
    }

    /// Applies a patch atomically and answers with a snapshot, or with an
    /// error leaving the configuration untouched.
    pub fn on_config(&mut self, patch: ConfigPatch) -> Vec<ServerMessage> {
        match self.apply(patch) {
            Ok(()) => vec![self.snapshot_message()],
            Err(e) => vec![error(e)],
        }
    }

    fn apply(&mut self, patch: ConfigPatch) -> Result<(), String> {
        let mut cfg = self.cfg.clone();
        if let Some(n) = patch.motor_count {
            cfg.actuators.motor_count = n;
        }
        if let Some(s) = patch.strength {
            cfg.trigger.pulse_strength = s;
        }
        let layout = cfg.layout_for(self.sim.profile()).map_err(|e| e.to_string())?;
        if let Some(PresetCommand::Start(spec)) = &patch.preset {
            spec.validate().map_err(|e| e.to_string())?;
        }

        self.sim.engine_mut().set_config(cfg.trigger.clone()).map_err(|e| e.to_string())?;
        self.sim.engine_mut().set_layout(layout);
        self.cfg = cfg;
        match patch.preset {
            Some(PresetCommand::Start(spec)) => self.start_preset(spec),
            Some(PresetCommand::Stop) => self.preset = None,
            None => {}
        }
        Ok(())
    }

    fn start_preset(&mut self, spec: MotionSpec) {
        if self.latest().is_none() {
            self.curr = Some(PoseSample::upright(0.0, [0.0; 3]));
        }
        let base = *self.latest().expect("pose set above");
        let start = spec.position_at(0.0);
        self.preset = Some(PresetRun {
            spec,
            origin: [0, 1, 2].map(|i| base.position[i] - start[i]),
            orientation: base.orientation,
            t0: base.t,
            emitted: 0,
            total: spec.sample_count(self.timestep()),
        });
    }

    pub fn snapshot(&self) -> Snapshot {
        let engine = self.sim.engine();
        let layout = engine.layout();
        let t = self.prev.map(|p| p.t);
        let motors = (0..layout.motor_count())
            .map(|k| {
                let m = layout.motor_positions()[k];
                let a = layout.anchor_positions()[k];
                let active_until = engine.state().active_until(k).filter(|&end| t.is_none_or(|t| end > t));
                MotorView { index: k, azimuth: layout.azimuth(k), position: [m.x, m.y, m.z], anchor: [a.x, a.y, a.z], active_until }
            })
            .collect();
        Snapshot {
            t,
            timestep: self.timestep(),
            steps: self.steps,
            vessel: self.sim.profile().clone().into(),
            motor_count: layout.motor_count(),
            strength: engine.config().pulse_strength,
            pulse_duration_ms: engine.config().pulse_duration_ms,
            accel_threshold: engine.config().accel_threshold,
            distance_threshold: engine.config().distance_threshold,
            fill_height: engine.fill_height(),
            motors,
            cog: self.last_cog.map(|c| c.cog),
            preset: self.preset.as_ref().map(|p| p.spec),
        }
    }

    pub fn snapshot_message(&self) -> ServerMessage {
        ServerMessage::Snapshot(Box::new(self.snapshot()))
    }

    /// Handles a raw message body.
    pub fn handle(&mut self, body: &[u8]) -> Vec<ServerMessage> {
        use crate::wire::ClientMessage;
        match serde_json::from_slice::<ClientMessage>(body) {
            Ok(ClientMessage::Pose(p)) => self.on_pose(p),
            Ok(ClientMessage::Config(patch)) => self.on_config(patch),
            Ok(ClientMessage::Flush) => self.flush(),
            Ok(ClientMessage::Snapshot) => vec![self.snapshot_message()],
            Err(e) => vec![error(format!("malformed message: {e}"))],
        }
    }
}

fn error(message: impl Into<String>) -> ServerMessage {
    ServerMessage::Error { message: message.into() }
}

/// Pulses in a message list.
pub fn pulses(messages: &[ServerMessage]) -> Vec<PulseCommand> {
    messages
        .iter()
        .filter_map(|m| match m {
            ServerMessage::Pulse(p) => Some(*p),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use slosh_core::calibration::{generate_motion, MotionKind};

    fn small() -> SessionConfig {
        let mut cfg = SessionConfig::default();
        cfg.fluid.particle_count = 120;
        cfg
    }

    fn stream(session: &mut LiveSession, poses: &[PoseSample]) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        for p in poses {
            out.extend(session.on_pose(*p));
        }
        out.extend(session.flush());
        out
    }

    #[test]
    fn matches_batch_pipeline() {
        let cfg = small();
        let poses = generate_motion(&MotionSpec::fast(MotionKind::Sway, 3.0), cfg.timestep).unwrap();
        let batch = crate::pipeline::simulate(&cfg, &poses).unwrap();
        let mut live = LiveSession::new(cfg).unwrap();
        let out = stream(&mut live, &poses);
        assert_eq!(pulses(&out), batch.events);
        assert!(!batch.events.is_empty());
    }

    #[test]
    fn cog_is_decimated() {
        let cfg = small();
        let poses = generate_motion(&MotionSpec::slow(MotionKind::Sway, 2.0), cfg.timestep).unwrap();
        let mut live = LiveSession::new(cfg).unwrap();
        let out = stream(&mut live, &poses);
        let cogs: Vec<f64> = out
            .iter()
            .filter_map(|m| if let ServerMessage::Cog(c) = m { Some(c.t) } else { None })
            .collect();
        assert_eq!(cogs.len(), 60);
        assert!(cogs.windows(2).all(|w| w[1] - w[0] >= 1.0 / COG_RATE_HZ - 1e-9));
    }

    #[test]
    fn regression_and_off_grid_rejected() {
        let mut live = LiveSession::new(small()).unwrap();
        let dt = live.timestep();
        assert!(live.on_pose(PoseSample::upright(1.0, [0.0; 3])).is_empty());
        assert!(matches!(live.on_pose(PoseSample::upright(1.0, [0.0; 3]))[..], [ServerMessage::Error { .. }]));
        assert!(matches!(live.on_pose(PoseSample::upright(0.5, [0.0; 3]))[..], [ServerMessage::Error { .. }]));
        assert!(matches!(live.on_pose(PoseSample::upright(1.0 + 0.5 * dt, [0.0; 3]))[..], [ServerMessage::Error { .. }]));
        let mut bad = PoseSample::upright(1.0 + dt, [0.0; 3]);
        bad.orientation = [2.0, 0.0, 0.0, 0.0];
        assert!(matches!(live.on_pose(bad)[..], [ServerMessage::Error { .. }]));
        assert!(!live.on_pose(PoseSample::upright(1.0 + dt, [0.0; 3])).iter().any(|m| matches!(m, ServerMessage::Error { .. })));
        assert!(matches!(live.handle(b"{nope")[..], [ServerMessage::Error { .. }]));
    }

    #[test]
    fn gaps_hold_the_last_pose() {
        let mut live = LiveSession::new(small()).unwrap();
        let dt = live.timestep();
        live.on_pose(PoseSample::upright(0.0, [0.0; 3]));
        let out = live.on_pose(PoseSample::upright(5.0, [0.0; 3]));
        assert!(pulses(&out).is_empty());
        live.flush();
        let snap = live.snapshot();
        assert_eq!(snap.steps, (5.0 / dt).round() as u64 + 1);
        assert!((snap.t.unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn config_patch_echoes_in_snapshot() {
        let mut live = LiveSession::new(small()).unwrap();
        let out = live.on_config(ConfigPatch { motor_count: Some(6), strength: Some(150), preset: None });
        match &out[..] {
            [ServerMessage::Snapshot(s)] => {
                assert_eq!(s.motor_count, 6);
                assert_eq!(s.motors.len(), 6);
                assert_eq!(s.strength, 150);
            }
            other => panic!("{other:?}"),
        }
        let out = live.on_config(ConfigPatch { motor_count: Some(5), strength: Some(10), preset: None });
        assert!(matches!(out[..], [ServerMessage::Error { .. }]));
        assert_eq!(live.snapshot().motor_count, 6);
        assert_eq!(live.snapshot().strength, 150);
    }

    #[test]
    fn preset_runs_to_completion() {
        let mut live = LiveSession::new(small()).unwrap();
        let spec = MotionSpec::fast(MotionKind::Shake, 1.0);
        live.on_config(ConfigPatch { preset: Some(PresetCommand::Start(spec)), ..Default::default() });
        assert!(live.preset_active());
        assert!(matches!(live.on_pose(PoseSample::upright(9.0, [0.0; 3]))[..], [ServerMessage::Error { .. }]));
        let mut ticks = 0;
        while live.preset_active() {
            live.tick();
            ticks += 1;
        }
        assert_eq!(ticks, spec.sample_count(live.timestep()));
        assert!(live.tick().is_empty());
        assert_eq!(live.snapshot().steps, ticks as u64);
    }
}
