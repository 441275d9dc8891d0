//! Message framing and schema for the live service.
//!
//! Every message is a UTF-8 JSON object preceded by its byte length as a
//! 4-byte big-endian unsigned integer. Objects carry a `type` field; the
//! full schema is in `docs/serve-protocol.md`.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use slosh_core::calibration::MotionSpec;
use slosh_core::engine::PulseCommand;
use slosh_core::fluid::CogSample;
use slosh_core::pose::PoseSample;
use slosh_core::vessel::ProfileSpec;

/// Largest accepted message body.
pub const MAX_MESSAGE_BYTES: usize = 1 << 20;

pub fn write_frame(out: &mut impl Write, body: &[u8]) -> io::Result<()> {
    if body.len() > MAX_MESSAGE_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "message too large"));
    }
    out.write_all(&(body.len() as u32).to_be_bytes())?;
    out.write_all(body)?;
    out.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream between frames.
pub fn read_frame(input: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match input.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_MESSAGE_BYTES {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes exceeds limit")));
    }
    let mut body = vec![0u8; len];
    input.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn send<T: Serialize>(out: &mut impl Write, message: &T) -> io::Result<()> {
    let body = serde_json::to_vec(message).map_err(io::Error::other)?;
    write_frame(out, &body)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum PresetCommand {
    /// Server generates the motion itself, starting from the held pose.
    Start(MotionSpec),
    Stop,
}

/// Fields left out are unchanged.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motor_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<PresetCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Pose(PoseSample),
    Config(ConfigPatch),
    /// Processes the last pose, treating the stream as ended there.
    Flush,
    Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorView {
    pub index: usize,
    /// rad
    pub azimuth: f64,
    pub position: [f64; 3],
    pub anchor: [f64; 3],
    /// Session time (s) the running pulse ends; absent when idle.
    pub active_until: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Time of the last simulated pose.
    pub t: Option<f64>,
    pub timestep: f64,
    pub steps: u64,
    pub vessel: ProfileSpec,
    pub motor_count: usize,
    pub strength: u8,
    pub pulse_duration_ms: u32,
    pub accel_threshold: f64,
    pub distance_threshold: f64,
    pub fill_height: f64,
    pub motors: Vec<MotorView>,
    pub cog: Option<[f64; 3]>,
    pub preset: Option<MotionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Pulse(PulseCommand),
    Cog(CogSample),
    Snapshot(Box<Snapshot>),
    Error { message: String },
}
