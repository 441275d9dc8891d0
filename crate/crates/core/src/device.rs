//! Host-to-controller wire protocol, motor power model and a firmware
//! emulator.
//!
//! A frame is six bytes: `AA motor strength dur_lo dur_hi xor`, where `xor`
//! is the exclusive-or of the four payload bytes and the duration is in
//! milliseconds, little-endian.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYNC: u8 = 0xAA;
pub const FRAME_LEN: usize = 6;
/// Highest motor index the controller addresses.
pub const MAX_MOTOR: u8 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameError {
    #[error("motor index {0} out of range 0..=7")]
    MotorRange(u8),
    #[error("checksum mismatch: expected {expected:#04x}, found {found:#04x}")]
    Checksum { expected: u8, found: u8 },
    #[error("duration {0} ms exceeds 16 bits")]
    DurationRange(u32),
}

/// Payload carried by one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotorCommand {
    pub motor: u8,
    pub strength: u8,
    pub duration_ms: u16,
}

impl MotorCommand {
    /// Builds a command from the host-side pulse fields, checking ranges.
    pub fn new(motor: usize, strength: u8, duration_ms: u32) -> Result<Self, FrameError> {
        let motor = u8::try_from(motor).ok().filter(|&m| m <= MAX_MOTOR).ok_or(FrameError::MotorRange(
            motor.min(u8::MAX as usize) as u8,
        ))?;
        let duration_ms = u16::try_from(duration_ms).map_err(|_| FrameError::DurationRange(duration_ms))?;
        Ok(MotorCommand { motor, strength, duration_ms })
    }
}

fn checksum(payload: &[u8]) -> u8 {
    payload.iter().fold(0, |acc, b| acc ^ b)
}

pub fn encode(cmd: &MotorCommand) -> Result<[u8; FRAME_LEN], FrameError> {
    if cmd.motor > MAX_MOTOR {
        return Err(FrameError::MotorRange(cmd.motor));
    }
    let [lo, hi] = cmd.duration_ms.to_le_bytes();
    let payload = [cmd.motor, cmd.strength, lo, hi];
    Ok([SYNC, payload[0], payload[1], payload[2], payload[3], checksum(&payload)])
}

/// Decodes one complete frame. The first byte must be the sync byte.
pub fn decode(frame: &[u8; FRAME_LEN]) -> Result<MotorCommand, FrameError> {
    debug_assert_eq!(frame[0], SYNC);
    let payload = &frame[1..5];
    let expected = checksum(payload);
    if expected != frame[5] {
        return Err(FrameError::Checksum { expected, found: frame[5] });
    }
    if frame[1] > MAX_MOTOR {
        return Err(FrameError::MotorRange(frame[1]));
    }
    Ok(MotorCommand { motor: frame[1], strength: frame[2], duration_ms: u16::from_le_bytes([frame[3], frame[4]]) })
}

/// Something the decoder pulled out of the byte stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoded {
    Command(MotorCommand),
    Fault(FrameError),
}

/// Incremental decoder for an unframed byte stream.
///
/// Bytes before a sync byte are discarded. A frame that fails its checksum
/// costs only its sync byte, so a real frame hiding inside it is still found.
/// A frame with a valid checksum but an out-of-range motor is consumed whole.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    buffer: Vec<u8>,
    discarded: u64,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes skipped while hunting for a sync byte.
    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    /// Bytes held back waiting for the rest of a frame.
    pub fn pending(&self) -> usize {
        self.buffer.len()
    }

    pub fn push(&mut self, bytes: &[u8]) -> Vec<Decoded> {
        self.buffer.extend_from_slice(bytes);
        let mut out = Vec::new();
        let mut at = 0;
        loop {
            match self.buffer[at..].iter().position(|&b| b == SYNC) {
                Some(skip) => {
                    self.discarded += skip as u64;
                    at += skip;
                }
                None => {
                    self.discarded += (self.buffer.len() - at) as u64;
                    at = self.buffer.len();
                    break;
                }
            }
            if self.buffer.len() - at < FRAME_LEN {
                break;
            }
            let frame: [u8; FRAME_LEN] = self.buffer[at..at + FRAME_LEN].try_into().expect("length checked");
            match decode(&frame) {
                Ok(cmd) => {
                    out.push(Decoded::Command(cmd));
                    at += FRAME_LEN;
                }
                Err(e @ FrameError::Checksum { .. }) => {
                    out.push(Decoded::Fault(e));
                    at += 1;
                }
                Err(e) => {
                    out.push(Decoded::Fault(e));
                    at += FRAME_LEN;
                }
            }
        }
        self.buffer.drain(..at);
        out
    }
}

/// Electrical model of one eccentric-mass vibration motor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorModel {
    /// Ω
    pub resistance: f64,
    /// V
    pub rated_voltage: f64,
    /// Hz
    pub rated_frequency: f64,
    /// A
    pub rated_current: f64,
    /// g
    pub max_amplitude: f64,
}

impl Default for MotorModel {
    fn default() -> Self {
        MotorModel {
            resistance: 15.2,
            rated_voltage: 5.0,
            rated_frequency: 200.0,
            rated_current: 0.085,
            max_amplitude: 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerDraw {
    /// Duty-weighted supply voltage (V).
    pub effective_voltage: f64,
    /// Mean power into a resistive load under PWM (W).
    pub average_power: f64,
}

pub fn power_draw(strength: u8, model: &MotorModel) -> PowerDraw {
    let duty = strength as f64 / 255.0;
    PowerDraw {
        effective_voltage: duty * model.rated_voltage,
        average_power: duty * model.rated_voltage * model.rated_voltage / model.resistance,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MotorSlot {
    pub active: bool,
    pub strength: u8,
    /// Emulator clock (ms) at which the pulse ends.
    pub expires_at: u64,
}

/// A fault recorded while feeding bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub at_ms: u64,
    pub error: FrameError,
}

/// One accepted command, as the firmware saw it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub at_ms: u64,
    pub command: MotorCommand,
}

/// Controller firmware state.
///
/// Every valid frame is honoured. A frame for a motor that is already running
/// restarts its pulse from the current clock, unlike the host engine, which
/// never sends one.
#[derive(Debug, Clone)]
pub struct EmulatorState {
    motors: [MotorSlot; MAX_MOTOR as usize + 1],
    clock_ms: u64,
    decoder: StreamDecoder,
    faults: Vec<FaultRecord>,
    activations: Vec<Activation>,
    energy_j: f64,
    model: MotorModel,
}

impl Default for EmulatorState {
    fn default() -> Self {
        Self::new(MotorModel::default())
    }
}

/// Serializable view of the emulator for heartbeats and logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub clock_ms: u64,
    pub motors: Vec<MotorSlot>,
    pub total_power_w: f64,
    pub energy_j: f64,
    pub faults: usize,
    pub activations: usize,
}

impl EmulatorState {
    pub fn new(model: MotorModel) -> Self {
        EmulatorState {
            motors: Default::default(),
            clock_ms: 0,
            decoder: StreamDecoder::new(),
            faults: Vec::new(),
            activations: Vec::new(),
            energy_j: 0.0,
            model,
        }
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn motors(&self) -> &[MotorSlot] {
        &self.motors
    }

    pub fn faults(&self) -> &[FaultRecord] {
        &self.faults
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    /// Energy delivered to all motors so far (J).
    pub fn energy_j(&self) -> f64 {
        self.energy_j
    }

    pub fn model(&self) -> &MotorModel {
        &self.model
    }

    /// Instantaneous draw of every running motor (W).
    pub fn total_power(&self) -> f64 {
        self.motors.iter().filter(|m| m.active).map(|m| power_draw(m.strength, &self.model).average_power).sum()
    }

    /// Moves the clock forward, integrating energy and retiring expired
    /// pulses. Times in the past leave the clock where it is.
    pub fn advance(&mut self, now_ms: u64) {
        if now_ms <= self.clock_ms {
            return;
        }
        for m in self.motors.iter_mut().filter(|m| m.active) {
            let end = m.expires_at.min(now_ms);
            let watts = power_draw(m.strength, &self.model).average_power;
            self.energy_j += watts * (end - self.clock_ms) as f64 / 1000.0;
            if m.expires_at <= now_ms {
                m.active = false;
            }
        }
        self.clock_ms = now_ms;
    }

    /// Advances to `now_ms`, then decodes and applies `bytes`.
    pub fn feed(&mut self, bytes: &[u8], now_ms: u64) {
        self.advance(now_ms);
        for item in self.decoder.push(bytes) {
            match item {
                Decoded::Command(cmd) => self.apply(cmd),
                Decoded::Fault(error) => self.faults.push(FaultRecord { at_ms: self.clock_ms, error }),
            }
        }
    }

    fn apply(&mut self, cmd: MotorCommand) {
        self.activations.push(Activation { at_ms: self.clock_ms, command: cmd });
        let slot = &mut self.motors[cmd.motor as usize];
        if cmd.duration_ms == 0 {
            *slot = MotorSlot { active: false, strength: cmd.strength, expires_at: self.clock_ms };
        } else {
            *slot = MotorSlot {
                active: true,
                strength: cmd.strength,
                expires_at: self.clock_ms + cmd.duration_ms as u64,
            };
        }
    }

    pub fn dump(&self) -> StateDump {
        StateDump {
            clock_ms: self.clock_ms,
            motors: self.motors.to_vec(),
            total_power_w: self.total_power(),
            energy_j: self.energy_j,
            faults: self.faults.len(),
            activations: self.activations.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cmd(motor: u8, strength: u8, duration_ms: u16) -> MotorCommand {
        MotorCommand { motor, strength, duration_ms }
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode(&cmd(3, 255, 80)).unwrap(), [0xAA, 0x03, 0xFF, 0x50, 0x00, 0xAC]);
        assert_eq!(encode(&cmd(0, 0, 0)).unwrap(), [0xAA, 0, 0, 0, 0, 0]);
        assert_eq!(encode(&cmd(8, 0, 0)).unwrap_err(), FrameError::MotorRange(8));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(&[0xAA, 0x03, 0xFF, 0x50, 0x00, 0xAC]).unwrap(), cmd(3, 255, 80));
        assert_eq!(
            decode(&[0xAA, 0x03, 0xFF, 0x50, 0x00, 0xAD]).unwrap_err(),
            FrameError::Checksum { expected: 0xAC, found: 0xAD }
        );
        assert_eq!(decode(&[0xAA, 0x09, 0x00, 0x00, 0x00, 0x09]).unwrap_err(), FrameError::MotorRange(9));
    }

    #[test]
    fn command_from_host_fields() {
        assert_eq!(MotorCommand::new(7, 200, 80).unwrap(), cmd(7, 200, 80));
        assert_eq!(MotorCommand::new(8, 200, 80).unwrap_err(), FrameError::MotorRange(8));
        assert_eq!(MotorCommand::new(1000, 200, 80).unwrap_err(), FrameError::MotorRange(255));
        assert_eq!(MotorCommand::new(0, 0, 70000).unwrap_err(), FrameError::DurationRange(70000));
    }

    #[test]
    fn garbage_then_frame_recovers() {
        let mut d = StreamDecoder::new();
        let mut bytes = vec![0x00, 0x13, 0xAA, 0x55];
        bytes.extend_from_slice(&encode(&cmd(2, 150, 80)).unwrap());
        let out = d.push(&bytes);
        assert_eq!(out.last(), Some(&Decoded::Command(cmd(2, 150, 80))));
        assert_eq!(d.pending(), 0);
    }

    #[test]
    fn split_frame_waits_for_remaining_bytes() {
        let frame = encode(&cmd(5, 9, 300)).unwrap();
        let mut d = StreamDecoder::new();
        assert!(d.push(&frame[..4]).is_empty());
        assert_eq!(d.pending(), 4);
        assert_eq!(d.push(&frame[4..]), vec![Decoded::Command(cmd(5, 9, 300))]);
    }

    #[test]
    fn power_examples() {
        let m = MotorModel::default();
        let full = power_draw(255, &m);
        assert!((full.effective_voltage - 5.0).abs() < 1e-12);
        assert!((full.average_power - 25.0 / 15.2).abs() < 1e-12);
        assert!((full.average_power - 1.645).abs() / 1.645 < 0.01);
        let mid = power_draw(150, &m);
        assert!((mid.effective_voltage - 2.94).abs() < 0.005);
        assert!((mid.average_power - 150.0 / 255.0 * 25.0 / 15.2).abs() < 1e-12);
        assert_eq!(power_draw(0, &m), PowerDraw { effective_voltage: 0.0, average_power: 0.0 });
    }

    #[test]
    fn emulator_pulse_lifecycle() {
        let mut e = EmulatorState::default();
        let frame = encode(&cmd(2, 255, 80)).unwrap();
        e.feed(&frame, 1000);
        assert_eq!(e.motors()[2], MotorSlot { active: true, strength: 255, expires_at: 1080 });
        e.feed(&frame, 1010);
        assert_eq!(e.motors()[2].expires_at, 1090);
        e.advance(1089);
        assert!(e.motors()[2].active);
        e.advance(1090);
        assert!(!e.motors()[2].active);
        assert_eq!(e.activations().len(), 2);
        let expected = 0.090 * 25.0 / 15.2;
        assert!((e.energy_j() - expected).abs() < 1e-12);
    }

    #[test]
    fn corrupted_byte_logs_one_fault() {
        let mut e = EmulatorState::default();
        let mut bytes = encode(&cmd(1, 200, 80)).unwrap().to_vec();
        bytes[3] ^= 0x04;
        bytes.extend_from_slice(&encode(&cmd(4, 200, 80)).unwrap());
        e.feed(&bytes, 0);
        assert_eq!(e.faults().len(), 1);
        assert!(matches!(e.faults()[0].error, FrameError::Checksum { .. }));
        assert!(e.motors()[4].active);
        assert!(!e.motors()[1].active);
    }

    #[test]
    fn eight_motors_at_full_strength() {
        let mut e = EmulatorState::default();
        for m in 0..8 {
            e.feed(&encode(&cmd(m, 255, 80)).unwrap(), 0);
        }
        assert!((e.total_power() - 8.0 * 1.645).abs() / (8.0 * 1.645) < 0.01);
    }

    #[test]
    fn idle_dump() {
        let mut e = EmulatorState::default();
        e.advance(500);
        let d = e.dump();
        assert_eq!(d.clock_ms, 500);
        assert!(d.motors.iter().all(|m| !m.active));
        assert_eq!(d.total_power_w, 0.0);
    }

    #[test]
    fn exhaustive_round_trip() {
        for motor in 0..=MAX_MOTOR {
            for strength in [0u8, 150, 200, 255] {
                for duration in [0u16, 80, 65535] {
                    let c = cmd(motor, strength, duration);
                    assert_eq!(decode(&encode(&c).unwrap()).unwrap(), c);
                }
            }
        }
    }

    #[test]
    fn every_single_byte_corruption_detected() {
        for motor in 0..=MAX_MOTOR {
            for strength in [0u8, 150, 200, 255] {
                for duration in [0u16, 80, 65535] {
                    let frame = encode(&cmd(motor, strength, duration)).unwrap();
                    for pos in 1..FRAME_LEN {
                        for value in 0..=255u8 {
                            if value == frame[pos] {
                                continue;
                            }
                            let mut bad = frame;
                            bad[pos] = value;
                            assert!(decode(&bad).is_err(), "{bad:02x?}");
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip(motor in 0u8..=7, strength in any::<u8>(), duration in any::<u16>()) {
            let c = cmd(motor, strength, duration);
            prop_assert_eq!(decode(&encode(&c).unwrap()).unwrap(), c);
        }

        #[test]
        fn decoder_is_chunking_independent(
            cmds in prop::collection::vec((0u8..=7, any::<u8>(), any::<u16>()), 0..20),
            noise in prop::collection::vec(any::<u8>().prop_filter("no sync", |b| *b != SYNC), 0..10),
            cut in 0usize..200,
        ) {
            let mut bytes = noise.clone();
            for &(m, s, d) in &cmds {
                bytes.extend_from_slice(&encode(&cmd(m, s, d)).unwrap());
            }
            let mut whole = StreamDecoder::new();
            let all = whole.push(&bytes);
            let mut split = StreamDecoder::new();
            let cut = cut.min(bytes.len());
            let mut parts = split.push(&bytes[..cut]);
            parts.extend(split.push(&bytes[cut..]));
            prop_assert_eq!(&all, &parts);
            let found: Vec<_> = all.iter().filter_map(|d| match d { Decoded::Command(c) => Some(*c), _ => None }).collect();
            let sent: Vec<_> = cmds.iter().map(|&(m, s, d)| cmd(m, s, d)).collect();
            prop_assert!(found.ends_with(&sent));
        }

        #[test]
        fn no_motor_outlives_its_expiry(
            events in prop::collection::vec((prop::collection::vec(any::<u8>(), 0..14), 0u64..200), 1..40),
        ) {
            let mut e = EmulatorState::default();
            let mut now = 0u64;
            for (bytes, gap) in events {
                now += gap;
                e.feed(&bytes, now);
                for m in e.motors() {
                    prop_assert!(!m.active || m.expires_at > e.clock_ms());
                }
            }
        }
    }
}
