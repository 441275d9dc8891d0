//! Impact-duration and stereo-asymmetry measurements on recorded vessel
//! impacts, plus a minimal 16-bit PCM WAVE reader and writer.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Samples at or below this magnitude (full scale = 1) count as silence.
pub const DEFAULT_NOISE_FLOOR: f64 = 0.01;
/// Peak ratio beyond which a stereo window is classed as asymmetric.
pub const DEFAULT_ASYMMETRY_THRESHOLD: f64 = 1.5;

const PCM_FULL_SCALE: f64 = 32768.0;
const FORMAT_PCM: u16 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcousticsError {
    #[error("malformed WAVE data at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("channel {channel} requested from a {channels}-channel clip")]
    Channel { channel: usize, channels: usize },
    #[error("asymmetry needs a stereo clip, got {0} channel(s)")]
    NotStereo(usize),
    #[error("window {start}..{end} exceeds clip length {len}")]
    Window { start: usize, end: usize, len: usize },
    #[error("both channels are silent over the window; ratio undefined")]
    UndefinedRatio,
    #[error("no measurements to average")]
    Empty,
}

/// Mono or stereo audio with samples normalised to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl AudioClip {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self, AcousticsError> {
        if sample_rate == 0 {
            return Err(AcousticsError::InvalidClip("sample rate must be positive".into()));
        }
        if !(1..=2).contains(&channels.len()) {
            return Err(AcousticsError::InvalidClip(format!(
                "expected 1 or 2 channels, got {}",
                channels.len()
            )));
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return Err(AcousticsError::InvalidClip("channels differ in length".into()));
        }
        Ok(AudioClip { sample_rate, channels })
    }

    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Result<Self, AcousticsError> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn stereo(sample_rate: u32, left: Vec<f64>, right: Vec<f64>) -> Result<Self, AcousticsError> {
        Self::new(sample_rate, vec![left, right])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Frames per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, index: usize) -> Result<&[f64], AcousticsError> {
        self.channels
            .get(index)
            .map(Vec::as_slice)
            .ok_or(AcousticsError::Channel { channel: index, channels: self.channels.len() })
    }
}

fn format_error(offset: usize, detail: impl Into<String>) -> AcousticsError {
    AcousticsError::Format { offset, detail: detail.into() }
}

fn read_u16(bytes: &[u8], at: usize) -> Result<u16, AcousticsError> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .ok_or_else(|| format_error(at, "unexpected end of data"))
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, AcousticsError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_error(at, "unexpected end of data"))
}

struct PcmFormat {
    channels: u16,
    sample_rate: u32,
}

/// Parses a RIFF/WAVE file holding 16-bit signed PCM in one or two channels.
///
/// Unknown chunks are skipped. Any other encoding is rejected.
pub fn load_pcm(bytes: &[u8]) -> Result<AudioClip, AcousticsError> {
    if bytes.get(0..4) != Some(b"RIFF") {
        return Err(format_error(0, "missing RIFF tag"));
    }
    read_u32(bytes, 4)?;
    if bytes.get(8..12) != Some(b"WAVE") {
        return Err(format_error(8, "missing WAVE tag"));
    }

    let mut format: Option<PcmFormat> = None;
    let mut at = 12;
    while at < bytes.len() {
        let id = bytes.get(at..at + 4).ok_or_else(|| format_error(at, "truncated chunk header"))?;
        let size = read_u32(bytes, at + 4)? as usize;
        let body = at + 8;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(format_error(body, format!("fmt chunk of {size} bytes is too short")));
                }
                if body + size > bytes.len() {
                    return Err(format_error(body, "truncated fmt chunk"));
                }
                let tag = read_u16(bytes, body)?;
                let channels = read_u16(bytes, body + 2)?;
                let sample_rate = read_u32(bytes, body + 4)?;
                let block_align = read_u16(bytes, body + 12)?;
                let bits = read_u16(bytes, body + 14)?;
                if tag != FORMAT_PCM {
                    return Err(format_error(body, format!("format tag {tag} is not integer PCM")));
                }
                if !(1..=2).contains(&channels) {
                    return Err(format_error(body + 2, format!("{channels} channels unsupported")));
                }
                if sample_rate == 0 {
                    return Err(format_error(body + 4, "zero sample rate"));
                }
                if bits != 16 {
                    return Err(format_error(body + 14, format!("{bits}-bit samples unsupported")));
                }
                if block_align != channels * 2 {
                    return Err(format_error(body + 12, format!("block align {block_align} inconsistent")));
                }
                format = Some(PcmFormat { channels, sample_rate });
            }
            b"data" => {
                let fmt = format.as_ref().ok_or_else(|| format_error(at, "data chunk before fmt chunk"))?;
                if body + size > bytes.len() {
                    return Err(format_error(
                        body,
                        format!("data chunk declares {size} bytes, {} present", bytes.len() - body),
                    ));
                }
                let frame = 2 * fmt.channels as usize;
                if !size.is_multiple_of(frame) {
                    return Err(format_error(body, format!("data size {size} is not a whole number of frames")));
                }
                let n = fmt.channels as usize;
                let mut channels = vec![Vec::with_capacity(size / frame); n];
                for (k, pair) in bytes[body..body + size].chunks_exact(2).enumerate() {
                    let v = i16::from_le_bytes([pair[0], pair[1]]);
                    channels[k % n].push(v as f64 / PCM_FULL_SCALE);
                }
                return AudioClip::new(fmt.sample_rate, channels);
            }
            _ => {}
        }
        at = body + size + (size & 1);
    }
    Err(format_error(bytes.len(), "no data chunk"))
}

/// Encodes a clip as a canonical 44-byte-header 16-bit PCM WAVE file.
///
/// Samples are scaled by 32768, rounded and clamped to the `i16` range.
pub fn write_pcm(clip: &AudioClip) -> Vec<u8> {
    let n = clip.channel_count() as u16;
    let data_len = (clip.len() * 2 * n as usize) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2 * n as u32).to_le_bytes());
    out.extend_from_slice(&(2 * n).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for i in 0..clip.len() {
        for c in &clip.channels {
            out.extend_from_slice(&quantize(c[i]).to_le_bytes());
        }
    }
    out
}

/// Nearest 16-bit PCM code for a normalised sample.
pub fn quantize(x: f64) -> i16 {
    (x * PCM_FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactMeasurement {
    pub duration_ms: f64,
    pub first_crossing: usize,
    pub last_crossing: usize,
}

/// Time between the first and last zero crossings of one channel.
///
/// Samples with `|x| <= noise_floor` are zeroed first. A crossing is either a
/// zeroed sample next to a non-zero one, or a sign change between neighbours,
/// placed on whichever of the pair is closer to zero. On a tie the earlier
/// sample is used for the first crossing and the later one for the last, so
/// reversing the clip gives the same duration. Fewer than two crossings give
/// a duration of zero.
pub fn impact_duration(
    clip: &AudioClip,
    channel: usize,
    noise_floor: f64,
) -> Result<ImpactMeasurement, AcousticsError> {
    let x = clip.channel(channel)?;
    let y: Vec<f64> = x.iter().map(|&v| if v.abs() <= noise_floor { 0.0 } else { v }).collect();

    let mut count = 0usize;
    let mut first = usize::MAX;
    let mut last = 0usize;
    let mut mark = |lo: usize, hi: usize| {
        count += 1;
        first = first.min(lo);
        last = last.max(hi);
    };
    for i in 0..y.len() {
        if y[i] == 0.0 {
            let left = i > 0 && y[i - 1] != 0.0;
            let right = i + 1 < y.len() && y[i + 1] != 0.0;
            if left || right {
                mark(i, i);
            }
        } else if i + 1 < y.len() && y[i + 1] != 0.0 && (y[i] > 0.0) != (y[i + 1] > 0.0) {
            let (a, b) = (y[i].abs(), y[i + 1].abs());
            if a < b {
                mark(i, i);
            } else if b < a {
                mark(i + 1, i + 1);
            } else {
                mark(i, i + 1);
            }
        }
    }

    if count < 2 {
        let at = if count == 1 { first } else { 0 };
        return Ok(ImpactMeasurement { duration_ms: 0.0, first_crossing: at, last_crossing: at });
    }
    Ok(ImpactMeasurement {
        duration_ms: (last - first) as f64 * 1000.0 / clip.sample_rate as f64,
        first_crossing: first,
        last_crossing: last,
    })
}

pub fn mean_duration(measurements: &[ImpactMeasurement]) -> Result<f64, AcousticsError> {
    if measurements.is_empty() {
        return Err(AcousticsError::Empty);
    }
    let total: f64 = measurements.iter().map(|m| m.duration_ms).sum();
    Ok(total / measurements.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AsymmetryClass {
    Asymmetric,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymmetry {
    /// Peak |left| over peak |right|; infinite when only the right is silent.
    pub ratio: f64,
    pub class: AsymmetryClass,
}

/// Compares left and right peak amplitude over a sample window.
pub fn channel_asymmetry(
    clip: &AudioClip,
    window: Range<usize>,
    threshold: f64,
) -> Result<Asymmetry, AcousticsError> {
    if clip.channel_count() != 2 {
        return Err(AcousticsError::NotStereo(clip.channel_count()));
    }
    if window.start > window.end || window.end > clip.len() {
        return Err(AcousticsError::Window { start: window.start, end: window.end, len: clip.len() });
    }
    let peak = |c: usize| clip.channels[c][window.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (left, right) = (peak(0), peak(1));
    if left == 0.0 && right == 0.0 {
        return Err(AcousticsError::UndefinedRatio);
    }
    let ratio = if right == 0.0 { f64::INFINITY } else { left / right };
    let class = if ratio > threshold || ratio < 1.0 / threshold {
        AsymmetryClass::Asymmetric
    } else {
        AsymmetryClass::Symmetric
    };
    Ok(Asymmetry { ratio, class })
}
