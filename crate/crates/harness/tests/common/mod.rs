//! Fixtures shared by the integration suites and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

/// One recorded channel of a synthetic impact: silence, a decaying ring,
/// silence. The ring starts one sample after `onset` and ends one sample
/// before `onset + span`, so both crossings sit on the bracketing zeros.
pub struct Burst {
    pub onset: usize,
    pub span: usize,
    pub amplitude: f64,
    pub freq_hz: f64,
}

impl Burst {
    fn render(&self, sample_rate: u32, total: usize) -> Vec<f64> {
        let mut out = vec![0.0; total];
        for k in 1..self.span {
            let decay = (-3.0 * k as f64 / self.span as f64).exp();
            out[self.onset + k] = self.amplitude * decay * (TAU * self.freq_hz * k as f64 / sample_rate as f64).cos();
        }
        out[self.onset + 1] = self.amplitude;
        out[self.onset + self.span - 1] = -0.25 * self.amplitude;
        out
    }
}

pub struct Fixture {
    pub path: PathBuf,
    pub sample_rate: u32,
    pub bursts: Vec<Burst>,
}

impl Fixture {
    /// Durations (ms) by construction, one per channel.
    pub fn expected_ms(&self) -> Vec<f64> {
        self.bursts.iter().map(|b| b.span as f64 * 1000.0 / self.sample_rate as f64).collect()
    }
}

/// Minimal PCM16 WAVE writer, kept apart from the library's own.
pub fn wav_bytes(sample_rate: u32, channels: &[Vec<f64>]) -> Vec<u8> {
    let n = channels.len() as u16;
    let frames = channels[0].len();
    let data_len = (frames * 2 * n as usize) as u32;
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&n.to_le_bytes());
    b.extend_from_slice(&sample_rate.to_le_bytes());
    b.extend_from_slice(&(sample_rate * 2 * n as u32).to_le_bytes());
    b.extend_from_slice(&(2 * n).to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for i in 0..frames {
        for ch in channels {
            let v = (ch[i] * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

pub fn write_fixture(dir: &Path, name: &str, sample_rate: u32, bursts: Vec<Burst>) -> Fixture {
    let total = bursts.iter().map(|b| b.onset + b.span).max().unwrap() + 200;
    let channels: Vec<Vec<f64>> = bursts.iter().map(|b| b.render(sample_rate, total)).collect();
    let path = dir.join(name);
    std::fs::write(&path, wav_bytes(sample_rate, &channels)).unwrap();
    Fixture { path, sample_rate, bursts }
}

/// 81 clips mixing 44.1/48 kHz, mono and stereo, 50 to 90 ms rings.
pub fn impact_corpus(dir: &Path) -> Vec<Fixture> {
    (0..81)
        .map(|i| {
            let sample_rate = if i % 2 == 0 { 44_100 } else { 48_000 };
            let span = (sample_rate as f64 * (0.05 + 0.0005 * i as f64)).round() as usize;
            let left = Burst { onset: 100 + 37 * i, span, amplitude: 0.5 + 0.005 * i as f64, freq_hz: 180.0 + 5.0 * i as f64 };
            let mut bursts = vec![left];
            if i % 3 == 0 {
                bursts.push(Burst { onset: 113 + 37 * i, span: span - 29, amplitude: 0.3, freq_hz: 240.0 });
            }
            write_fixture(dir, &format!("impact_{i:02}.wav"), sample_rate, bursts)
        })
        .collect()
}

/// Plain mean of every channel's constructed duration.
pub fn corpus_mean_ms(corpus: &[Fixture]) -> f64 {
    let all: Vec<f64> = corpus.iter().flat_map(Fixture::expected_ms).collect();
    all.iter().sum::<f64>() / all.len() as f64
}

pub fn left_half(azimuth: f64) -> bool {
    azimuth.cos() < 0.0
}
