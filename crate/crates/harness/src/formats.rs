//! Line-delimited JSON file formats.
//!
//! * trajectory: one [`PoseSample`] per line,
//!   `{"t":0.0,"position":[x,y,z],"orientation":[w,x,y,z]}`
//! * CoG trace: one [`CogSample`] per line, `{"t":0.0,"cog":[x,y,z]}`
//! * events: one pulse per line with fields in the fixed order `t_start`
//!   (six decimals), `motor`, `duration_ms`, `strength`, `cause`
//!
//! Calibration reports and motion mixes are single JSON documents.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use slosh_core::calibration::{MotionSpec, ThresholdReport};
use slosh_core::engine::PulseCommand;
use slosh_core::fluid::CogSample;
use slosh_core::pose::PoseSample;

use crate::HarnessError;

/// Relative slack on the trajectory step.
const STEP_TOLERANCE: f64 = 1e-6;

fn read_lines<T: DeserializeOwned>(reader: impl BufRead, source: &str) -> Result<Vec<T>, HarnessError> {
    let mut out = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Format {
            source_name: source.to_string(),
            line: index + 1,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| HarnessError::Format {
            source_name: source.to_string(),
            line: index + 1,
            detail: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>, HarnessError> {
    File::open(path).map(BufReader::new).map_err(|e| HarnessError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

/// Reads a trajectory and checks every pose plus the fixed step.
pub fn parse_trajectory(reader: impl BufRead, source: &str, timestep: f64) -> Result<Vec<PoseSample>, HarnessError> {
    let poses: Vec<PoseSample> = read_lines(reader, source)?;
    let bad = |index: usize, detail: String| HarnessError::Format {
        source_name: source.to_string(),
        line: index + 1,
        detail,
    };
    for (i, pose) in poses.iter().enumerate() {
        pose.validate().map_err(|e| bad(i, e.to_string()))?;
        if i > 0 {
            let gap = pose.t - poses[i - 1].t;
            if (gap - timestep).abs() > STEP_TOLERANCE * timestep.max(1.0) {
                return Err(bad(i, format!("step {gap} s differs from the configured {timestep} s")));
            }
        }
    }
    Ok(poses)
}

pub fn read_trajectory(path: &Path, timestep: f64) -> Result<Vec<PoseSample>, HarnessError> {
    parse_trajectory(open(path)?, &path.display().to_string(), timestep)
}

pub fn write_trajectory(mut out: impl Write, poses: &[PoseSample]) -> std::io::Result<()> {
    for pose in poses {
        serde_json::to_writer(&mut out, pose)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_trajectory(path: &Path, poses: &[PoseSample]) -> Result<(), HarnessError> {
    write_trajectory(create(path)?, poses).map_err(|e| HarnessError::io(path, e))
}

pub fn write_cog_trace(mut out: impl Write, trace: &[CogSample]) -> std::io::Result<()> {
    for sample in trace {
        serde_json::to_writer(&mut out, sample)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_cog_trace(path: &Path) -> Result<Vec<CogSample>, HarnessError> {
    read_lines(open(path)?, &path.display().to_string())
}

/// One event line, without the trailing newline.
pub fn format_event(cmd: &PulseCommand) -> String {
    format!(
        "{{\"t_start\":{:.6},\"motor\":{},\"duration_ms\":{},\"strength\":{},\"cause\":\"{}\"}}",
        cmd.t_start,
        cmd.motor,
        cmd.duration_ms,
        cmd.strength,
        cmd.cause.as_str()
    )
}

pub fn write_events(mut out: impl Write, events: &[PulseCommand]) -> std::io::Result<()> {
    for cmd in events {
        writeln!(out, "{}", format_event(cmd))?;
    }
    out.flush()
}

pub fn parse_events(reader: impl BufRead, source: &str) -> Result<Vec<PulseCommand>, HarnessError> {
    read_lines(reader, source)
}

pub fn read_events(path: &Path) -> Result<Vec<PulseCommand>, HarnessError> {
    parse_events(open(path)?, &path.display().to_string())
}

pub fn write_report(path: &Path, report: &ThresholdReport) -> Result<(), HarnessError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, report)
        .map_err(std::io::Error::from)
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .map_err(|e| HarnessError::io(path, e))
}

pub fn read_report(path: &Path) -> Result<ThresholdReport, HarnessError> {
    serde_json::from_reader(open(path)?).map_err(|e| HarnessError::Format {
        source_name: path.display().to_string(),
        line: e.line(),
        detail: e.to_string(),
    })
}

/// A JSON array of motion segments.
pub fn read_mix(path: &Path) -> Result<Vec<MotionSpec>, HarnessError> {
    serde_json::from_reader(open(path)?).map_err(|e| HarnessError::Format {
        source_name: path.display().to_string(),
        line: e.line(),
        detail: e.to_string(),
    })
}
