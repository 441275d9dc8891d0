use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use slosh_core::calibration::{generate_motion, MotionKind, MotionSpec};
use slosh_core::device::MotorModel;
use slosh_harness::emulate::{self, EmulatorEndpoint};
use slosh_harness::pipeline::{self, AnalyzeOptions};
use slosh_harness::serve::{ServeOptions, Server};
use slosh_harness::{formats, SessionConfig};

#[derive(Parser)]
#[command(name = "slosh", version, about = "Fluid-driven haptic pulse pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Session configuration (TOML); built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<SessionConfig> {
        let mut cfg = match &self.config {
            Some(path) => SessionConfig::load(path)?,
            None => SessionConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs a trajectory through the fluid and writes the pulse log.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        cog: Option<PathBuf>,
    },
    /// Derives the acceleration threshold from a motion mix.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
        /// JSON array of motion segments; the default mix when omitted.
        #[arg(long)]
        mix: Option<PathBuf>,
        /// Length of the default mix (s).
        #[arg(long, default_value_t = 600.0)]
        seconds: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measures impact durations and channel asymmetry of WAVE recordings.
    Analyze {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = slosh_core::acoustics::DEFAULT_NOISE_FLOOR)]
        noise_floor: f64,
        #[arg(long, default_value_t = slosh_core::acoustics::DEFAULT_ASYMMETRY_THRESHOLD)]
        asymmetry_threshold: f64,
    },
    /// Serves live sessions over TCP.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Pace server-side presets at wall-clock speed.
        #[arg(long)]
        realtime: bool,
        #[arg(long)]
        max_sessions: Option<usize>,
    },
    /// Emulates the motor controller on a TCP byte stream.
    EmulateDevice {
        #[arg(long, default_value = "127.0.0.1:7879")]
        addr: String,
        #[arg(long, default_value_t = 1000)]
        heartbeat_ms: u64,
        /// State dump file; stdout when omitted.
        #[arg(long)]
        dumps: Option<PathBuf>,
        #[arg(long)]
        max_connections: Option<usize>,
    },
    /// Writes a sinusoidal test trajectory.
    Generate {
        /// sway, shake or swirl
        #[arg(long)]
        kind: String,
        /// fast (2 Hz, 0.1 m) or slow (0.3 Hz, 0.02 m); overridden by explicit values.
        #[arg(long, default_value = "fast")]
        preset: String,
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        frequency: Option<f64>,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 0.0)]
        phase: f64,
        #[arg(long, default_value_t = slosh_core::fluid::DEFAULT_TIMESTEP)]
        timestep: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sends a pulse log to a controller endpoint.
    Play {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7879")]
        addr: String,
        /// Wait for each pulse's start time.
        #[arg(long)]
        realtime: bool,
    },
}

fn motion_kind(name: &str) -> Result<MotionKind> {
    serde_json::from_value(serde_json::Value::String(name.to_lowercase()))
        .with_context(|| format!("unknown motion kind {name:?}"))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| path.display().to_string())?))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate { config, trajectory, events, cog } => {
            let cfg = config.load()?;
            let summary = pipeline::run_simulate(&cfg, &trajectory, &events, cog.as_deref())?;
            print_json(&summary)?;
        }
        Command::Calibrate { config, mix, seconds, out } => {
            let cfg = config.load()?;
            let mix = mix.as_deref().map(formats::read_mix).transpose()?;
            let report = pipeline::run_calibrate(&cfg, mix.as_deref(), seconds, &out)?;
            println!("selected threshold {:e}", report.selected);
        }
        Command::Analyze { files, out, noise_floor, asymmetry_threshold } => {
            let opts = AnalyzeOptions { noise_floor, asymmetry_threshold };
            let report = pipeline::run_analyze(&files, &opts, &out)?;
            match report.mean_duration_ms {
                Some(mean) => println!("mean impact duration {mean:.3} ms over {} channels", report.measurements.len()),
                None => println!("no channel measured"),
            }
            if !report.failures.is_empty() {
                println!("{} file(s) failed", report.failures.len());
            }
        }
        Command::Serve { config, addr, realtime, max_sessions } => {
            let server = Server::bind(&addr, config.load()?, ServeOptions { realtime, max_sessions })?;
            log::info!("listening on {}", server.local_addr()?);
            server.run()?;
        }
        Command::EmulateDevice { addr, heartbeat_ms, dumps, max_connections } => {
            if heartbeat_ms == 0 {
                bail!("heartbeat interval must be positive");
            }
            let endpoint = EmulatorEndpoint::bind(&addr, MotorModel::default())?;
            log::info!("controller emulator on {}", endpoint.local_addr()?);
            let sink: Box<dyn Write + Send> = match dumps {
                Some(path) => Box::new(create(&path)?),
                None => Box::new(std::io::stdout()),
            };
            let _heartbeat = endpoint.heartbeat(Duration::from_millis(heartbeat_ms), sink);
            endpoint.run(max_connections)?;
        }
        Command::Generate { kind, preset, amplitude, frequency, duration, phase, timestep, out } => {
            let kind = motion_kind(&kind)?;
            let mut spec = match preset.as_str() {
                "fast" => MotionSpec::fast(kind, duration),
                "slow" => MotionSpec::slow(kind, duration),
                other => bail!("unknown preset {other:?}"),
            };
            spec.amplitude = amplitude.unwrap_or(spec.amplitude);
            spec.frequency = frequency.unwrap_or(spec.frequency);
            spec.phase = phase;
            let poses = generate_motion(&spec, timestep)?;
            formats::save_trajectory(&out, &poses)?;
        }
        Command::Play { events, addr, realtime } => {
            let events = formats::read_events(&events)?;
            let mut stream = TcpStream::connect(&addr).with_context(|| format!("connecting to {addr}"))?;
            let sent = emulate::play(&mut stream, &events, realtime)?;
            println!("sent {sent} frames");
        }
    }
    Ok(())
}
