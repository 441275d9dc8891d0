//! File formats, batch pipelines and network services around `slosh-core`.

use std::path::Path;

use thiserror::Error;

pub mod config;
pub mod emulate;
pub mod formats;
pub mod live;
pub mod pipeline;
pub mod serve;
pub mod wire;

pub use config::{ActuatorConfig, SessionConfig};
pub use live::LiveSession;
pub use pipeline::{simulate, Simulation, SimulationOutput, SimulationSummary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{source_name}:{line}: {detail}")]
    Format { source_name: String, line: usize, detail: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Vessel(#[from] slosh_core::vessel::VesselError),
    #[error(transparent)]
    Fluid(#[from] slosh_core::fluid::FluidError),
    #[error(transparent)]
    Pose(#[from] slosh_core::pose::PoseError),
    #[error(transparent)]
    Engine(#[from] slosh_core::engine::EngineError),
    #[error(transparent)]
    Calibration(#[from] slosh_core::calibration::CalibrationError),
    #[error("network: {0}")]
    Net(#[from] std::io::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
