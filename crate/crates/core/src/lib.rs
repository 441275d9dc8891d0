//! Haptic rendering of liquid sloshing in a handheld vessel.
//!
//! A particle fluid is simulated in the vessel's own frame, its center of
//! gravity is tracked, and impacts against the wall are turned into fixed
//! length pulses on a ring of vibration motors.

pub mod acoustics;
pub mod calibration;
pub mod device;
pub mod engine;
pub mod fluid;
pub mod pose;
pub mod vessel;

pub use fluid::{CogSample, FluidParams, FluidSolver, FluidState};
pub use pose::{Drive, PoseSample, Trajectory};
pub use vessel::{ActuatorLayout, Mounting, VesselProfile};
