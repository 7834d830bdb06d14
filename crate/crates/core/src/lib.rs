//! Simulation of a binary-state memristor crossbar whose analog weights come
//! from frequency-modulated half-sine read pulses.
//!
//! The flow is: a [`device::ConductanceTable`] maps drive frequency to ON/OFF
//! conductance; [`compiler::compile`] turns an integer kernel into per-row
//! frequencies; [`waveform`] builds phase-aligned pulses; [`crossbar`] runs a
//! single MAC; [`pipeline`] convolves whole images; [`analysis`] reports
//! power, energy, latency and area.

pub mod analysis;
pub mod compiler;
pub mod crossbar;
pub mod device;
pub mod pipeline;
pub mod waveform;

use thiserror::Error;

pub use analysis::{AnalysisError, CostReport};
pub use compiler::{AmplitudeLaw, CompileError, CompileOptions, CrossbarProgram, Kernel, Policy};
pub use crossbar::{CrossbarConfig, CrossbarError, SimResult};
pub use device::{ConductanceTable, DeviceError, DeviceState, DrawContext, NoiseModel};
pub use pipeline::{ConvolutionJob, Image, MacMode, OutputScale, PipelineError};
pub use waveform::{HalfSinePulse, PulseSchedule, WaveformError};

/// Any error from the library, tagged with the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("device: {0}")]
    Device(#[from] DeviceError),
    #[error("waveform: {0}")]
    Waveform(#[from] WaveformError),
    #[error("compiler: {0}")]
    Compile(#[from] CompileError),
    #[error("crossbar: {0}")]
    Crossbar(#[from] CrossbarError),
    #[error("pipeline: {0}")]
    Pipeline(#[from] PipelineError),
    #[error("analysis: {0}")]
    Analysis(#[from] AnalysisError),
}

impl Error {
    /// Name of the originating module.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Device(_) => "device",
            Error::Waveform(_) => "waveform",
            Error::Compile(_) => "compiler",
            Error::Crossbar(_) => "crossbar",
            Error::Pipeline(_) => "pipeline",
            Error::Analysis(_) => "analysis",
        }
    }
}
