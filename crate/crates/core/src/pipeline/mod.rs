//! End-to-end runs: simulate, detect, read and write memory, evaluate.

mod config;
mod run;
mod sweep;

pub use config::{FeatureConfig, MemoryConfig, MemoryPolicy, ProjectionConfig, ProjectionMode, RunConfig};
pub use run::{
    build_memory, fit_projection, fitted_projection, run, run_in_world, run_with_projection, FrameRecord, RunError,
    RunOutput, RunReport, World,
};
pub use sweep::{sweep, SweepGrid, SweepPoint};
