//! The U-net family: configuration, construction and inference.

mod config;
mod model;

pub use config::{DownMode, KernelCase, KernelFactor, KernelSchedule, UNetConfig, UpMode};
pub use model::{infer_demultiple, Down, ForwardOptions, ForwardOutput, Model, Up};

/// Builds a model with deterministic He-uniform weights.
pub fn build(config: &UNetConfig, seed: u64) -> crate::Result<Model> {
    Model::build(config, seed)
}

/// Analytic parameter count of `config`.
pub fn param_count(config: &UNetConfig) -> u64 {
    config.param_count()
}
