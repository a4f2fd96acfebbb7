//! Experiment driver: device, configuration, traces, snapshots and the
//! canonical experiments.

pub mod config;
pub mod device;
pub mod experiments;
pub mod fmt;
pub mod snapshot;
pub mod trace;

pub use config::{DeviceConfig, ExperimentConfig};
pub use device::{Device, DeviceStats};
pub use experiments::{run_experiment, Experiment};
