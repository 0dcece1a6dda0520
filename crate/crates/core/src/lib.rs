//! Binary restricted Boltzmann machines whose sampling temperature is a
//! feedback-controlled state variable, plus brute-force oracles for small
//! instances.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the trainer and the CLI.

pub mod ais;
pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod controller;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod exact;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod stability;
pub mod trainer;

pub use config::{validate_config, FlipStatistic, TemperatureMode, TrainConfig};
pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use metrics::EpochMetrics;
pub use model::{BinaryMatrix, ChainState, ChainTrace, RbmParams, ThermoState};
pub use scalar::Scalar;
pub use trainer::{train, train_with, Gradient, PersistentChains, TrainResult, Trainer};

pub type Rbm = RbmParams<f64>;
pub type Rbm32 = RbmParams<f32>;
pub type Thermo = ThermoState<f64>;
pub type Trace = ChainTrace<f64>;
