//! Flat TOML run configuration.
//!
//! ```toml
//! eta = 5e-4        # learning rate
//! eta_lambda = 0.05 # controller gain
//! alpha = 0.05      # reference smoothing
//! kappa = 0.01      # macroscopic coupling
//! phi = 1.0         # persistence
//! psi_w = 1e-4      # weight decay
//! psi_b = 0.0       # bias decay
//! K = 1             # Gibbs steps per minibatch
//! batch_size = 128
//! epochs = 400
//! seed = 1
//! n_hidden = 64
//! mode = "adaptive" # adaptive | fixed1 | fixedT
//! temperature = 1.3 # required for fixedT, rejected otherwise
//! flip_statistic = "persistent" # persistent | two_layer
//! init_std = 0.05
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thermorbm::{FlipStatistic, TemperatureMode, TrainConfig};

use crate::fail::{CliError, CliResult};

pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Mode {
    #[serde(rename = "adaptive")]
    #[value(name = "adaptive")]
    Adaptive,
    #[serde(rename = "fixed1")]
    #[value(name = "fixed1")]
    Fixed1,
    #[serde(rename = "fixedT")]
    #[value(name = "fixedT")]
    FixedT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipName {
    Persistent,
    TwoLayer,
}

/// Every key optional; missing keys fall back to the library defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub eta: Option<f64>,
    pub eta_lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub phi: Option<f64>,
    pub psi_w: Option<f64>,
    pub psi_b: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub n_hidden: Option<usize>,
    pub mode: Option<Mode>,
    pub temperature: Option<f64>,
    pub flip_statistic: Option<FlipName>,
    pub init_std: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("missing_file", format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))
    }
}

/// Fully resolved configuration, serialized with the same flat keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub eta: f64,
    pub eta_lambda: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub phi: f64,
    pub psi_w: f64,
    pub psi_b: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub n_hidden: usize,
    pub mode: Mode,
    pub temperature: Option<f64>,
    pub flip_statistic: FlipName,
    pub init_std: f64,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub temperature: Option<f64>,
    pub epochs: Option<usize>,
    pub n_hidden: Option<usize>,
}

impl Resolved {
    pub fn resolve(file: &FileConfig, over: &Overrides) -> CliResult<Self> {
        let d = TrainConfig::default();
        let mode = over.mode.or(file.mode).unwrap_or(Mode::Adaptive);
        let temperature = over.temperature.or(file.temperature);
        match (mode, temperature) {
            (Mode::FixedT, None) => {
                return Err(CliError::new(
                    "config",
                    "mode fixedT needs an explicit temperature (there is no default)",
                ))
            }
            (Mode::Adaptive | Mode::Fixed1, Some(t)) => {
                return Err(CliError::new(
                    "config",
                    format!("temperature = {t} is only meaningful with mode fixedT"),
                ))
            }
            _ => {}
        }
        Ok(Self {
            eta: file.eta.unwrap_or(d.learning_rate),
            eta_lambda: file.eta_lambda.unwrap_or(d.feedback_gain),
            alpha: file.alpha.unwrap_or(d.smoothing),
            kappa: file.kappa.unwrap_or(d.macro_scale),
            phi: file.phi.unwrap_or(d.persistence),
            psi_w: file.psi_w.unwrap_or(d.weight_decay),
            psi_b: file.psi_b.unwrap_or(d.bias_decay),
            k: file.k.unwrap_or(d.gibbs_steps),
            batch_size: file.batch_size.unwrap_or(d.batch_size),
            epochs: over.epochs.or(file.epochs).unwrap_or(d.epochs),
            seed: over.seed.or(file.seed).unwrap_or(d.seed),
            n_hidden: over.n_hidden.or(file.n_hidden).unwrap_or(DEFAULT_HIDDEN),
            mode,
            temperature,
            flip_statistic: file.flip_statistic.unwrap_or(FlipName::Persistent),
            init_std: file.init_std.unwrap_or(d.init_std),
        })
    }

    pub fn temperature_mode(&self) -> TemperatureMode {
        match (self.mode, self.temperature) {
            (Mode::Adaptive, _) => TemperatureMode::Adaptive,
            (Mode::Fixed1, _) => TemperatureMode::FixedUnit,
            (Mode::FixedT, t) => TemperatureMode::FixedValue(t.unwrap_or(f64::NAN)),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            gibbs_steps: self.k,
            learning_rate: self.eta,
            feedback_gain: self.eta_lambda,
            smoothing: self.alpha,
            macro_scale: self.kappa,
            persistence: self.phi,
            weight_decay: self.psi_w,
            bias_decay: self.psi_b,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            temperature_mode: self.temperature_mode(),
            flip_statistic: match self.flip_statistic {
                FlipName::Persistent => FlipStatistic::Persistent,
                FlipName::TwoLayer => FlipStatistic::TwoLayer,
            },
            init_std: self.init_std,
        }
    }
}
