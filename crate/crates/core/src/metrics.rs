//! Per-epoch training record.

use serde::{Deserialize, Serialize};

/// One line of the metrics stream.
///
/// Controller quantities (`lambda`, `reference`, `cesaro_gap`) are the
/// values in force during the epoch, so `temperature` equals
/// `e^lambda + κ·cesaro_gap` in adaptive mode. `flip_rate` and `gap` are
/// the values measured during the epoch and fed to the controller at its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: u64,
    pub flip_rate: f64,
    pub temperature: f64,
    pub lambda: f64,
    pub reference: f64,
    /// Epoch-mean free-energy gap `ΔF`.
    pub gap: f64,
    pub cesaro_gap: f64,
    /// Epoch-mean joint-energy gap `R`.
    pub energy_gap: f64,
    pub recon_mse: f64,
    pub theta_norm: f64,
    pub beta_norm: f64,
    pub beta_eff: f64,
    pub beta_spectral: f64,
    /// `None` when `K < 2`: the statistic needs two transitions.
    #[serde(rename = "mean_abs_dE")]
    pub mean_abs_de: Option<f64>,
}

impl EpochMetrics {
    /// Control error `u = r − c`.
    pub fn control_error(&self) -> f64 {
        self.flip_rate - self.reference
    }
}
