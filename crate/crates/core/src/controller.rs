//! Thermodynamic feedback law.
//!
//! Per epoch `t` the controller sees the flip rate `r_t` and the
//! free-energy gap `ΔF_t`, then updates
//!
//! ```text
//! c_{t+1}  = (1 − α) c_t + α r_t
//! λ_{t+1}  = φ λ_t − η_λ (r_t − c_t)
//! ΔF̄_{t+1} = ΔF̄_t + (ΔF_t − ΔF̄_t) / (t + 1)
//! ```
//!
//! and the sampling temperature is `T = e^λ + κ ΔF̄`.

use crate::config::{TemperatureMode, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{BinaryMatrix, RbmParams, ThermoState};
use crate::sampler::{check_temperature, free_energy_unchecked};
use crate::scalar::Scalar;

/// Numerical guard on `λ`; e^20 ≈ 4.9e8.
pub const LAMBDA_CLAMP: f64 = 20.0;

fn unit_interval<S: Scalar>(x: S, name: &str) -> Result<()> {
    if x >= S::zero() && x <= S::one() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {x} outside [0, 1]")))
    }
}

/// Exponential smoothing of the reference flip rate.
pub fn update_reference<S: Scalar>(c: S, r: S, alpha: S) -> Result<S> {
    unit_interval(c, "reference c")?;
    unit_interval(r, "flip rate r")?;
    if !(alpha > S::zero() && alpha < S::one()) {
        return Err(Error::invalid(format!("α = {alpha} outside (0, 1)")));
    }
    let next = (S::one() - alpha) * c + alpha * r;
    // Rounding can push a convex combination of values in [0,1] a hair outside.
    Ok(next.max(S::zero()).min(S::one()))
}

/// `λ' = φλ − η_λ(r − c)`.
pub fn update_lambda<S: Scalar>(lambda: S, r: S, c: S, phi: S, eta_lambda: S) -> Result<S> {
    if !(phi > S::zero() && phi <= S::one()) {
        return Err(Error::invalid(format!("φ = {phi} outside (0, 1]")));
    }
    if !(eta_lambda > S::zero()) {
        return Err(Error::invalid(format!("η_λ = {eta_lambda} must be positive")));
    }
    Ok(phi * lambda - eta_lambda * (r - c))
}

/// Running-mean update; after the `t`-th value the result is the mean of
/// the first `t` values.
pub fn cesaro_update<S: Scalar>(mean: S, x: S, t: u64) -> Result<S> {
    if t == 0 {
        return Err(Error::invalid("Cesàro index t must be >= 1"));
    }
    Ok(mean + (x - mean) / S::of(t as f64))
}

/// Sampling temperature for the given mode.
pub fn temperature<S: Scalar>(state: &ThermoState<S>, kappa: S, mode: TemperatureMode) -> Result<S> {
    let t = match mode {
        TemperatureMode::Adaptive => state.lambda.exp() + kappa * state.cesaro_gap,
        TemperatureMode::FixedUnit => S::one(),
        TemperatureMode::FixedValue(v) => S::of(v),
    };
    if t > S::zero() && t.is_finite() {
        Ok(t)
    } else {
        Err(Error::Temperature(t.as_f64()))
    }
}

/// Limiting macro-only rule `T = κ·R̄`.
pub fn macro_temperature<S: Scalar>(kappa: S, cesaro_energy_gap: S) -> Result<S> {
    let t = kappa * cesaro_energy_gap;
    check_temperature(t)?;
    Ok(t)
}

fn non_empty(m: &BinaryMatrix, what: &str) -> Result<()> {
    if m.is_empty() {
        Err(Error::invalid(format!("{what} batch is empty")))
    } else {
        Ok(())
    }
}

fn mean_free_energy<S: Scalar>(params: &RbmParams<S>, t: S, batch: &BinaryMatrix) -> S {
    let sum: S = batch.iter_rows().map(|v| free_energy_unchecked(params, t, v)).sum();
    sum / S::of_usize(batch.rows())
}

/// `|E_data[F_T(v)] − E_model[F_T(v)]|` over two batches.
pub fn free_energy_gap<S: Scalar>(
    params: &RbmParams<S>,
    t: S,
    data: &BinaryMatrix,
    model: &BinaryMatrix,
) -> Result<S> {
    check_temperature(t)?;
    non_empty(data, "data")?;
    non_empty(model, "model")?;
    params.check_visible(data.cols())?;
    params.check_visible(model.cols())?;
    Ok((mean_free_energy(params, t, data) - mean_free_energy(params, t, model)).abs())
}

/// Energy with a real-valued hidden vector (the energy is linear in `h`, so
/// this is `E_h[E(v,h)]` when `hidden` holds activation probabilities).
pub(crate) fn energy_mean_hidden<S: Scalar>(params: &RbmParams<S>, v: &[u8], hidden: &[S]) -> S {
    let fields = params.hidden_fields(v);
    let vb: S = v
        .iter()
        .zip(params.visible_bias())
        .filter(|(&x, _)| x != 0)
        .map(|(_, &b)| b)
        .sum();
    // x_j(v)·h_j already contains h·b_h + vᵀWh.
    -vb - fields.iter().zip(hidden).map(|(&x, &h)| x * h).sum::<S>()
}

/// `R = |E_data[E] − E_model[E]|`, with hidden expectations on the data side.
pub fn energy_gap<S: Scalar>(
    params: &RbmParams<S>,
    data: &BinaryMatrix,
    data_hidden_probs: &[Vec<S>],
    model: &BinaryMatrix,
    model_hidden: &BinaryMatrix,
) -> Result<S> {
    non_empty(data, "data")?;
    non_empty(model, "model")?;
    if data_hidden_probs.len() != data.rows() {
        return Err(Error::dim("data hidden rows", data.rows(), data_hidden_probs.len()));
    }
    if model_hidden.rows() != model.rows() {
        return Err(Error::dim("model hidden rows", model.rows(), model_hidden.rows()));
    }
    params.check_visible(data.cols())?;
    params.check_visible(model.cols())?;
    params.check_hidden(model_hidden.cols())?;
    for p in data_hidden_probs {
        params.check_hidden(p.len())?;
    }
    let data_mean = data
        .iter_rows()
        .zip(data_hidden_probs)
        .map(|(v, p)| energy_mean_hidden(params, v, p))
        .sum::<S>()
        / S::of_usize(data.rows());
    let model_mean = model
        .iter_rows()
        .zip(model_hidden.iter_rows())
        .map(|(v, h)| crate::sampler::energy_unchecked(params, v, h))
        .sum::<S>()
        / S::of_usize(model.rows());
    Ok((data_mean - model_mean).abs())
}

/// Result of one epoch-end controller update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerStep<S> {
    pub state: ThermoState<S>,
    /// `λ` hit the numerical guard; never expected in the regulated regime.
    pub clamped: bool,
}

impl<S: Scalar> ThermoState<S> {
    /// Epoch-end update with flip rate `r` and free-energy gap `gap`.
    pub fn advance(&self, r: S, gap: S, config: &TrainConfig) -> Result<ControllerStep<S>> {
        if !(gap >= S::zero()) {
            return Err(Error::invalid(format!("free-energy gap {gap} must be >= 0")));
        }
        let reference = update_reference(self.reference, r, S::of(config.smoothing))?;
        let raw = update_lambda(
            self.lambda,
            r,
            self.reference,
            S::of(config.persistence),
            S::of(config.feedback_gain),
        )?;
        let bound = S::of(LAMBDA_CLAMP);
        let lambda = raw.max(-bound).min(bound);
        let epoch = self.epoch + 1;
        let cesaro_gap = cesaro_update(self.cesaro_gap, gap, epoch)?.max(S::zero());
        Ok(ControllerStep {
            state: ThermoState {
                lambda,
                reference,
                cesaro_gap,
                epoch,
            },
            clamped: lambda != raw,
        })
    }
}
