//! Training configuration and its validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the sampling temperature is chosen each minibatch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TemperatureMode {
    /// `T = e^λ + κ·ΔF̄`, driven by the feedback controller.
    Adaptive,
    /// `T ≡ 1`.
    FixedUnit,
    /// `T ≡ value`.
    FixedValue(f64),
}

/// Which flip statistic feeds the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FlipStatistic {
    /// Visible-only net change of the persistent chain across the K steps of a minibatch.
    #[default]
    Persistent,
    /// Per-update two-layer flip fraction averaged over the K steps.
    TwoLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Gibbs steps per minibatch (`K`).
    pub gibbs_steps: usize,
    /// Parameter learning rate `η`.
    pub learning_rate: f64,
    /// Controller gain `η_λ`.
    pub feedback_gain: f64,
    /// Reference smoothing `α ∈ (0,1)`.
    pub smoothing: f64,
    /// Macroscopic coupling `κ ≥ 0`.
    pub macro_scale: f64,
    /// Persistence factor `φ ∈ (0,1]`.
    pub persistence: f64,
    /// Weight decay `ψ_W`.
    pub weight_decay: f64,
    /// Bias decay `ψ_b`.
    pub bias_decay: f64,
    pub batch_size: usize,
    /// Zero is accepted and trains nothing.
    pub epochs: usize,
    pub seed: u64,
    pub temperature_mode: TemperatureMode,
    #[serde(default)]
    pub flip_statistic: FlipStatistic,
    /// Standard deviation of the initial weights.
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_init_std() -> f64 {
    0.05
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gibbs_steps: 1,
            learning_rate: 5e-4,
            feedback_gain: 0.05,
            smoothing: 0.05,
            macro_scale: 0.01,
            persistence: 1.0,
            weight_decay: 1e-4,
            bias_decay: 0.0,
            batch_size: 128,
            epochs: 400,
            seed: 1,
            temperature_mode: TemperatureMode::Adaptive,
            flip_statistic: FlipStatistic::Persistent,
            init_std: default_init_std(),
        }
    }
}

impl TrainConfig {
    /// Largest decay coefficient `ψ_max`.
    pub fn max_decay(&self) -> f64 {
        self.weight_decay.max(self.bias_decay)
    }

    /// Contraction factor `ϱ = max(|1 − ηψ_W|, |1 − ηψ_b|)` of the regularized recursion.
    pub fn contraction_factor(&self) -> f64 {
        let eta = self.learning_rate;
        (1.0 - eta * self.weight_decay)
            .abs()
            .max((1.0 - eta * self.bias_decay).abs())
    }

    /// Non-fatal observations about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.bias_decay == 0.0 || self.weight_decay == 0.0 {
            out.push(
                "a decay coefficient is 0: the global boundedness guarantee needs ψ_W, ψ_b > 0"
                    .to_string(),
            );
        }
        if self.persistence == 1.0 {
            out.push("φ = 1: the controller linearization is marginal (pure integral feedback)".to_string());
        }
        out
    }
}

/// Returns the configuration unchanged if every invariant holds, otherwise
/// the full list of violations.
pub fn validate_config(config: &TrainConfig, n_visible: usize, n_hidden: usize) -> Result<TrainConfig> {
    let mut errs = Vec::new();
    let positive = |x: f64| x.is_finite() && x > 0.0;

    if n_visible == 0 || n_hidden == 0 {
        errs.push(format!("layer sizes must be >= 1 (n_v={n_visible}, n_h={n_hidden})"));
    }
    if config.gibbs_steps == 0 {
        errs.push("K must be a positive integer".into());
    }
    if !positive(config.learning_rate) {
        errs.push(format!("η must be positive, got {}", config.learning_rate));
    }
    if !positive(config.feedback_gain) {
        errs.push(format!("η_λ must be positive, got {}", config.feedback_gain));
    }
    if !(config.smoothing > 0.0 && config.smoothing < 1.0) {
        errs.push(format!("α must lie in (0, 1), got {}", config.smoothing));
    }
    if !(config.macro_scale >= 0.0 && config.macro_scale.is_finite()) {
        errs.push(format!("κ must be >= 0, got {}", config.macro_scale));
    }
    if !(config.persistence > 0.0 && config.persistence <= 1.0) {
        errs.push(format!("φ must lie in (0, 1], got {}", config.persistence));
    }
    if !(config.weight_decay >= 0.0 && config.weight_decay.is_finite()) {
        errs.push(format!("ψ_W must be >= 0, got {}", config.weight_decay));
    }
    if !(config.bias_decay >= 0.0 && config.bias_decay.is_finite()) {
        errs.push(format!("ψ_b must be >= 0, got {}", config.bias_decay));
    }
    let product = config.learning_rate * config.max_decay();
    if !(product < 2.0) {
        errs.push(format!("η·ψ_max = {product} must be < 2"));
    }
    if config.batch_size == 0 {
        errs.push("batch_size must be a positive integer".into());
    }
    if !(config.init_std >= 0.0 && config.init_std.is_finite()) {
        errs.push(format!("init_std must be >= 0, got {}", config.init_std));
    }
    if let TemperatureMode::FixedValue(t) = config.temperature_mode {
        if !positive(t) {
            errs.push(format!("a fixed temperature must be > 0, got {t}"));
        }
    }

    if errs.is_empty() {
        Ok(config.clone())
    } else {
        Err(Error::InvalidConfig(errs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn violations(cfg: &TrainConfig) -> Vec<String> {
        match validate_config(cfg, 784, 512) {
            Err(Error::InvalidConfig(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn reported_configuration_is_valid() {
        let cfg = TrainConfig {
            learning_rate: 5e-4,
            weight_decay: 1e-4,
            bias_decay: 0.0,
            smoothing: 0.05,
            persistence: 1.0,
            gibbs_steps: 1,
            ..TrainConfig::default()
        };
        assert_eq!(validate_config(&cfg, 784, 512).unwrap(), cfg);
        // ψ_b = 0 is a warning, not an error.
        assert!(!cfg.warnings().is_empty());
    }

    #[test]
    fn contraction_precondition() {
        let cfg = TrainConfig {
            learning_rate: 1.0,
            weight_decay: 3.0,
            ..TrainConfig::default()
        };
        let v = violations(&cfg);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("η·ψ_max = 3"));
    }

    #[test]
    fn smoothing_boundaries() {
        for alpha in [0.0, 1.0, -0.2] {
            let cfg = TrainConfig {
                smoothing: alpha,
                ..TrainConfig::default()
            };
            assert!(violations(&cfg)[0].contains("α"));
        }
    }

    #[test]
    fn collects_every_violation() {
        let cfg = TrainConfig {
            gibbs_steps: 0,
            learning_rate: 0.0,
            batch_size: 0,
            persistence: 1.5,
            temperature_mode: TemperatureMode::FixedValue(0.0),
            ..TrainConfig::default()
        };
        assert_eq!(violations(&cfg).len(), 5);
    }

    proptest! {
        #[test]
        fn validation_is_idempotent(
            eta in 1e-6f64..2.0,
            psi_w in 0.0f64..3.0,
            psi_b in 0.0f64..3.0,
            alpha in -0.5f64..1.5,
            phi in -0.5f64..1.5,
            k in 0usize..4,
        ) {
            let cfg = TrainConfig {
                learning_rate: eta,
                weight_decay: psi_w,
                bias_decay: psi_b,
                smoothing: alpha,
                persistence: phi,
                gibbs_steps: k,
                ..TrainConfig::default()
            };
            if let Ok(ok) = validate_config(&cfg, 4, 3) {
                prop_assert_eq!(validate_config(&ok, 4, 3).unwrap(), ok.clone());
                prop_assert!(ok.learning_rate * ok.max_decay() < 2.0);
                prop_assert!(ok.smoothing > 0.0 && ok.smoothing < 1.0);
                prop_assert!(ok.persistence > 0.0 && ok.persistence <= 1.0);
                prop_assert!(ok.gibbs_steps >= 1);
            }
        }
    }
}
