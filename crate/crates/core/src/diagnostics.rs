//! Mixing statistics, inverse-temperature scale diagnostics and
//! sample-level statistics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryMatrix, RbmParams};
use crate::scalar::{binary_entropy, Scalar};

/// Integrated autocorrelation time and the derived MCMC effective sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    /// `τ = 1/2 + Σ_{k≥1} ρ_k`, never below 1/2.
    pub iat: f64,
    /// `N / (2τ)`.
    pub ess: f64,
    /// The raw estimate fell below 1/2 (anticorrelated series) and was clamped.
    pub clamped: bool,
    /// Last lag included in the sum.
    pub max_lag: usize,
}

/// Initial-positive-sequence estimate: autocorrelations are summed in
/// adjacent pairs `Γ_m = ρ_{2m} + ρ_{2m+1}` until a pair turns non-positive.
pub fn autocorrelation(series: &[f64]) -> Result<Autocorrelation> {
    let n = series.len();
    if n < 10 {
        return Err(Error::invalid(format!("autocorrelation needs >= 10 points, got {n}")));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("autocorrelation series"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if c0 <= (f64::EPSILON * mean.abs().max(1.0)).powi(2) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    let rho = |k: usize| -> f64 {
        if k == 0 {
            return 1.0;
        }
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };

    let mut tau = -0.5;
    let mut max_lag = 0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = rho(2 * m) + rho(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        tau += pair;
        max_lag = 2 * m + 1;
        m += 1;
    }
    let clamped = tau < 0.5;
    let iat = tau.max(0.5);
    Ok(Autocorrelation {
        iat,
        ess: n as f64 / (2.0 * iat),
        clamped,
        max_lag,
    })
}

/// Mean per-pixel binary entropy (nats) of the activation frequencies.
pub fn pixel_entropy(samples: &BinaryMatrix) -> Result<f64> {
    if samples.is_empty() || samples.cols() == 0 {
        return Err(Error::invalid("pixel entropy of an empty sample set"));
    }
    let counts = column_counts(samples);
    let n = samples.rows() as f64;
    Ok(counts.iter().map(|&k| binary_entropy(k as f64 / n)).sum::<f64>() / counts.len() as f64)
}

fn column_counts(samples: &BinaryMatrix) -> Vec<usize> {
    let mut counts = vec![0usize; samples.cols()];
    for row in samples.iter_rows() {
        for (c, &b) in counts.iter_mut().zip(row) {
            *c += b as usize;
        }
    }
    counts
}

fn need_pairs(samples: &BinaryMatrix) -> Result<()> {
    if samples.rows() < 2 {
        return Err(Error::invalid(format!(
            "pairwise statistics need >= 2 samples, got {}",
            samples.rows()
        )));
    }
    if samples.cols() == 0 {
        return Err(Error::invalid("samples have no coordinates"));
    }
    Ok(())
}

/// Mean normalized Hamming distance over unordered pairs.
///
/// Per coordinate with `k` ones among `N` samples, `k(N−k)` pairs disagree,
/// so the mean needs only column counts.
pub fn hamming_diversity(samples: &BinaryMatrix) -> Result<f64> {
    need_pairs(samples)?;
    let n = samples.rows() as f64;
    let disagree: f64 = column_counts(samples)
        .iter()
        .map(|&k| k as f64 * (n - k as f64))
        .sum();
    Ok(disagree / (n * (n - 1.0) / 2.0) / samples.cols() as f64)
}

fn pack(row: &[u8]) -> Vec<u64> {
    row.chunks(64)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, &b)| acc | ((b as u64) << k))
        })
        .collect()
}

/// Mean Euclidean distance over unordered pairs.
pub fn mean_pairwise_l2(samples: &BinaryMatrix) -> Result<f64> {
    need_pairs(samples)?;
    let packed: Vec<Vec<u64>> = samples.iter_rows().map(pack).collect();
    let n = packed.len();
    let per_row: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|a| {
            packed[a + 1..]
                .iter()
                .map(|b| {
                    let d: u32 = packed[a].iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum();
                    (d as f64).sqrt()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(per_row.iter().sum::<f64>() / (n * (n - 1) / 2) as f64)
}

/// Mean Euclidean distance of each sample to the sample mean.
pub fn mean_distance_to_mean(samples: &BinaryMatrix) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("distance to mean of an empty sample set"));
    }
    let n = samples.rows() as f64;
    let mean: Vec<f64> = column_counts(samples).iter().map(|&k| k as f64 / n).collect();
    Ok(samples
        .iter_rows()
        .map(|r| {
            r.iter()
                .zip(&mean)
                .map(|(&b, m)| (b as f64 - m).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / n)
}

/// Parameter scale relative to the temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaDiagnostics {
    /// `‖θ‖₂ / T`
    pub beta_norm: f64,
    /// `‖W‖_F / T`
    pub beta_eff: f64,
    /// `‖W‖₂ / T` (largest singular value)
    pub beta_spectral: f64,
}

/// Largest singular value of the `rows × cols` row-major matrix.
pub fn spectral_norm(rows: usize, cols: usize, data: &[f64]) -> f64 {
    let m = DMatrix::from_row_slice(rows, cols, data);
    // Eigen-decompose the smaller Gram matrix.
    let gram = if rows >= cols { m.transpose() * &m } else { &m * m.transpose() };
    let top = gram
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    top.max(0.0).sqrt()
}

pub fn beta_diagnostics<S: Scalar>(params: &RbmParams<S>, t: S) -> Result<BetaDiagnostics> {
    crate::sampler::check_temperature(t)?;
    let t = t.as_f64();
    let w: Vec<f64> = params.weights().iter().map(|x| x.as_f64()).collect();
    Ok(BetaDiagnostics {
        beta_norm: params.theta_norm().as_f64() / t,
        beta_eff: params.weight_frobenius().as_f64() / t,
        beta_spectral: spectral_norm(params.n_visible(), params.n_hidden(), &w) / t,
    })
}
