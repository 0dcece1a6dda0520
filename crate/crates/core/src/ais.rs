//! Annealed importance sampling and likelihood estimates.
//!
//! The annealing path scales the coupling term only:
//! `p_β(v, h) ∝ exp((v·b_v + h·b_h + β vᵀWh)/T)`, `β` linear in `[0, 1]`.
//! At `β = 0` both layers are independent Bernoullis, so the base
//! normalizer is `Σ softplus(b_v/T) + Σ softplus(b_h/T)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinaryMatrix, RbmParams};
use crate::rng::{stream, Purpose};
use crate::sampler::{check_temperature, log_marginal_unnormalized};
use crate::scalar::{log_sigmoid, sigmoid, softplus, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisResult {
    pub log_z_estimate: f64,
    pub base_log_z: f64,
    /// One per chain, in chain order.
    pub log_weights: Vec<f64>,
    pub ess: f64,
    /// Sample variance of the log weights.
    pub log_weight_variance: f64,
    pub n_chains: usize,
    pub n_temps: usize,
}

/// `(ESS, sample variance)` of a set of log importance weights.
pub fn weight_diagnostics(log_weights: &[f64]) -> Result<(f64, f64)> {
    if log_weights.len() < 2 {
        return Err(Error::invalid("weight diagnostics need at least two weights"));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::NonFinite("log weights"));
    }
    let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(Error::Degenerate("every AIS weight is zero".into()));
    }
    let (s1, s2) = log_weights.iter().fold((0.0, 0.0), |(a, b), &lw| {
        let w = (lw - m).exp();
        (a + w, b + w * w)
    });
    let ess = (s1 * s1 / s2).clamp(1.0, log_weights.len() as f64);
    let finite: Vec<f64> = log_weights.iter().copied().filter(|w| w.is_finite()).collect();
    let var = if finite.len() < 2 {
        0.0
    } else {
        let n = finite.len() as f64;
        let mean = finite.iter().sum::<f64>() / n;
        finite.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    Ok((ess, var))
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `v·b_v/T + Σ_j softplus((b_h + β c)_j/T)` with `c = Wᵀv`.
fn log_unnorm(bv_term: f64, hb: &[f64], coupling: &[f64], beta: f64, t: f64) -> f64 {
    bv_term
        + hb
            .iter()
            .zip(coupling)
            .map(|(&b, &c)| softplus((b + beta * c) / t))
            .sum::<f64>()
}

struct Path {
    couplings: RbmParams<f64>,
    vb: Vec<f64>,
    hb: Vec<f64>,
    t: f64,
}

impl Path {
    fn visible_terms(&self, v: &[u8]) -> (f64, Vec<f64>) {
        let bv: f64 = v.iter().zip(&self.vb).filter(|(&x, _)| x != 0).map(|(_, b)| b).sum();
        (bv / self.t, self.couplings.hidden_fields(v))
    }

    fn chain<R: Rng>(&self, betas: &[f64], rng: &mut R) -> f64 {
        let t = self.t;
        let mut v: Vec<u8> = self.vb.iter().map(|&b| (rng.random::<f64>() < sigmoid(b / t)) as u8).collect();
        let mut h = vec![0u8; self.hb.len()];
        let mut log_w = 0.0;
        let (mut bv, mut c) = self.visible_terms(&v);
        for k in 1..betas.len() {
            log_w += log_unnorm(bv, &self.hb, &c, betas[k], t) - log_unnorm(bv, &self.hb, &c, betas[k - 1], t);
            if k + 1 == betas.len() {
                break;
            }
            let beta = betas[k];
            for ((hj, &b), &cj) in h.iter_mut().zip(&self.hb).zip(&c) {
                *hj = (rng.random::<f64>() < sigmoid((b + beta * cj) / t)) as u8;
            }
            let wh = self.couplings.visible_fields(&h);
            for ((vi, &b), &x) in v.iter_mut().zip(&self.vb).zip(&wh) {
                *vi = (rng.random::<f64>() < sigmoid((b + beta * x) / t)) as u8;
            }
            (bv, c) = self.visible_terms(&v);
        }
        log_w
    }
}

/// AIS estimate of `log Z(T)` with `n_temps` distributions on a linear
/// schedule and one block sweep per intermediate distribution. Chain `c`
/// draws from stream `(seed, Ais, c)`.
pub fn ais_log_z<S: Scalar>(
    params: &RbmParams<S>,
    t: S,
    n_chains: usize,
    n_temps: usize,
    seed: u64,
) -> Result<AisResult> {
    check_temperature(t)?;
    if n_chains < 2 || n_temps < 2 {
        return Err(Error::invalid("AIS needs at least two chains and two temperatures"));
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters"));
    }
    let p = params.cast::<f64>();
    let t = t.as_f64();
    let path = Path {
        couplings: RbmParams::from_parts(
            p.n_visible(),
            p.n_hidden(),
            p.weights().to_vec(),
            vec![0.0; p.n_visible()],
            vec![0.0; p.n_hidden()],
        )?,
        vb: p.visible_bias().to_vec(),
        hb: p.hidden_bias().to_vec(),
        t,
    };
    let betas: Vec<f64> = (0..n_temps).map(|k| k as f64 / (n_temps - 1) as f64).collect();
    let base_log_z = path.vb.iter().chain(&path.hb).map(|&b| softplus(b / t)).sum::<f64>();
    let log_weights: Vec<f64> = (0..n_chains)
        .into_par_iter()
        .map(|c| path.chain(&betas, &mut stream(seed, Purpose::Ais, c as u64, 0)))
        .collect();
    let (ess, log_weight_variance) = weight_diagnostics(&log_weights)?;
    let log_z_estimate = base_log_z + logsumexp(&log_weights) - (n_chains as f64).ln();
    if !log_z_estimate.is_finite() {
        return Err(Error::NonFinite("AIS estimate"));
    }
    Ok(AisResult {
        log_z_estimate,
        base_log_z,
        log_weights,
        ess,
        log_weight_variance,
        n_chains,
        n_temps,
    })
}

/// Mean of `log p_T(v) = log Σ_h e^{−E(v,h)/T} − log Z(T)` over `data`.
pub fn test_log_likelihood<S: Scalar>(params: &RbmParams<S>, t: S, log_z: f64, data: &BinaryMatrix) -> Result<f64> {
    check_temperature(t)?;
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    if data.cols() != params.n_visible() {
        return Err(Error::dim("data columns", params.n_visible(), data.cols()));
    }
    if !log_z.is_finite() {
        return Err(Error::NonFinite("log Z"));
    }
    let per: Vec<f64> = data
        .iter_rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|v| log_marginal_unnormalized(params, t, v).map(|x| x.as_f64()))
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64 - log_z)
}

/// `log p(v_i | v_{−i})` from the two unnormalized marginals.
fn conditional_log_prob<S: Scalar>(params: &RbmParams<S>, t: S, v: &[u8], i: usize) -> Result<f64> {
    let mut flipped = v.to_vec();
    flipped[i] ^= 1;
    let a = log_marginal_unnormalized(params, t, v)?.as_f64();
    let b = log_marginal_unnormalized(params, t, &flipped)?.as_f64();
    Ok(log_sigmoid(a - b))
}

fn check_data<S: Scalar>(params: &RbmParams<S>, t: S, data: &BinaryMatrix) -> Result<()> {
    check_temperature(t)?;
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    if data.cols() != params.n_visible() {
        return Err(Error::dim("data columns", params.n_visible(), data.cols()));
    }
    Ok(())
}

/// Stochastic pseudo-likelihood: per example, `n_v · log p(v_i | v_{−i})`
/// for one uniformly drawn `i` (stream `(seed, Evaluation, row, 1)`).
pub fn pseudo_likelihood<S: Scalar>(params: &RbmParams<S>, t: S, data: &BinaryMatrix, seed: u64) -> Result<f64> {
    check_data(params, t, data)?;
    let n_v = params.n_visible();
    let terms: Vec<f64> = (0..data.rows())
        .into_par_iter()
        .map(|r| {
            let i = stream(seed, Purpose::Evaluation, r as u64, 1).random_range(0..n_v);
            conditional_log_prob(params, t, data.row(r), i).map(|x| n_v as f64 * x)
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// `Σ_i log p(v_i | v_{−i})` averaged over `data`.
pub fn pseudo_likelihood_exact<S: Scalar>(params: &RbmParams<S>, t: S, data: &BinaryMatrix) -> Result<f64> {
    check_data(params, t, data)?;
    let mut total = 0.0;
    for v in data.iter_rows() {
        for i in 0..params.n_visible() {
            total += conditional_log_prob(params, t, v, i)?;
        }
    }
    Ok(total / data.rows() as f64)
}
