//! Between-group comparisons of per-seed summary statistics.
//!
//! Groups are treated as unpaired samples.

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn check_groups(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("each group needs at least two values"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("group values"));
    }
    Ok(())
}

/// `(mean a − mean b) / s_pooled` with the unbiased pooled variance.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    check_groups(a, b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    if pooled <= 0.0 {
        return Err(Error::Degenerate("zero pooled variance".into()));
    }
    Ok((ma - mb) / pooled.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub delta_mean: f64,
    pub delta_sd: f64,
    pub hdi_low: f64,
    pub hdi_high: f64,
    pub p_positive: f64,
    pub p_rope: f64,
    pub rope_halfwidth: f64,
    /// `exp(Δmean)`; a fold change when the inputs are logarithms.
    pub fold_change: f64,
    pub draws: usize,
    pub paired: bool,
}

fn dirichlet_mean<R: rand::Rng>(xs: &[f64], rng: &mut R) -> f64 {
    let w: Vec<f64> = xs.iter().map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / total
}

/// Narrowest interval holding `mass` of the sorted draws.
pub fn hdi(sorted: &[f64], mass: f64) -> Result<(f64, f64)> {
    if sorted.is_empty() || !(0.0 < mass && mass <= 1.0) {
        return Err(Error::invalid("hdi needs draws and a mass in (0, 1]"));
    }
    let k = ((mass * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let best = (0..=sorted.len() - k)
        .min_by(|&i, &j| (sorted[i + k - 1] - sorted[i]).total_cmp(&(sorted[j + k - 1] - sorted[j])))
        .unwrap();
    Ok((sorted[best], sorted[best + k - 1]))
}

/// Posterior of `mean(a) − mean(b)` under independent Dirichlet(1) weights.
/// Draw `d` uses stream `(seed, Bootstrap, d)`.
pub fn bayesian_bootstrap(
    a: &[f64],
    b: &[f64],
    draws: usize,
    rope_halfwidth: f64,
    seed: u64,
) -> Result<BootstrapSummary> {
    check_groups(a, b)?;
    if draws < 1000 {
        return Err(Error::invalid("bayesian bootstrap needs at least 1000 draws"));
    }
    if !(rope_halfwidth >= 0.0) {
        return Err(Error::invalid("ROPE half-width must be non-negative"));
    }
    let mut deltas: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = stream(seed, Purpose::Bootstrap, d as u64, 0);
            dirichlet_mean(a, &mut rng) - dirichlet_mean(b, &mut rng)
        })
        .collect();
    let n = draws as f64;
    let (delta_mean, var) = mean_var(&deltas);
    let p_positive = deltas.iter().filter(|&&d| d > 0.0).count() as f64 / n;
    let p_rope = deltas.iter().filter(|&&d| d.abs() < rope_halfwidth).count() as f64 / n;
    deltas.sort_by(f64::total_cmp);
    let (hdi_low, hdi_high) = hdi(&deltas, 0.95)?;
    Ok(BootstrapSummary {
        delta_mean,
        delta_sd: var.sqrt(),
        hdi_low,
        hdi_high,
        p_positive,
        p_rope,
        rope_halfwidth,
        fold_change: delta_mean.exp(),
        draws,
        paired: false,
    })
}
