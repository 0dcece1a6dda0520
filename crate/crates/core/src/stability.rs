//! Linearization of the temperature controller around an operating point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainState, RbmParams};
use crate::rng::{stream, Purpose};
use crate::sampler::{bernoulli, gibbs_step_in_place};
use crate::scalar::Scalar;

/// Half-width of the band around `ρ = 1` reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;

pub type Matrix2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerLinearization {
    pub phi: f64,
    pub eta_lambda: f64,
    pub alpha: f64,
    pub sensitivity: f64,
    pub jacobian: Matrix2,
}

impl ControllerLinearization {
    pub fn new(phi: f64, eta_lambda: f64, alpha: f64, sensitivity: f64) -> Self {
        Self {
            phi,
            eta_lambda,
            alpha,
            sensitivity,
            jacobian: jacobian(phi, eta_lambda, alpha, sensitivity),
        }
    }

    pub fn trace(&self) -> f64 {
        trace(&self.jacobian)
    }

    pub fn det(&self) -> f64 {
        det(&self.jacobian)
    }
}

/// Jacobian of `(λ, c) ↦ (φλ − η_λ(r(λ) − c), (1−α)c + α r(λ))` with `s = r'(λ)`.
pub fn jacobian(phi: f64, eta_lambda: f64, alpha: f64, s: f64) -> Matrix2 {
    [[phi - eta_lambda * s, eta_lambda], [alpha * s, 1.0 - alpha]]
}

pub fn trace(j: &Matrix2) -> f64 {
    j[0][0] + j[1][1]
}

pub fn det(j: &Matrix2) -> f64 {
    j[0][0] * j[1][1] - j[0][1] * j[1][0]
}

/// Eigenvalues as `(re, im)` pairs from the characteristic quadratic.
pub fn eigenvalues(j: &Matrix2) -> [(f64, f64); 2] {
    let (tr, d) = (trace(j), det(j));
    let half = tr / 2.0;
    // Discriminant in a form that stays accurate for nearly triangular J.
    let disc = ((j[0][0] - j[1][1]) / 2.0).powi(2) + j[0][1] * j[1][0];
    if disc >= 0.0 {
        let r = disc.sqrt();
        let big = if half >= 0.0 { half + r } else { half - r };
        let small = if big == 0.0 { 0.0 } else { d / big };
        [(big, 0.0), (small, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [(half, im), (half, -im)]
    }
}

pub fn spectral_radius(j: &Matrix2) -> f64 {
    eigenvalues(j)
        .iter()
        .map(|&(re, im)| re.hypot(im))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JuryResult {
    /// All three Jury inequalities hold strictly.
    pub stable: bool,
    pub spectral_radius: f64,
    pub verdict: Verdict,
}

/// Schur stability through the Jury conditions, cross-checked against the
/// eigenvalues.
pub fn jury_stable(j: &Matrix2) -> Result<JuryResult> {
    if j.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("jacobian"));
    }
    let (tr, d) = (trace(j), det(j));
    let stable = d.abs() < 1.0 && 1.0 + tr + d > 0.0 && 1.0 - tr + d > 0.0;
    let rho = spectral_radius(j);
    let verdict = if (rho - 1.0).abs() < MARGINAL_BAND {
        Verdict::Marginal
    } else if rho < 1.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    if verdict != Verdict::Marginal && stable != (verdict == Verdict::Stable) {
        return Err(Error::Degenerate(format!(
            "Jury conditions ({stable}) disagree with spectral radius {rho}"
        )));
    }
    Ok(JuryResult {
        stable,
        spectral_radius: rho,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub s_hat: f64,
    pub standard_error: f64,
    pub chains: usize,
}

/// Mean visible flip rate per block update of one chain at temperature `t`,
/// driven by a private copy of `rng`.
fn chain_flip_rate<S: Scalar>(
    params: &RbmParams<S>,
    t: S,
    mut rng: crate::rng::StreamRng,
    steps: usize,
) -> f64 {
    let mut state = ChainState::zeros(params.n_visible(), params.n_hidden());
    for v in state.visible.iter_mut() {
        *v = bernoulli(S::of(0.5), &mut rng);
    }
    let mut flips = 0usize;
    for _ in 0..steps {
        let prev = state.visible.clone();
        gibbs_step_in_place(params, t, &mut state, &mut rng);
        flips += prev.iter().zip(&state.visible).filter(|(a, b)| a != b).count();
    }
    flips as f64 / (steps * params.n_visible()) as f64
}

/// Central difference of the mean flip rate in `λ = log T` at `λ* ± δ`.
///
/// Both evaluations of chain `c` consume the same stream `(seed, c)`, so the
/// per-chain differences share their randomness.
pub fn estimate_flip_sensitivity<S: Scalar>(
    params: &RbmParams<S>,
    lambda_star: f64,
    delta: f64,
    chains: usize,
    steps: usize,
    seed: u64,
) -> Result<Sensitivity> {
    if chains < 2 || steps == 0 {
        return Err(Error::invalid("sensitivity needs at least two chains and one step"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta must be positive"));
    }
    let (hi, lo) = ((lambda_star + delta).exp(), (lambda_star - delta).exp());
    if !hi.is_finite() || lo <= 0.0 {
        return Err(Error::Temperature(if hi.is_finite() { lo } else { hi }));
    }
    let diffs: Vec<f64> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let rng = stream(seed, Purpose::Sensitivity, c as u64, 0);
            let up = chain_flip_rate(params, S::of(hi), rng.clone(), steps);
            let down = chain_flip_rate(params, S::of(lo), rng, steps);
            (up - down) / (2.0 * delta)
        })
        .collect();
    let n = chains as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Sensitivity {
        s_hat: mean,
        standard_error: (var / n).sqrt(),
        chains,
    })
}

/// One step of the deterministic controller map with `r` replaced by `r_fn(λ)`.
pub fn mean_field_map(
    r_fn: impl Fn(f64) -> f64,
    phi: f64,
    eta_lambda: f64,
    alpha: f64,
    (lambda, c): (f64, f64),
) -> Result<(f64, f64)> {
    let r = r_fn(lambda);
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::invalid(format!("mean-field flip rate {r} outside [0, 1] at λ = {lambda}")));
    }
    Ok((phi * lambda - eta_lambda * (r - c), (1.0 - alpha) * c + alpha * r))
}

/// Trajectory `z_0, …, z_steps` of the mean-field map.
pub fn simulate_mean_field(
    r_fn: impl Fn(f64) -> f64,
    phi: f64,
    eta_lambda: f64,
    alpha: f64,
    init: (f64, f64),
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(init);
    let mut z = init;
    for _ in 0..steps {
        z = mean_field_map(&r_fn, phi, eta_lambda, alpha, z)?;
        out.push(z);
    }
    Ok(out)
}

/// Least-squares fit of `log x_t ≈ log M + t log ρ̃`; returns `(ρ̃, M)`.
pub fn fit_geometric_decay(norms: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0 && x.is_finite())
        .map(|(t, &x)| (t as f64, x.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Degenerate("fewer than two positive norms".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    Ok((slope.exp(), (my - slope * mt).exp()))
}

/// Advisory small-gain check `φ + η_λ L < 1` with `L = |ŝ| + 3·SE`.
pub fn small_gain(phi: f64, eta_lambda: f64, s: &Sensitivity) -> (f64, bool) {
    let lhs = phi + eta_lambda * (s.s_hat.abs() + 3.0 * s.standard_error);
    (lhs, lhs < 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub phi: f64,
    pub eta_lambda: f64,
    pub alpha: f64,
    pub lambda_star: f64,
    pub s_hat: f64,
    pub se: f64,
    pub tr: f64,
    pub det: f64,
    pub rho: f64,
    pub verdict: Verdict,
    pub small_gain_lhs: f64,
    pub small_gain_holds: bool,
}

impl StabilityReport {
    pub fn new(phi: f64, eta_lambda: f64, alpha: f64, lambda_star: f64, s: &Sensitivity) -> Result<Self> {
        let lin = ControllerLinearization::new(phi, eta_lambda, alpha, s.s_hat);
        let jury = jury_stable(&lin.jacobian)?;
        let (small_gain_lhs, small_gain_holds) = small_gain(phi, eta_lambda, s);
        Ok(Self {
            phi,
            eta_lambda,
            alpha,
            lambda_star,
            s_hat: s.s_hat,
            se: s.standard_error,
            tr: lin.trace(),
            det: lin.det(),
            rho: jury.spectral_radius,
            verdict: jury.verdict,
            small_gain_lhs,
            small_gain_holds,
        })
    }
}
