//! Brute-force oracles for small RBMs.
//!
//! Joint states are indexed with the visible bits in the low-order
//! positions: `index = Σ_i v_i 2^i + Σ_j h_j 2^{n_v + j}`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ChainState, RbmParams};
use crate::sampler::{check_temperature, energy_unchecked};
use crate::scalar::{log_sigmoid, Scalar};

/// Largest `n_v + n_h` for enumerated sums.
pub const SUM_CAP: usize = 24;
/// Largest `n_v + n_h` for dense kernels.
pub const KERNEL_CAP: usize = 12;
/// Largest `n_v + n_h` for the all-cuts conductance.
pub const CUT_CAP: usize = 4;

fn check_bits<S: Scalar>(params: &RbmParams<S>, cap: usize) -> Result<usize> {
    let bits = params.n_visible() + params.n_hidden();
    if bits > cap {
        return Err(Error::StateSpaceTooLarge { bits, cap });
    }
    Ok(bits)
}

fn bits_of(index: usize, offset: usize, n: usize) -> Vec<u8> {
    (0..n).map(|k| ((index >> (offset + k)) & 1) as u8).collect()
}

/// `−E(x)/T` for every joint state, in index order.
fn log_weights(params: &RbmParams<f64>, t: f64) -> Vec<f64> {
    let (n_v, n_h) = (params.n_visible(), params.n_hidden());
    (0..1usize << (n_v + n_h))
        .into_par_iter()
        .map(|x| {
            let v = bits_of(x, 0, n_v);
            let h = bits_of(x, n_v, n_h);
            -energy_unchecked(params, &v, &h) / t
        })
        .collect()
}

fn logsumexp_f64(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Σ_{v,h} e^{−E(v,h)/T}` over the full joint space.
pub fn enumerate_log_z<S: Scalar>(params: &RbmParams<S>, t: S) -> Result<f64> {
    check_temperature(t)?;
    check_bits(params, SUM_CAP)?;
    Ok(logsumexp_f64(&log_weights(&params.cast(), t.as_f64())))
}

/// Exact probability vector over joint states.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub probs: Vec<f64>,
}

impl JointDistribution {
    pub fn new(n_visible: usize, n_hidden: usize, probs: Vec<f64>) -> Result<Self> {
        let n = 1usize << (n_visible + n_hidden);
        if probs.len() != n {
            return Err(Error::dim("joint distribution", n, probs.len()));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            n_visible,
            n_hidden,
            probs,
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn state(&self, index: usize) -> ChainState {
        ChainState::from_index(index, self.n_visible, self.n_hidden)
    }

    /// Marginal over visible configurations, indexed by `Σ v_i 2^i`.
    pub fn visible_marginal(&self) -> Vec<f64> {
        let mask = (1usize << self.n_visible) - 1;
        let mut out = vec![0.0; 1 << self.n_visible];
        for (x, &p) in self.probs.iter().enumerate() {
            out[x & mask] += p;
        }
        out
    }

    /// `Σ_x p(x) f(x)`.
    pub fn expect(&self, f: impl Fn(&ChainState) -> f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(x, &p)| if p == 0.0 { 0.0 } else { p * f(&self.state(x)) })
            .sum()
    }
}

/// Boltzmann law `e^{−E/T}/Z`.
pub fn stationary_distribution<S: Scalar>(params: &RbmParams<S>, t: S) -> Result<JointDistribution> {
    check_temperature(t)?;
    check_bits(params, SUM_CAP)?;
    let lw = log_weights(&params.cast(), t.as_f64());
    let log_z = logsumexp_f64(&lw);
    let mut probs: Vec<f64> = lw.iter().map(|&l| (l - log_z).exp()).collect();
    // Renormalize away the last ulp of drift.
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    JointDistribution::new(params.n_visible(), params.n_hidden(), probs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Resample all hidden units given the visible layer.
    HiddenHalfStep,
    /// Resample all visible units given the hidden layer.
    VisibleHalfStep,
    /// Hidden half-step followed by visible half-step.
    FullAlternating,
    /// Either half-step with probability 1/2 (reversible, positive semidefinite).
    RandomScan,
}

/// Dense row-stochastic kernel over the joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    pub kind: KernelKind,
    pub n_visible: usize,
    pub n_hidden: usize,
    pub matrix: DMatrix<f64>,
}

impl TransitionKernel {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Largest deviation of a row sum from 1.
    pub fn stochasticity_defect(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        if !self.matrix.is_square() {
            return Err(Error::invalid("kernel is not square"));
        }
        if self.matrix.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::invalid("kernel has negative or NaN entries"));
        }
        let defect = self.stochasticity_defect();
        if defect > 1e-12 {
            return Err(Error::invalid(format!("kernel rows deviate from 1 by {defect:e}")));
        }
        Ok(())
    }
}

/// `log p(h|v)` as a `2^{n_v} × 2^{n_h}` table, and `log p(v|h)` transposed likewise.
fn conditional_tables(params: &RbmParams<f64>, t: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (n_v, n_h) = (params.n_visible(), params.n_hidden());
    let table = |n_from: usize, n_to: usize, fields: &dyn Fn(&[u8]) -> Vec<f64>| -> Vec<Vec<f64>> {
        (0..1usize << n_from)
            .map(|a| {
                let f = fields(&bits_of(a, 0, n_from));
                (0..1usize << n_to)
                    .map(|b| {
                        (0..n_to)
                            .map(|k| {
                                let x = f[k] / t;
                                if (b >> k) & 1 == 1 {
                                    log_sigmoid(x)
                                } else {
                                    log_sigmoid(-x)
                                }
                            })
                            .sum()
                    })
                    .collect()
            })
            .collect()
    };
    let h_given_v = table(n_v, n_h, &|v| params.hidden_fields(v));
    let v_given_h = table(n_h, n_v, &|h| params.visible_fields(h));
    (h_given_v, v_given_h)
}

/// Exact Gibbs kernel of the requested kind.
pub fn block_gibbs_transition_matrix<S: Scalar>(
    params: &RbmParams<S>,
    t: S,
    kind: KernelKind,
) -> Result<TransitionKernel> {
    check_temperature(t)?;
    check_bits(params, KERNEL_CAP)?;
    let p = params.cast::<f64>();
    let (n_v, n_h) = (p.n_visible(), p.n_hidden());
    let n = 1usize << (n_v + n_h);
    let (vmask, hmask) = ((1usize << n_v) - 1, (1usize << n_h) - 1);
    let (hv, vh) = conditional_tables(&p, t.as_f64());
    let entry = |kind: KernelKind, x: usize, y: usize| -> f64 {
        let (v, h) = (x & vmask, (x >> n_v) & hmask);
        let (v2, h2) = (y & vmask, (y >> n_v) & hmask);
        match kind {
            KernelKind::HiddenHalfStep if v2 == v => hv[v][h2].exp(),
            KernelKind::VisibleHalfStep if h2 == h => vh[h][v2].exp(),
            KernelKind::FullAlternating => (hv[v][h2] + vh[h2][v2]).exp(),
            _ => 0.0,
        }
    };
    let matrix = DMatrix::from_fn(n, n, |x, y| match kind {
        KernelKind::RandomScan => {
            0.5 * (entry(KernelKind::HiddenHalfStep, x, y) + entry(KernelKind::VisibleHalfStep, x, y))
        }
        k => entry(k, x, y),
    });
    Ok(TransitionKernel {
        kind,
        n_visible: n_v,
        n_hidden: n_h,
        matrix,
    })
}

fn check_pair(kernel: &TransitionKernel, pi: &JointDistribution) -> Result<()> {
    kernel.validate()?;
    if kernel.size() != pi.len() {
        return Err(Error::dim("kernel vs distribution", pi.len(), kernel.size()));
    }
    if pi.probs.iter().any(|&p| p <= 0.0) {
        return Err(Error::Degenerate("stationary distribution has empty states".into()));
    }
    Ok(())
}

/// `max_x |(πP)_x − π_x|`.
pub fn stationarity_defect(kernel: &TransitionKernel, pi: &JointDistribution) -> f64 {
    let n = kernel.size();
    (0..n)
        .map(|y| {
            let flow: f64 = (0..n).map(|x| pi.probs[x] * kernel.matrix[(x, y)]).sum();
            (flow - pi.probs[y]).abs()
        })
        .fold(0.0, f64::max)
}

/// `max_{x,y} |π_x P_xy − π_y P_yx|`; zero for reversible kernels.
pub fn reversibility_defect(kernel: &TransitionKernel, pi: &JointDistribution) -> f64 {
    let n = kernel.size();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in 0..x {
            let d = pi.probs[x] * kernel.matrix[(x, y)] - pi.probs[y] * kernel.matrix[(y, x)];
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Eigenvalues of the additive reversibilization `(P + P*)/2`, descending.
///
/// With `A = D^{1/2} P D^{−1/2}` (`D = diag π`), the reversibilization is
/// similar to the symmetric matrix `(A + Aᵀ)/2`.
pub fn reversibilized_spectrum(kernel: &TransitionKernel, pi: &JointDistribution) -> Result<Vec<f64>> {
    check_pair(kernel, pi)?;
    let n = kernel.size();
    let sq: Vec<f64> = pi.probs.iter().map(|p| p.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |x, y| sq[x] * kernel.matrix[(x, y)] / sq[y]);
    let sym = (&a + a.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// `1 −` second-largest eigenvalue modulus of the additive reversibilization.
pub fn spectral_gap(kernel: &TransitionKernel, pi: &JointDistribution) -> Result<f64> {
    let eig = reversibilized_spectrum(kernel, pi)?;
    let slem = eig[1..].iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    Ok((1.0 - slem).clamp(0.0, 1.0))
}

/// `Q(S, S^c)/π(S)`, switching to the complement when `π(S) > 1/2`.
pub fn cut_conductance(kernel: &TransitionKernel, pi: &JointDistribution, in_set: &[bool]) -> Result<f64> {
    check_pair(kernel, pi)?;
    if in_set.len() != pi.len() {
        return Err(Error::dim("cut indicator", pi.len(), in_set.len()));
    }
    let mass: f64 = pi.probs.iter().zip(in_set).filter(|(_, &s)| s).map(|(p, _)| p).sum();
    if mass <= 0.0 || mass >= 1.0 {
        return Err(Error::Degenerate(format!("cut has stationary mass {mass}")));
    }
    let side = mass <= 0.5;
    Ok(edge_flow(kernel, pi, in_set, side) / if side { mass } else { 1.0 - mass })
}

/// Stationary flow from the states with `in_set == side` to the rest.
fn edge_flow(kernel: &TransitionKernel, pi: &JointDistribution, in_set: &[bool], side: bool) -> f64 {
    let n = kernel.size();
    (0..n)
        .filter(|&x| in_set[x] == side)
        .map(|x| {
            let out: f64 = (0..n).filter(|&y| in_set[y] != side).map(|y| kernel.matrix[(x, y)]).sum();
            pi.probs[x] * out
        })
        .sum()
}

/// Conductance of the cut `S = {h_j = 1}`.
pub fn coordinate_cut_conductance<S: Scalar>(
    params: &RbmParams<S>,
    t: S,
    j: usize,
    kernel: &TransitionKernel,
    pi: &JointDistribution,
) -> Result<f64> {
    check_temperature(t)?;
    if j >= params.n_hidden() {
        return Err(Error::invalid(format!("hidden index {j} out of range")));
    }
    let n_v = params.n_visible();
    let in_set: Vec<bool> = (0..pi.len()).map(|x| (x >> (n_v + j)) & 1 == 1).collect();
    cut_conductance(kernel, pi, &in_set)
}

/// `inf_{x ∈ S} |x_j(v)| / T` over the cut `S = {h_j = 1}`.
pub fn cut_field_margin<S: Scalar>(params: &RbmParams<S>, t: S, j: usize) -> Result<f64> {
    check_temperature(t)?;
    check_bits(params, SUM_CAP)?;
    let n_v = params.n_visible();
    Ok((0..1usize << n_v)
        .map(|v| params.hidden_fields(&bits_of(v, 0, n_v))[j].abs().as_f64())
        .fold(f64::INFINITY, f64::min)
        / t.as_f64())
}

/// Minimum cut conductance over every non-trivial subset (`n_v + n_h ≤ 4`).
pub fn conductance(kernel: &TransitionKernel, pi: &JointDistribution) -> Result<f64> {
    check_pair(kernel, pi)?;
    let bits = kernel.n_visible + kernel.n_hidden;
    if bits > CUT_CAP {
        return Err(Error::StateSpaceTooLarge { bits, cap: CUT_CAP });
    }
    let n = kernel.size();
    let mut best = f64::INFINITY;
    for mask in 1..(1u64 << n) - 1 {
        let in_set: Vec<bool> = (0..n).map(|x| (mask >> x) & 1 == 1).collect();
        let mass: f64 = pi.probs.iter().zip(&in_set).filter(|(_, &s)| s).map(|(p, _)| p).sum();
        if mass <= 0.5 {
            best = best.min(edge_flow(kernel, pi, &in_set, true) / mass);
        }
    }
    Ok(best)
}

/// Exact `E[vhᵀ]`, `E[v]`, `E[h]` under the Boltzmann law.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// Row-major `n_v × n_h`.
    pub vh: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn exact_moments<S: Scalar>(params: &RbmParams<S>, t: S) -> Result<Moments> {
    let pi = stationary_distribution(params, t)?;
    let (n_v, n_h) = (params.n_visible(), params.n_hidden());
    let mut m = Moments {
        vh: vec![0.0; n_v * n_h],
        v: vec![0.0; n_v],
        h: vec![0.0; n_h],
    };
    for (x, &p) in pi.probs.iter().enumerate() {
        let s = pi.state(x);
        for i in 0..n_v {
            if s.visible[i] == 1 {
                m.v[i] += p;
                for j in 0..n_h {
                    if s.hidden[j] == 1 {
                        m.vh[i * n_h + j] += p;
                    }
                }
            }
        }
        for j in 0..n_h {
            if s.hidden[j] == 1 {
                m.h[j] += p;
            }
        }
    }
    Ok(m)
}

/// `F_T[p] = E_p[E] − T·H(p)` with `0·log 0 = 0`.
pub fn helmholtz_functional<S: Scalar>(p: &JointDistribution, params: &RbmParams<S>, t: S) -> Result<f64> {
    check_temperature(t)?;
    if p.n_visible != params.n_visible() || p.n_hidden != params.n_hidden() {
        return Err(Error::dim("distribution layers", params.n_visible() + params.n_hidden(), p.n_visible + p.n_hidden));
    }
    let total: f64 = p.probs.iter().sum();
    if p.probs.iter().any(|&q| !(q >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("not a probability distribution"));
    }
    let q = params.cast::<f64>();
    let mean_energy = p.expect(|s| energy_unchecked(&q, &s.visible, &s.hidden));
    let entropy: f64 = p.probs.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    Ok(mean_energy - t.as_f64() * entropy)
}
