//! Persistent contrastive divergence under the temperature controller.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{validate_config, FlipStatistic, TrainConfig};
use crate::controller::{energy_gap, free_energy_gap, temperature};
use crate::diagnostics::beta_diagnostics;
use crate::error::{Error, Result};
use crate::metrics::EpochMetrics;
use crate::model::{BinaryMatrix, ChainState, RbmParams, ThermoState};
use crate::rng::{stream, Purpose};
use crate::sampler::{check_temperature, energy_unchecked, gibbs_step_in_place};
use crate::scalar::{sigmoid, Scalar};

/// Gradient (or any parameter-shaped direction); `dw` shares the weight layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<S> {
    pub dw: Vec<S>,
    pub db_v: Vec<S>,
    pub db_h: Vec<S>,
}

impl<S: Scalar> Gradient<S> {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            dw: vec![S::zero(); n_visible * n_hidden],
            db_v: vec![S::zero(); n_visible],
            db_h: vec![S::zero(); n_hidden],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.dw.iter().chain(&self.db_v).chain(&self.db_h).all(|x| x.is_finite())
    }

    pub fn norm(&self) -> S {
        self.dw
            .iter()
            .chain(&self.db_v)
            .chain(&self.db_h)
            .map(|&x| x * x)
            .sum::<S>()
            .sqrt()
    }

    fn scale(&mut self, factor: S) {
        for x in self.dw.iter_mut().chain(&mut self.db_v).chain(&mut self.db_h) {
            *x *= factor;
        }
    }

    fn sub_assign(&mut self, other: &Self) {
        let pairs = self
            .dw
            .iter_mut()
            .chain(&mut self.db_v)
            .chain(&mut self.db_h)
            .zip(other.dw.iter().chain(&other.db_v).chain(&other.db_h));
        for (a, &b) in pairs {
            *a -= b;
        }
    }

    fn check_shape(&self, params: &RbmParams<S>) -> Result<()> {
        if self.dw.len() != params.weights().len() {
            return Err(Error::dim("gradient dW", params.weights().len(), self.dw.len()));
        }
        params.check_visible(self.db_v.len())?;
        params.check_hidden(self.db_h.len())
    }
}

/// Negative-phase chains carried across minibatches.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistentChains {
    pub visible: BinaryMatrix,
    pub hidden: BinaryMatrix,
}

impl PersistentChains {
    /// Visible units `Bernoulli(0.5)`, hidden units zero (they are resampled
    /// from the visible layer before first use).
    pub fn init(n_chains: usize, n_visible: usize, n_hidden: usize, seed: u64) -> Self {
        let mut visible = BinaryMatrix::zeros(n_chains, n_visible);
        for c in 0..n_chains {
            let mut rng = stream(seed, Purpose::ChainInit, c as u64, 0);
            for x in visible.row_mut(c) {
                *x = rng.random_bool(0.5) as u8;
            }
        }
        Self {
            visible,
            hidden: BinaryMatrix::zeros(n_chains, n_hidden),
        }
    }

    pub fn len(&self) -> usize {
        self.visible.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }
}

fn hidden_probs<S: Scalar>(params: &RbmParams<S>, t: S, v: &[u8]) -> Vec<S> {
    params.hidden_fields(v).into_iter().map(|x| sigmoid(x / t)).collect()
}

/// Sums of `v pᵀ`, `v`, `p` over rows, with `p` the hidden probabilities.
fn positive_sums<S: Scalar>(params: &RbmParams<S>, batch: &BinaryMatrix, probs: &[Vec<S>]) -> Gradient<S> {
    let n_h = params.n_hidden();
    let mut g = Gradient::zeros(params.n_visible(), n_h);
    for (v, p) in batch.iter_rows().zip(probs) {
        for (i, _) in v.iter().enumerate().filter(|(_, &x)| x != 0) {
            g.db_v[i] += S::one();
            for (w, &pj) in g.dw[i * n_h..(i + 1) * n_h].iter_mut().zip(p) {
                *w += pj;
            }
        }
        for (b, &pj) in g.db_h.iter_mut().zip(p) {
            *b += pj;
        }
    }
    g
}

fn negative_sums<S: Scalar>(n_visible: usize, visible: &BinaryMatrix, hidden: &BinaryMatrix) -> Gradient<S> {
    let n_h = hidden.cols();
    let mut g = Gradient::zeros(n_visible, n_h);
    for (v, h) in visible.iter_rows().zip(hidden.iter_rows()) {
        let active: Vec<usize> = (0..n_h).filter(|&j| h[j] != 0).collect();
        for &j in &active {
            g.db_h[j] += S::one();
        }
        for (i, _) in v.iter().enumerate().filter(|(_, &x)| x != 0) {
            g.db_v[i] += S::one();
            for &j in &active {
                g.dw[i * n_h + j] += S::one();
            }
        }
    }
    g
}

fn check_batch<S: Scalar>(params: &RbmParams<S>, batch: &BinaryMatrix, what: &str) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid(format!("{what} batch is empty")));
    }
    params.check_visible(batch.cols())
}

/// Batch mean of `(v pᵀ, v, p)`: the data term of the gradient, equal to
/// `−∇_θ F_T(v)` averaged over the batch.
pub fn positive_phase<S: Scalar>(params: &RbmParams<S>, t: S, data: &BinaryMatrix) -> Result<Gradient<S>> {
    check_temperature(t)?;
    check_batch(params, data, "data")?;
    let probs: Vec<Vec<S>> = data.iter_rows().map(|v| hidden_probs(params, t, v)).collect();
    let mut g = positive_sums(params, data, &probs);
    g.scale(S::one() / S::of_usize(data.rows()));
    Ok(g)
}

/// Two-phase difference `(1/B)(v_dataᵀ p_data − v_negᵀ h_neg)` and the
/// analogous bias terms. Decay is not included; see [`apply_update`].
pub fn cd_gradient<S: Scalar>(
    params: &RbmParams<S>,
    t: S,
    data: &BinaryMatrix,
    neg_visible: &BinaryMatrix,
    neg_hidden: &BinaryMatrix,
) -> Result<Gradient<S>> {
    check_temperature(t)?;
    check_batch(params, data, "data")?;
    check_batch(params, neg_visible, "negative")?;
    params.check_hidden(neg_hidden.cols())?;
    if neg_visible.rows() != data.rows() || neg_hidden.rows() != data.rows() {
        return Err(Error::dim("negative batch rows", data.rows(), neg_visible.rows().min(neg_hidden.rows())));
    }
    let probs: Vec<Vec<S>> = data.iter_rows().map(|v| hidden_probs(params, t, v)).collect();
    Ok(two_phase(params, data, &probs, neg_visible, neg_hidden))
}

fn two_phase<S: Scalar>(
    params: &RbmParams<S>,
    data: &BinaryMatrix,
    probs: &[Vec<S>],
    neg_visible: &BinaryMatrix,
    neg_hidden: &BinaryMatrix,
) -> Gradient<S> {
    let mut g = positive_sums(params, data, probs);
    g.sub_assign(&negative_sums(params.n_visible(), neg_visible, neg_hidden));
    g.scale(S::one() / S::of_usize(data.rows()));
    g
}

/// `θ' = (1 − ηψ)θ + η·G`, with `ψ_W` on weights and `ψ_b` on both biases.
pub fn apply_update<S: Scalar>(
    params: &RbmParams<S>,
    grad: &Gradient<S>,
    eta: S,
    psi_w: S,
    psi_b: S,
) -> Result<RbmParams<S>> {
    grad.check_shape(params)?;
    if !(eta > S::zero()) || psi_w < S::zero() || psi_b < S::zero() {
        return Err(Error::invalid(format!("need η > 0 and ψ >= 0 (η={eta}, ψ_W={psi_w}, ψ_b={psi_b})")));
    }
    let product = eta * psi_w.max(psi_b);
    if !(product < S::of(2.0)) {
        return Err(Error::invalid(format!("η·ψ_max = {product} must be < 2")));
    }
    let mut next = params.clone();
    let shrink_w = S::one() - eta * psi_w;
    let shrink_b = S::one() - eta * psi_b;
    for (w, &d) in next.weights_mut().iter_mut().zip(&grad.dw) {
        *w = shrink_w * *w + eta * d;
    }
    for (b, &d) in next.visible_bias_mut().iter_mut().zip(&grad.db_v) {
        *b = shrink_b * *b + eta * d;
    }
    for (b, &d) in next.hidden_bias_mut().iter_mut().zip(&grad.db_h) {
        *b = shrink_b * *b + eta * d;
    }
    if !next.is_finite() {
        return Err(Error::NonFinite("parameters after update"));
    }
    Ok(next)
}

/// Mean-field pass `v → p(h|v) → p(v|h)`; returns the visible probabilities
/// and their mean squared error against `v`.
pub fn reconstruct<S: Scalar>(params: &RbmParams<S>, t: S, v: &[u8]) -> Result<(Vec<S>, S)> {
    check_temperature(t)?;
    params.check_visible(v.len())?;
    let p_h = hidden_probs(params, t, v);
    Ok(reconstruct_from_hidden(params, t, v, &p_h))
}

fn reconstruct_from_hidden<S: Scalar>(params: &RbmParams<S>, t: S, v: &[u8], p_h: &[S]) -> (Vec<S>, S) {
    let recon: Vec<S> = params
        .visible_fields_dense(p_h)
        .into_iter()
        .map(|x| sigmoid(x / t))
        .collect();
    let mse = recon
        .iter()
        .zip(v)
        .map(|(&r, &x)| {
            let d = r - S::of(x as f64);
            d * d
        })
        .sum::<S>()
        / S::of_usize(v.len());
    (recon, mse)
}

struct ChainUpdate<S> {
    state: ChainState,
    flip: f64,
    energy_variation: Option<S>,
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn advance_chain<S: Scalar, R: Rng>(
    params: &RbmParams<S>,
    t: S,
    mut state: ChainState,
    k: usize,
    statistic: FlipStatistic,
    rng: &mut R,
) -> ChainUpdate<S> {
    let v_start = state.visible.clone();
    let (n_v, n_h) = (state.visible.len() as f64, state.hidden.len() as f64);
    let mut two_layer = 0.0;
    let mut last_energy = None;
    let mut variation = S::zero();
    for _ in 0..k {
        match statistic {
            FlipStatistic::TwoLayer => {
                let before = state.clone();
                gibbs_step_in_place(params, t, &mut state, rng);
                two_layer += hamming(&before.visible, &state.visible) as f64 / n_v
                    + hamming(&before.hidden, &state.hidden) as f64 / n_h;
            }
            FlipStatistic::Persistent => gibbs_step_in_place(params, t, &mut state, rng),
        }
        if k >= 2 {
            let e = energy_unchecked(params, &state.visible, &state.hidden);
            if let Some(prev) = last_energy {
                variation += (e - prev).abs();
            }
            last_energy = Some(e);
        }
    }
    let flip = match statistic {
        FlipStatistic::Persistent => hamming(&v_start, &state.visible) as f64 / n_v,
        FlipStatistic::TwoLayer => two_layer / (2.0 * k as f64),
    };
    ChainUpdate {
        state,
        flip,
        energy_variation: (k >= 2).then(|| variation / S::of_usize(k - 1)),
    }
}

/// Result of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub metrics: EpochMetrics,
    /// The `λ` guard activated at this epoch's controller update.
    pub clamped: bool,
}

/// Owns the mutable training state: parameters, controller, chains.
#[derive(Debug, Clone)]
pub struct Trainer<S: Scalar> {
    config: TrainConfig,
    params: RbmParams<S>,
    thermo: ThermoState<S>,
    chains: PersistentChains,
    clamp_events: u64,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(config: &TrainConfig, n_visible: usize, n_hidden: usize) -> Result<Self> {
        let config = validate_config(config, n_visible, n_hidden)?;
        let mut rng = stream(config.seed, Purpose::Init, 0, 0);
        let params = RbmParams::random_normal(n_visible, n_hidden, config.init_std, &mut rng)?;
        let chains = PersistentChains::init(config.batch_size, n_visible, n_hidden, config.seed);
        Ok(Self {
            config,
            params,
            thermo: ThermoState::default(),
            chains,
            clamp_events: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &RbmParams<S> {
        &self.params
    }

    pub fn thermo(&self) -> &ThermoState<S> {
        &self.thermo
    }

    pub fn chains(&self) -> &PersistentChains {
        &self.chains
    }

    /// Epochs in which the `λ` guard activated.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    /// Temperature the next epoch will sample at.
    pub fn temperature(&self) -> Result<S> {
        temperature(&self.thermo, S::of(self.config.macro_scale), self.config.temperature_mode)
    }

    pub fn into_parts(self) -> (RbmParams<S>, ThermoState<S>, PersistentChains) {
        (self.params, self.thermo, self.chains)
    }

    pub fn run_epoch(&mut self, data: &BinaryMatrix) -> Result<EpochOutcome> {
        check_batch(&self.params, data, "training")?;
        let cfg = self.config.clone();
        let epoch = self.thermo.epoch + 1;
        let t = self.temperature()?;

        let mut order: Vec<usize> = (0..data.rows()).collect();
        order.shuffle(&mut stream(cfg.seed, Purpose::Shuffle, epoch, 0));

        let (mut flip_sum, mut gap_sum, mut r_sum, mut mse_sum) = (0.0, 0.0, 0.0, 0.0);
        let (mut de_sum, mut de_count) = (0.0, 0usize);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for (b, idx) in batches.iter().enumerate() {
            let batch = data.select_rows(idx);
            let size = idx.len();
            let params = &self.params;

            let probs: Vec<Vec<S>> = (0..size)
                .into_par_iter()
                .map(|r| hidden_probs(params, t, batch.row(r)))
                .collect();
            let batch_mse: f64 = batch
                .iter_rows()
                .zip(&probs)
                .map(|(v, p)| reconstruct_from_hidden(params, t, v, p).1.as_f64())
                .sum::<f64>()
                / size as f64;

            // A short final batch advances only the first `size` chains.
            let chains = &self.chains;
            let updates: Vec<ChainUpdate<S>> = (0..size)
                .into_par_iter()
                .map(|c| {
                    let mut rng = stream(cfg.seed, Purpose::Sampling, epoch, (b * cfg.batch_size + c) as u64);
                    let state = ChainState {
                        visible: chains.visible.row(c).to_vec(),
                        hidden: chains.hidden.row(c).to_vec(),
                    };
                    advance_chain(params, t, state, cfg.gibbs_steps, cfg.flip_statistic, &mut rng)
                })
                .collect();
            for (c, u) in updates.iter().enumerate() {
                self.chains.visible.row_mut(c).copy_from_slice(&u.state.visible);
                self.chains.hidden.row_mut(c).copy_from_slice(&u.state.hidden);
                if let Some(d) = u.energy_variation {
                    de_sum += d.as_f64();
                    de_count += 1;
                }
            }
            let neg_v = self.chains.visible.head(size);
            let neg_h = self.chains.hidden.head(size);

            let grad = two_phase(params, &batch, &probs, &neg_v, &neg_h);
            let r_gap = energy_gap(params, &batch, &probs, &neg_v, &neg_h)?;
            self.params = apply_update(
                params,
                &grad,
                S::of(cfg.learning_rate),
                S::of(cfg.weight_decay),
                S::of(cfg.bias_decay),
            )?;
            let gap = free_energy_gap(&self.params, t, &batch, &neg_v)?;

            flip_sum += updates.iter().map(|u| u.flip).sum::<f64>() / size as f64;
            gap_sum += gap.as_f64();
            r_sum += r_gap.as_f64();
            mse_sum += batch_mse;
        }

        let n_batches = batches.len() as f64;
        let flip_rate = flip_sum / n_batches;
        let gap = gap_sum / n_batches;
        let before = self.thermo;
        let step = before.advance(S::of(flip_rate), S::of(gap), &cfg)?;
        self.thermo = step.state;
        if step.clamped {
            self.clamp_events += 1;
        }
        let beta = beta_diagnostics(&self.params, t)?;
        Ok(EpochOutcome {
            metrics: EpochMetrics {
                epoch,
                flip_rate,
                temperature: t.as_f64(),
                lambda: before.lambda.as_f64(),
                reference: before.reference.as_f64(),
                gap,
                cesaro_gap: before.cesaro_gap.as_f64(),
                energy_gap: r_sum / n_batches,
                recon_mse: mse_sum / n_batches,
                theta_norm: self.params.theta_norm().as_f64(),
                beta_norm: beta.beta_norm,
                beta_eff: beta.beta_eff,
                beta_spectral: beta.beta_spectral,
                mean_abs_de: (de_count > 0).then(|| de_sum / de_count as f64),
            },
            clamped: step.clamped,
        })
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult<S> {
    pub params: RbmParams<S>,
    pub thermo: ThermoState<S>,
    pub metrics: Vec<EpochMetrics>,
    pub clamp_events: u64,
}

pub fn train<S: Scalar>(config: &TrainConfig, dataset: &BinaryMatrix, n_hidden: usize) -> Result<TrainResult<S>> {
    train_with(config, dataset, n_hidden, |_, _| Ok(()))
}

/// [`train`] with a callback after every epoch (for streaming metrics and
/// periodic checkpoints).
pub fn train_with<S, F>(
    config: &TrainConfig,
    dataset: &BinaryMatrix,
    n_hidden: usize,
    mut observer: F,
) -> Result<TrainResult<S>>
where
    S: Scalar,
    F: FnMut(&Trainer<S>, &EpochOutcome) -> Result<()>,
{
    let mut trainer = Trainer::new(config, dataset.cols(), n_hidden)?;
    let mut metrics = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let outcome = trainer.run_epoch(dataset)?;
        observer(&trainer, &outcome)?;
        metrics.push(outcome.metrics);
    }
    let clamp_events = trainer.clamp_events();
    let (params, thermo, _) = trainer.into_parts();
    Ok(TrainResult {
        params,
        thermo,
        metrics,
        clamp_events,
    })
}

/// Draws `n` samples by running independent chains for `steps` block
/// updates from `Bernoulli(0.5)` visible states.
pub fn sample_model<S: Scalar>(
    params: &RbmParams<S>,
    t: S,
    n: usize,
    steps: usize,
    seed: u64,
) -> Result<BinaryMatrix> {
    check_temperature(t)?;
    let (n_v, n_h) = (params.n_visible(), params.n_hidden());
    let rows: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, Purpose::Evaluation, c as u64, 0);
            let mut state = ChainState::zeros(n_v, n_h);
            for x in &mut state.visible {
                *x = rng.random_bool(0.5) as u8;
            }
            for _ in 0..steps {
                gibbs_step_in_place(params, t, &mut state, &mut rng);
            }
            state.visible
        })
        .collect();
    let mut out = BinaryMatrix::zeros(n, n_v);
    for (c, r) in rows.iter().enumerate() {
        out.row_mut(c).copy_from_slice(r);
    }
    Ok(out)
}
