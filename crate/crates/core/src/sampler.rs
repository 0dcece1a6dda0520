//! Temperature-scaled energies, conditionals and block Gibbs sampling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ChainState, ChainTrace, RbmParams};
use crate::scalar::{sigmoid, softplus, Scalar};

/// Which layer a conditional refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Hidden,
    Visible,
}

/// Pre-activations acting on each layer for a given joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveField<S> {
    /// `x_j = v·W_{·j} + b_{h_j}`
    pub hidden_fields: Vec<S>,
    /// `h·W_{i·} + b_{v_i}`
    pub visible_fields: Vec<S>,
}

impl<S: Scalar> EffectiveField<S> {
    pub fn of(params: &RbmParams<S>, state: &ChainState) -> Result<Self> {
        check_state(params, state)?;
        Ok(Self {
            hidden_fields: params.hidden_fields(&state.visible),
            visible_fields: params.visible_fields(&state.hidden),
        })
    }

    /// Smallest field magnitude over both layers.
    pub fn min_abs(&self) -> S {
        self.hidden_fields
            .iter()
            .chain(&self.visible_fields)
            .fold(S::infinity(), |m, x| m.min(x.abs()))
    }
}

pub(crate) fn check_temperature<S: Scalar>(t: S) -> Result<()> {
    if t > S::zero() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Temperature(t.as_f64()))
    }
}

fn check_state<S: Scalar>(params: &RbmParams<S>, state: &ChainState) -> Result<()> {
    params.check_visible(state.visible.len())?;
    params.check_hidden(state.hidden.len())
}

/// `E(v,h) = −v·b_v − h·b_h − vᵀWh`.
pub fn energy<S: Scalar>(params: &RbmParams<S>, state: &ChainState) -> Result<S> {
    check_state(params, state)?;
    Ok(energy_unchecked(params, &state.visible, &state.hidden))
}

pub(crate) fn energy_unchecked<S: Scalar>(params: &RbmParams<S>, v: &[u8], h: &[u8]) -> S {
    let mut e = S::zero();
    for (&hj, &b) in h.iter().zip(params.hidden_bias()) {
        if hj != 0 {
            e -= b;
        }
    }
    for (i, &vi) in v.iter().enumerate() {
        if vi == 0 {
            continue;
        }
        e -= params.visible_bias()[i];
        for (&hj, &w) in h.iter().zip(params.weight_row(i)) {
            if hj != 0 {
                e -= w;
            }
        }
    }
    e
}

/// `F_T(v) = −v·b_v − T Σ_j log(1 + e^{x_j(v)/T})`.
///
/// Note that `exp(−F_T(v)/T)` is the hidden-marginalized Boltzmann weight
/// only at `T = 1`; the visible-bias term is not divided by `T`. Use
/// [`log_marginal_unnormalized`] for likelihoods.
pub fn free_energy<S: Scalar>(params: &RbmParams<S>, t: S, visible: &[u8]) -> Result<S> {
    check_temperature(t)?;
    params.check_visible(visible.len())?;
    Ok(free_energy_unchecked(params, t, visible))
}

pub(crate) fn free_energy_unchecked<S: Scalar>(params: &RbmParams<S>, t: S, visible: &[u8]) -> S {
    let bias: S = visible
        .iter()
        .zip(params.visible_bias())
        .filter(|(&v, _)| v != 0)
        .map(|(_, &b)| b)
        .sum();
    let fields = params.hidden_fields(visible);
    let sp: S = fields.iter().map(|&x| softplus(x / t)).sum();
    -bias - t * sp
}

/// `log Σ_h e^{−E(v,h)/T}`.
pub fn log_marginal_unnormalized<S: Scalar>(params: &RbmParams<S>, t: S, visible: &[u8]) -> Result<S> {
    check_temperature(t)?;
    params.check_visible(visible.len())?;
    let bias: S = visible
        .iter()
        .zip(params.visible_bias())
        .filter(|(&v, _)| v != 0)
        .map(|(_, &b)| b)
        .sum();
    let fields = params.hidden_fields(visible);
    Ok(bias / t + fields.iter().map(|&x| softplus(x / t)).sum::<S>())
}

/// Activation probabilities of `layer` given the opposite layer of `state`.
pub fn conditional_probs<S: Scalar>(
    params: &RbmParams<S>,
    t: S,
    state: &ChainState,
    layer: Layer,
) -> Result<Vec<S>> {
    check_temperature(t)?;
    check_state(params, state)?;
    let fields = match layer {
        Layer::Hidden => params.hidden_fields(&state.visible),
        Layer::Visible => params.visible_fields(&state.hidden),
    };
    Ok(fields.into_iter().map(|x| sigmoid(x / t)).collect())
}

#[inline]
pub(crate) fn bernoulli<S: Scalar, R: Rng + ?Sized>(p: S, rng: &mut R) -> u8 {
    (rng.random::<f64>() < p.as_f64()) as u8
}

pub(crate) fn sample_layer<S: Scalar, R: Rng + ?Sized>(fields: &[S], t: S, rng: &mut R, out: &mut [u8]) {
    for (o, &x) in out.iter_mut().zip(fields) {
        *o = bernoulli(sigmoid(x / t), rng);
    }
}

/// One alternating block update: `h' ~ p(h|v)`, then `v' ~ p(v|h')`.
pub fn gibbs_step<S: Scalar, R: Rng + ?Sized>(
    params: &RbmParams<S>,
    t: S,
    state: &ChainState,
    rng: &mut R,
) -> Result<ChainState> {
    check_temperature(t)?;
    check_state(params, state)?;
    let mut next = state.clone();
    gibbs_step_in_place(params, t, &mut next, rng);
    Ok(next)
}

pub(crate) fn gibbs_step_in_place<S: Scalar, R: Rng + ?Sized>(
    params: &RbmParams<S>,
    t: S,
    state: &mut ChainState,
    rng: &mut R,
) {
    let hf = params.hidden_fields(&state.visible);
    sample_layer(&hf, t, rng, &mut state.hidden);
    let vf = params.visible_fields(&state.hidden);
    sample_layer(&vf, t, rng, &mut state.visible);
}

/// Runs `k` block updates from `init`, recording every state and its energy.
pub fn run_chain<S: Scalar, R: Rng + ?Sized>(
    params: &RbmParams<S>,
    t: S,
    init: &ChainState,
    k: usize,
    rng: &mut R,
) -> Result<ChainTrace<S>> {
    check_temperature(t)?;
    check_state(params, init)?;
    if k == 0 {
        return Err(Error::invalid("a chain needs K >= 1 steps"));
    }
    let mut states = Vec::with_capacity(k + 1);
    let mut energies = Vec::with_capacity(k + 1);
    let mut cur = init.clone();
    energies.push(energy_unchecked(params, &cur.visible, &cur.hidden));
    states.push(cur.clone());
    for _ in 0..k {
        gibbs_step_in_place(params, t, &mut cur, rng);
        energies.push(energy_unchecked(params, &cur.visible, &cur.hidden));
        states.push(cur.clone());
    }
    Ok(ChainTrace { states, energies })
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Two-layer flip rate `(1/2K) Σ_k (‖Δv‖₀/n_v + ‖Δh‖₀/n_h)`.
pub fn flip_rate_epoch<S>(trace: &ChainTrace<S>) -> Result<f64> {
    if trace.states.len() < 2 {
        return Err(Error::invalid("flip rate needs a trace with at least two states"));
    }
    let k = trace.steps();
    let n_v = trace.states[0].visible.len().max(1) as f64;
    let n_h = trace.states[0].hidden.len().max(1) as f64;
    let total: f64 = trace
        .states
        .windows(2)
        .map(|w| {
            hamming(&w[0].visible, &w[1].visible) as f64 / n_v
                + hamming(&w[0].hidden, &w[1].hidden) as f64 / n_h
        })
        .sum();
    Ok(total / (2.0 * k as f64))
}

/// Persistent-chain flip rate `‖v_neg − v_prev‖₀ / n_v`.
pub fn flip_rate_pcd(v_prev: &[u8], v_neg: &[u8]) -> Result<f64> {
    if v_prev.len() != v_neg.len() {
        return Err(Error::dim("visible vectors", v_prev.len(), v_neg.len()));
    }
    if v_prev.is_empty() {
        return Err(Error::invalid("flip rate of an empty vector"));
    }
    Ok(hamming(v_prev, v_neg) as f64 / v_prev.len() as f64)
}

/// Mean absolute energy variation along a chain.
///
/// `valid` is false when the trace has fewer than two transitions; the
/// value is then reported as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyVariation<S> {
    pub value: S,
    pub valid: bool,
}

/// `(1/(K−1)) Σ_{k=2..K} |E^(k) − E^(k−1)|` with `E^(k) = trace.energies[k]`.
pub fn mean_abs_energy_variation<S: Scalar>(trace: &ChainTrace<S>) -> EnergyVariation<S> {
    let k = trace.steps();
    if k < 2 {
        return EnergyVariation {
            value: S::zero(),
            valid: false,
        };
    }
    let sum: S = trace.energies[1..]
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .sum();
    EnergyVariation {
        value: sum / S::of_usize(k - 1),
        valid: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn one_by_one() -> RbmParams<f64> {
        RbmParams::from_parts(1, 1, vec![2.0], vec![0.5], vec![-0.3]).unwrap()
    }

    fn small() -> RbmParams<f64> {
        RbmParams::from_parts(
            3,
            2,
            vec![0.7, -1.2, 0.4, 0.9, -0.3, 0.2],
            vec![0.1, -0.4, 0.25],
            vec![-0.2, 0.6],
        )
        .unwrap()
    }

    #[test]
    fn energy_examples() {
        let p = small();
        assert_eq!(energy(&p, &ChainState::zeros(3, 2)).unwrap(), 0.0);
        let s = ChainState::new(vec![1], vec![1]).unwrap();
        assert!((energy(&one_by_one(), &s).unwrap() - (-2.2)).abs() < 1e-12);
        let s = ChainState::new(vec![1, 0, 1], vec![1, 1]).unwrap();
        let e = energy(&p, &s).unwrap();
        assert!((energy(&p.scaled(-1.0), &s).unwrap() + e).abs() < 1e-12);
        assert!(energy(&p, &ChainState::zeros(2, 2)).is_err());
    }

    #[test]
    fn free_energy_examples() {
        let z = RbmParams::<f64>::zeros(3, 4).unwrap();
        for t in [0.5, 1.0, 3.0] {
            let f = free_energy(&z, t, &[1, 0, 1]).unwrap();
            assert!((f + t * 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
        }
        let p = RbmParams::<f64>::from_parts(1, 1, vec![1.0], vec![0.0], vec![0.0]).unwrap();
        let f = free_energy(&p, 1.0, &[1]).unwrap();
        assert!((f - (-1.313261687518223)).abs() < 1e-9);
        assert!(free_energy(&p, 0.0, &[1]).is_err());
        // Stable softplus: no overflow at |x|/T = 700.
        let big = RbmParams::<f64>::from_parts(1, 1, vec![700.0], vec![0.0], vec![0.0]).unwrap();
        assert!((free_energy(&big, 1.0, &[1]).unwrap() + 700.0).abs() < 1e-9);
    }

    /// Brute-force hidden sums: `exp(−F_1(v)) = Σ_h exp(−E(v,h))`, and at any
    /// `T` the marginal `Σ_h e^{−E/T}` matches [`log_marginal_unnormalized`].
    #[test]
    fn free_energy_matches_hidden_enumeration() {
        let p = RbmParams::<f64>::from_parts(
            3,
            2,
            vec![0.3, -0.8, 1.1, 0.05, -0.6, 0.9],
            vec![0.2, -0.1, 0.4],
            vec![0.3, -0.7],
        )
        .unwrap();
        for vi in 0..8usize {
            let v: Vec<u8> = (0..3).map(|k| ((vi >> k) & 1) as u8).collect();
            for t in [0.5, 1.0, 2.0] {
                let mut s = 0.0;
                for hi in 0..4usize {
                    let h: Vec<u8> = (0..2).map(|k| ((hi >> k) & 1) as u8).collect();
                    s += (-energy_unchecked(&p, &v, &h) / t).exp();
                }
                let lm = log_marginal_unnormalized(&p, t, &v).unwrap();
                assert!((lm - s.ln()).abs() < 1e-12 * s.ln().abs().max(1.0));
                if t == 1.0 {
                    let f = free_energy(&p, 1.0, &v).unwrap();
                    assert!(((-f).exp() - s).abs() / s < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conditional_examples() {
        let z = RbmParams::<f64>::zeros(3, 2).unwrap();
        let s = ChainState::zeros(3, 2);
        assert_eq!(conditional_probs(&z, 1.0, &s, Layer::Hidden).unwrap(), vec![0.5, 0.5]);
        assert_eq!(conditional_probs(&z, 1.0, &s, Layer::Visible).unwrap(), vec![0.5; 3]);

        for t in [0.5, 1.0, 4.0] {
            let p = RbmParams::from_parts(1, 1, vec![0.0], vec![0.0], vec![t * 3f64.ln()]).unwrap();
            let probs = conditional_probs(&p, t, &ChainState::zeros(1, 1), Layer::Hidden).unwrap();
            assert!((probs[0] - 0.75).abs() < 1e-12);
        }

        // Fixed field, growing T: monotone approach to 1/2.
        let p = RbmParams::<f64>::from_parts(1, 1, vec![0.0], vec![0.0], vec![2.0]).unwrap();
        let mut last = 1.0;
        for t in [0.5, 1.0, 2.0, 8.0, 64.0, 1e4] {
            let q = conditional_probs(&p, t, &ChainState::zeros(1, 1), Layer::Hidden).unwrap()[0];
            assert!(q < last && q > 0.5);
            last = q;
        }
        assert!((last - 0.5).abs() < 1e-3);
        assert!(conditional_probs(&p, -1.0, &ChainState::zeros(1, 1), Layer::Hidden).is_err());
    }

    /// `σ(z)(1−σ(z)) = e^{−|z|}/(1+e^{−|z|})²`: bounded by `e^{−|z|}` and by
    /// `1/4`, the two bounds meeting only at `z = 0`.
    #[test]
    fn logistic_variance_bound() {
        let mut worst_ratio = 0.0f64;
        let n = 1_400_001;
        for k in 0..n {
            let z = -700.0 + 1400.0 * k as f64 / (n - 1) as f64;
            let var = sigmoid(z) * sigmoid(-z);
            assert!(var <= (-z.abs()).exp() * (1.0 + 1e-12), "z={z}");
            assert!(var <= 0.25);
            if z.abs() < 30.0 {
                worst_ratio = worst_ratio.max(var / (-z.abs()).exp());
            }
        }
        // The constant e^{−|z|} cannot be tightened to 0.25·e^{−|z|}.
        assert!(worst_ratio > 0.99);
        let z: f64 = 10.0;
        assert!(sigmoid(z) * sigmoid(-z) > 0.25 * (-z).exp());
    }

    #[test]
    fn gibbs_step_zero_model_is_uniform() {
        let z = RbmParams::<f64>::zeros(2, 2).unwrap();
        let init = ChainState::new(vec![1, 1], vec![1, 1]).unwrap();
        let mut rng = stream(11, Purpose::Misc, 0, 0);
        let n = 40_000;
        let mut counts = [0usize; 16];
        for _ in 0..n {
            counts[gibbs_step(&z, 1.0, &init, &mut rng).unwrap().index()] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 15 dof, p = 0.001 critical value 37.7.
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }

    #[test]
    fn strong_field_pins_units() {
        // Fields of ±50 at T = 1: an aligned unit stays put except with
        // probability σ(−50) ≈ 2e−22.
        let p = RbmParams::from_parts(2, 2, vec![0.0; 4], vec![50.0, -50.0], vec![-50.0, 50.0]).unwrap();
        let pinned = ChainState::new(vec![1, 0], vec![0, 1]).unwrap();
        let flip = 1.0 - sigmoid(50.0_f64);
        assert!(flip <= (-50.0_f64).exp());
        let mut rng = stream(3, Purpose::Misc, 0, 0);
        for _ in 0..1000 {
            assert_eq!(gibbs_step(&p, 1.0, &pinned, &mut rng).unwrap(), pinned);
        }
    }

    #[test]
    fn gibbs_step_is_deterministic_given_stream() {
        let p = small();
        let s = ChainState::new(vec![1, 0, 1], vec![0, 1]).unwrap();
        let a = run_chain(&p, 0.8, &s, 20, &mut stream(5, Purpose::Misc, 1, 2)).unwrap();
        let b = run_chain(&p, 0.8, &s, 20, &mut stream(5, Purpose::Misc, 1, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn run_chain_records_consistent_trace() {
        let p = small();
        let s = ChainState::zeros(3, 2);
        let mut rng = stream(9, Purpose::Misc, 0, 0);
        let tr = run_chain(&p, 1.0, &s, 1, &mut rng).unwrap();
        assert_eq!(tr.states.len(), 2);
        let tr = run_chain(&p, 1.3, &s, 50, &mut rng).unwrap();
        assert_eq!(tr.states.len(), 51);
        for (st, &e) in tr.states.iter().zip(&tr.energies) {
            assert_eq!(energy(&p, st).unwrap(), e);
        }
        assert!(run_chain(&p, 1.0, &s, 0, &mut rng).is_err());
    }

    #[test]
    fn run_chain_zero_model_visible_marginal() {
        let z = RbmParams::<f64>::zeros(6, 3).unwrap();
        let n = 10_000;
        let mut ones = [0usize; 6];
        for c in 0..n {
            let mut rng = stream(21, Purpose::Misc, c as u64, 0);
            let tr = run_chain(&z, 1.0, &ChainState::zeros(6, 3), 1, &mut rng).unwrap();
            for (o, &v) in ones.iter_mut().zip(&tr.states[1].visible) {
                *o += v as usize;
            }
        }
        // Per-pixel chi-square with 1 dof each, summed: 6 dof, p=0.001 → 22.46.
        let chi2: f64 = ones
            .iter()
            .map(|&k| {
                let e = n as f64 / 2.0;
                2.0 * (k as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 22.46, "chi2 = {chi2}");
    }

    fn trace_of(states: Vec<ChainState>, energies: Vec<f64>) -> ChainTrace<f64> {
        ChainTrace { states, energies }
    }

    #[test]
    fn flip_rate_examples() {
        let a = ChainState::new(vec![0, 0, 1, 1], vec![1, 0]).unwrap();
        let same = trace_of(vec![a.clone(), a.clone(), a.clone()], vec![0.0; 3]);
        assert_eq!(flip_rate_epoch(&same).unwrap(), 0.0);

        let b = ChainState::new(vec![1, 1, 0, 0], vec![0, 1]).unwrap();
        let all = trace_of(vec![a.clone(), b.clone(), a.clone()], vec![0.0; 3]);
        assert_eq!(flip_rate_epoch(&all).unwrap(), 1.0);

        let half = ChainState::new(vec![1, 1, 1, 1], vec![0, 0]).unwrap();
        let h = trace_of(vec![a.clone(), half], vec![0.0; 2]);
        assert_eq!(flip_rate_epoch(&h).unwrap(), 0.5);

        assert!(flip_rate_epoch(&trace_of(vec![a], vec![0.0])).is_err());
    }

    #[test]
    fn pcd_flip_rate_examples() {
        assert_eq!(flip_rate_pcd(&[0, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(flip_rate_pcd(&[0, 1, 1], &[1, 0, 0]).unwrap(), 1.0);
        let prev = vec![0u8; 784];
        let mut neg = prev.clone();
        neg.iter_mut().take(98).for_each(|x| *x = 1);
        assert_eq!(flip_rate_pcd(&prev, &neg).unwrap(), 0.125);
        assert!(flip_rate_pcd(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn energy_variation_examples() {
        let s = ChainState::zeros(1, 1);
        let c = trace_of(vec![s.clone(); 4], vec![1.5; 4]);
        let ev = mean_abs_energy_variation(&c);
        assert_eq!((ev.value, ev.valid), (0.0, true));

        // K = 2, energies (0, 2, −1): only the k = 2 term |−1 − 2| counts.
        let k2 = trace_of(vec![s.clone(); 3], vec![0.0, 2.0, -1.0]);
        assert_eq!(mean_abs_energy_variation(&k2).value, 3.0);
        let k3 = trace_of(vec![s.clone(); 4], vec![5.0, 0.0, 2.0, -1.0]);
        assert_eq!(mean_abs_energy_variation(&k3).value, (2.0 + 3.0) / 2.0);

        let k1 = trace_of(vec![s.clone(); 2], vec![0.0, 4.0]);
        let ev = mean_abs_energy_variation(&k1);
        assert_eq!((ev.value, ev.valid), (0.0, false));
    }

    #[test]
    fn energy_variation_scales_with_parameters() {
        let p = small();
        let mut rng = stream(2, Purpose::Misc, 0, 0);
        let tr = run_chain(&p, 1.0, &ChainState::zeros(3, 2), 30, &mut rng).unwrap();
        let base = mean_abs_energy_variation(&tr).value;
        for lam in [-2.0, 0.5, 3.0] {
            let q = p.scaled(lam);
            let energies = tr.states.iter().map(|s| energy(&q, s).unwrap()).collect();
            let scaled = trace_of(tr.states.clone(), energies);
            let v = mean_abs_energy_variation(&scaled).value;
            assert!((v - lam.abs() * base).abs() < 1e-12);
        }
    }

    #[test]
    fn effective_field_min_abs() {
        let p = one_by_one();
        let f = EffectiveField::of(&p, &ChainState::new(vec![1], vec![0]).unwrap()).unwrap();
        assert!((f.hidden_fields[0] - 1.7).abs() < 1e-12);
        assert!((f.min_abs() - 0.5).abs() < 1e-12);
    }
}
