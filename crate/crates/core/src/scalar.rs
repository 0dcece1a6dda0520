//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All model math is written against [`Scalar`], which both `f32` and `f64`
//! implement. Training and the on-disk formats use `f64` (see the aliases at
//! the crate root); `f32` is available for memory-bound experimentation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type usable by the model, sampler and oracles.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` for constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic function evaluated without overflowing `exp`.
#[inline]
pub fn sigmoid<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        S::one() / (S::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (S::one() + e)
    }
}

/// `log(1 + e^z)`, stable for large `|z|`.
#[inline]
pub fn softplus<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `log σ(z) = -softplus(-z)`.
#[inline]
pub fn log_sigmoid<S: Scalar>(z: S) -> S {
    -softplus(-z)
}

/// Max-shifted `log Σ exp(x_k)`. Returns `-inf` for an empty or all `-inf` input.
pub fn logsumexp<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Binary entropy in nats with `0 log 0 = 0`.
pub fn binary_entropy<S: Scalar>(p: S) -> S {
    let term = |q: S| if q > S::zero() { -q * q.ln() } else { S::zero() };
    term(p) + term(S::one() - p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_finite_at_extremes() {
        assert_eq!(sigmoid(800.0_f64), 1.0);
        assert_eq!(sigmoid(-800.0_f64), 0.0);
        assert_eq!(sigmoid(0.0_f64), 0.5);
        assert!((sigmoid(3.0_f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &z in &[-30.0, -2.0, -0.1, 0.0, 0.3, 5.0, 30.0] {
            let naive = (1.0_f64 + f64::exp(z)).ln();
            assert!((softplus(z) - naive).abs() < 1e-12, "z={z}");
        }
        assert!((softplus(700.0_f64) - 700.0).abs() < 1e-12);
        assert!(softplus(-700.0_f64) > 0.0);
    }

    #[test]
    fn log_sigmoid_agrees_with_sigmoid() {
        for &z in &[-20.0_f64, -1.0, 0.0, 2.5, 20.0] {
            assert!((log_sigmoid(z) - sigmoid(z).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn logsumexp_shift_invariance() {
        let xs = [1.0_f64, -3.0, 0.5, 7.25];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 1000.0).collect();
        assert!((logsumexp(&shifted) - logsumexp(&xs) - 1000.0).abs() < 1e-9);
        assert_eq!(logsumexp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn entropy_endpoints() {
        assert_eq!(binary_entropy(0.0_f64), 0.0);
        assert_eq!(binary_entropy(1.0_f64), 0.0);
        assert!((binary_entropy(0.5_f64) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn generic_over_f32() {
        let p: f32 = sigmoid(0.0);
        assert_eq!(p, 0.5);
        assert!(softplus(100.0_f32).is_finite());
    }
}
