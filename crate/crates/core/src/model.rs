//! Shared domain types: parameters, binary states, traces and the
//! controller state.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Weights and biases of a binary RBM.
///
/// `W` is stored row-major with the visible index major, so `W[i][j]` lives
/// at `i * n_hidden + j`. The checkpoint format relies on this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams<S> {
    n_visible: usize,
    n_hidden: usize,
    weights: Vec<S>,
    visible_bias: Vec<S>,
    hidden_bias: Vec<S>,
}

impl<S: Scalar> RbmParams<S> {
    /// All-zero parameters.
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Result<Self> {
        Self::from_parts(
            n_visible,
            n_hidden,
            vec![S::zero(); n_visible * n_hidden],
            vec![S::zero(); n_visible],
            vec![S::zero(); n_hidden],
        )
    }

    pub fn from_parts(
        n_visible: usize,
        n_hidden: usize,
        weights: Vec<S>,
        visible_bias: Vec<S>,
        hidden_bias: Vec<S>,
    ) -> Result<Self> {
        if n_visible == 0 || n_hidden == 0 {
            return Err(Error::invalid("an RBM needs at least one visible and one hidden unit"));
        }
        if weights.len() != n_visible * n_hidden {
            return Err(Error::dim("weights", n_visible * n_hidden, weights.len()));
        }
        if visible_bias.len() != n_visible {
            return Err(Error::dim("visible bias", n_visible, visible_bias.len()));
        }
        if hidden_bias.len() != n_hidden {
            return Err(Error::dim("hidden bias", n_hidden, hidden_bias.len()));
        }
        let params = Self {
            n_visible,
            n_hidden,
            weights,
            visible_bias,
            hidden_bias,
        };
        if !params.is_finite() {
            return Err(Error::NonFinite("RBM parameters"));
        }
        Ok(params)
    }

    /// `W ~ Normal(0, std²)`, zero biases.
    pub fn random_normal<R: Rng + ?Sized>(
        n_visible: usize,
        n_hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
        let weights = (0..n_visible * n_hidden)
            .map(|_| S::of(normal.sample(rng)))
            .collect();
        Self::from_parts(
            n_visible,
            n_hidden,
            weights,
            vec![S::zero(); n_visible],
            vec![S::zero(); n_hidden],
        )
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    /// Total number of parameters `d`.
    pub fn dim(&self) -> usize {
        self.weights.len() + self.n_visible + self.n_hidden
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> S {
        self.weights[i * self.n_hidden + j]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [S] {
        &mut self.weights
    }

    pub fn visible_bias(&self) -> &[S] {
        &self.visible_bias
    }

    pub fn visible_bias_mut(&mut self) -> &mut [S] {
        &mut self.visible_bias
    }

    pub fn hidden_bias(&self) -> &[S] {
        &self.hidden_bias
    }

    pub fn hidden_bias_mut(&mut self) -> &mut [S] {
        &mut self.hidden_bias
    }

    /// Row `i` of `W` (couplings of visible unit `i`).
    pub fn weight_row(&self, i: usize) -> &[S] {
        &self.weights[i * self.n_hidden..(i + 1) * self.n_hidden]
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .all(|x| x.is_finite())
    }

    /// Every parameter multiplied by `factor`.
    pub fn scaled(&self, factor: S) -> Self {
        let scale = |xs: &[S]| xs.iter().map(|&x| x * factor).collect::<Vec<_>>();
        Self {
            n_visible: self.n_visible,
            n_hidden: self.n_hidden,
            weights: scale(&self.weights),
            visible_bias: scale(&self.visible_bias),
            hidden_bias: scale(&self.hidden_bias),
        }
    }

    /// Same biases, `W = 0`.
    pub fn without_couplings(&self) -> Self {
        Self {
            weights: vec![S::zero(); self.weights.len()],
            ..self.clone()
        }
    }

    /// `‖θ‖₂` over `(vec W, b_v, b_h)`.
    pub fn theta_norm(&self) -> S {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .map(|&x| x * x)
            .sum::<S>()
            .sqrt()
    }

    /// `‖W‖_F`.
    pub fn weight_frobenius(&self) -> S {
        self.weights.iter().map(|&x| x * x).sum::<S>().sqrt()
    }

    /// Hidden effective fields `x_j(v) = v·W_{·j} + b_{h_j}` for a binary `v`.
    pub fn hidden_fields(&self, visible: &[u8]) -> Vec<S> {
        debug_assert_eq!(visible.len(), self.n_visible);
        let mut fields = self.hidden_bias.clone();
        for (i, _) in visible.iter().enumerate().filter(|(_, &v)| v != 0) {
            for (f, &w) in fields.iter_mut().zip(self.weight_row(i)) {
                *f += w;
            }
        }
        fields
    }

    /// Visible effective fields `h·W_{i·} + b_{v_i}` for a binary `h`.
    pub fn visible_fields(&self, hidden: &[u8]) -> Vec<S> {
        debug_assert_eq!(hidden.len(), self.n_hidden);
        let active: Vec<usize> = (0..self.n_hidden).filter(|&j| hidden[j] != 0).collect();
        (0..self.n_visible)
            .map(|i| {
                let row = self.weight_row(i);
                self.visible_bias[i] + active.iter().map(|&j| row[j]).sum::<S>()
            })
            .collect()
    }

    /// Hidden fields for real-valued (mean-field) visible input.
    pub fn hidden_fields_dense(&self, visible: &[S]) -> Vec<S> {
        let mut fields = self.hidden_bias.clone();
        for (i, &v) in visible.iter().enumerate() {
            if v != S::zero() {
                for (f, &w) in fields.iter_mut().zip(self.weight_row(i)) {
                    *f += v * w;
                }
            }
        }
        fields
    }

    /// Visible fields for real-valued (mean-field) hidden input.
    pub fn visible_fields_dense(&self, hidden: &[S]) -> Vec<S> {
        (0..self.n_visible)
            .map(|i| {
                self.visible_bias[i]
                    + self
                        .weight_row(i)
                        .iter()
                        .zip(hidden)
                        .map(|(&w, &h)| w * h)
                        .sum::<S>()
            })
            .collect()
    }

    pub(crate) fn check_visible(&self, len: usize) -> Result<()> {
        if len != self.n_visible {
            return Err(Error::dim("visible vector", self.n_visible, len));
        }
        Ok(())
    }

    pub(crate) fn check_hidden(&self, len: usize) -> Result<()> {
        if len != self.n_hidden {
            return Err(Error::dim("hidden vector", self.n_hidden, len));
        }
        Ok(())
    }

    /// Converts to another precision.
    pub fn cast<T: Scalar>(&self) -> RbmParams<T> {
        let conv = |xs: &[S]| xs.iter().map(|x| T::of(x.as_f64())).collect::<Vec<_>>();
        RbmParams {
            n_visible: self.n_visible,
            n_hidden: self.n_hidden,
            weights: conv(&self.weights),
            visible_bias: conv(&self.visible_bias),
            hidden_bias: conv(&self.hidden_bias),
        }
    }
}

/// Row-major matrix of `{0,1}` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("binary matrix data", rows * cols, data.len()));
        }
        if data.iter().any(|&b| b > 1) {
            return Err(Error::invalid("binary matrix entries must be 0 or 1"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::dim("row length", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [u8] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &r in indices {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.rows);
        Self {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }
}

/// Joint binary configuration `(v, h)` of one chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChainState {
    pub visible: Vec<u8>,
    pub hidden: Vec<u8>,
}

impl ChainState {
    pub fn new(visible: Vec<u8>, hidden: Vec<u8>) -> Result<Self> {
        if visible.iter().chain(&hidden).any(|&b| b > 1) {
            return Err(Error::invalid("chain state entries must be 0 or 1"));
        }
        Ok(Self { visible, hidden })
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            visible: vec![0; n_visible],
            hidden: vec![0; n_hidden],
        }
    }

    /// Decodes a joint index with visible bits in the low-order positions.
    pub fn from_index(index: usize, n_visible: usize, n_hidden: usize) -> Self {
        let bit = |k: usize| ((index >> k) & 1) as u8;
        Self {
            visible: (0..n_visible).map(bit).collect(),
            hidden: (0..n_hidden).map(|j| bit(n_visible + j)).collect(),
        }
    }

    /// Inverse of [`ChainState::from_index`].
    pub fn index(&self) -> usize {
        self.visible
            .iter()
            .chain(&self.hidden)
            .enumerate()
            .fold(0, |acc, (k, &b)| acc | ((b as usize) << k))
    }
}

/// States and energies recorded along one Gibbs run, initial state first.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace<S> {
    pub states: Vec<ChainState>,
    pub energies: Vec<S>,
}

impl<S> ChainTrace<S> {
    /// Number of transitions `K`.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Controller state `(λ, c, ΔF̄, t)`; `t` counts completed epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoState<S> {
    pub lambda: S,
    pub reference: S,
    pub cesaro_gap: S,
    pub epoch: u64,
}

impl<S: Scalar> Default for ThermoState<S> {
    fn default() -> Self {
        Self {
            lambda: S::zero(),
            reference: S::zero(),
            cesaro_gap: S::zero(),
            epoch: 0,
        }
    }
}

impl<S: Scalar> ThermoState<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.reference >= S::zero() && self.reference <= S::one()) {
            return Err(Error::invalid(format!(
                "reference level {} outside [0, 1]",
                self.reference
            )));
        }
        if !(self.cesaro_gap >= S::zero()) || !self.lambda.is_finite() {
            return Err(Error::invalid("Cesàro gap must be >= 0 and λ finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_dimensions() {
        let err = RbmParams::<f64>::from_parts(2, 2, vec![0.0; 3], vec![0.0; 2], vec![0.0; 2]);
        assert!(matches!(err, Err(Error::Dimension { .. })));
        assert!(RbmParams::<f64>::zeros(0, 3).is_err());
        let nan = RbmParams::from_parts(1, 1, vec![f64::NAN], vec![0.0], vec![0.0]);
        assert!(matches!(nan, Err(Error::NonFinite(_))));
    }

    #[test]
    fn fields_match_dense_evaluation() {
        let p = RbmParams::from_parts(
            3,
            2,
            vec![1.0, -2.0, 0.5, 0.25, -1.0, 3.0],
            vec![0.1, 0.2, 0.3],
            vec![-0.5, 0.5],
        )
        .unwrap();
        let v = [1u8, 0, 1];
        let vf: Vec<f64> = v.iter().map(|&b| b as f64).collect();
        assert_eq!(p.hidden_fields(&v), p.hidden_fields_dense(&vf));
        assert_eq!(p.hidden_fields(&v), vec![-0.5 + 1.0 - 1.0, 0.5 - 2.0 + 3.0]);
        let h = [0u8, 1];
        assert_eq!(p.visible_fields(&h), vec![0.1 - 2.0, 0.2 + 0.25, 0.3 + 3.0]);
        assert_eq!(p.visible_fields(&h), p.visible_fields_dense(&[0.0, 1.0]));
    }

    #[test]
    fn joint_index_round_trip() {
        for idx in 0..64 {
            let s = ChainState::from_index(idx, 4, 2);
            assert_eq!(s.index(), idx);
        }
        let s = ChainState::from_index(0b10_0001, 4, 2);
        assert_eq!(s.visible, vec![1, 0, 0, 0]);
        assert_eq!(s.hidden, vec![0, 1]);
    }

    #[test]
    fn thermo_state_validation() {
        assert!(ThermoState::<f64>::default().validate().is_ok());
        let bad = ThermoState {
            reference: 1.5,
            ..ThermoState::<f64>::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn binary_matrix_rejects_non_binary() {
        assert!(BinaryMatrix::new(1, 2, vec![0, 2]).is_err());
        let m = BinaryMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        assert_eq!(m.select_rows(&[1, 0]).row(0), &[0, 1]);
        assert_eq!(m.iter_rows().count(), 2);
    }
}
