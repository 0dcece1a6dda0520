//! Binary checkpoint format.
//!
//! ```text
//! "SRTRBM01" | n_v u64 | n_h u64 | W (row-major, visible-major) | b_v | b_h | λ | c | ΔF̄ | t u64
//! ```
//!
//! Every number is little-endian; reals are IEEE-754 binary64.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{RbmParams, ThermoState};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"SRTRBM01";

/// Parameters and controller state as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: RbmParams<f64>,
    pub thermo: ThermoState<f64>,
}

impl Checkpoint {
    pub fn new<S: Scalar>(params: &RbmParams<S>, thermo: &ThermoState<S>) -> Self {
        Self {
            params: params.cast(),
            thermo: ThermoState {
                lambda: thermo.lambda.as_f64(),
                reference: thermo.reference.as_f64(),
                cesaro_gap: thermo.cesaro_gap.as_f64(),
                epoch: thermo.epoch,
            },
        }
    }

    pub fn encoded_len(n_visible: usize, n_hidden: usize) -> usize {
        8 + 16 + 8 * (n_visible * n_hidden + n_visible + n_hidden) + 8 * 4
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(Self::encoded_len(p.n_visible(), p.n_hidden()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(p.n_visible() as u64).to_le_bytes());
        out.extend_from_slice(&(p.n_hidden() as u64).to_le_bytes());
        for x in p.weights().iter().chain(p.visible_bias()).chain(p.hidden_bias()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        let t = &self.thermo;
        for x in [t.lambda, t.reference, t.cesaro_gap] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&t.epoch.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let format = |message: &str| Error::Format {
            path: origin.into(),
            message: message.to_string(),
        };
        if bytes.len() < 24 {
            return Err(Error::Truncated {
                path: origin.into(),
                expected: 24,
                actual: bytes.len() as u64,
            });
        }
        if &bytes[..8] != MAGIC {
            return Err(format("bad magic, expected SRTRBM01"));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
        let (n_v, n_h) = (word(8), word(16));
        let n_params = n_v
            .checked_mul(n_h)
            .and_then(|w| w.checked_add(n_v))
            .and_then(|w| w.checked_add(n_h))
            .ok_or_else(|| format("layer sizes overflow"))?;
        let expected = n_params
            .checked_mul(8)
            .and_then(|b| b.checked_add(24 + 32))
            .ok_or_else(|| format("layer sizes overflow"))?;
        if bytes.len() as u64 != expected {
            return Err(Error::Truncated {
                path: origin.into(),
                expected,
                actual: bytes.len() as u64,
            });
        }
        let (n_v, n_h) = (n_v as usize, n_h as usize);
        let real = |k: usize| f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
        let mut values = (0..n_params as usize).map(|i| real(24 + 8 * i));
        let weights: Vec<f64> = values.by_ref().take(n_v * n_h).collect();
        let visible_bias: Vec<f64> = values.by_ref().take(n_v).collect();
        let hidden_bias: Vec<f64> = values.take(n_h).collect();
        let params = RbmParams::from_parts(n_v, n_h, weights, visible_bias, hidden_bias)?;
        let tail = 24 + 8 * n_params as usize;
        let thermo = ThermoState {
            lambda: real(tail),
            reference: real(tail + 8),
            cesaro_gap: real(tail + 16),
            epoch: word(tail + 24),
        };
        thermo.validate()?;
        Ok(Self { params, thermo })
    }

    /// Writes through a temporary sibling and renames, so a crash never
    /// leaves a half-written checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}
