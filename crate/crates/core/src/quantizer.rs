//! Finite companding quantizers.
//!
//! Cell indices are 0-based: cell `k` is `(p_k, p_{k+1}]` with the implicit
//! extremes `p_0 = -∞` and `p_K = +∞`. Interior codewords are cell midpoints;
//! the extremal codewords sit on the innermost boundary of their overload cell.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::design::PointDensity;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CompandingQuantizer {
    boundaries: Vec<f64>,
    codewords: Vec<f64>,
    density: String,
}

impl CompandingQuantizer {
    pub fn build(density: &PointDensity, k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidParameter(format!(
                "codebook size must be at least 3, got {k}"
            )));
        }
        let boundaries: Vec<f64> = (1..k)
            .map(|i| density.inv_compressor(i as f64 / k as f64))
            .collect();
        Self::from_boundaries(boundaries, density.label())
    }

    /// Quantizer with the given interior boundaries and the same codeword rule.
    pub fn from_boundaries(boundaries: Vec<f64>, label: &str) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidParameter(
                "a quantizer needs at least two boundaries".into(),
            ));
        }
        if boundaries.iter().any(|p| !p.is_finite()) {
            return Err(Error::DesignInfeasible(format!(
                "{label}: non-finite quantizer boundary"
            )));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DesignInfeasible(format!(
                "{label}: boundaries are not strictly increasing"
            )));
        }
        let k = boundaries.len() + 1;
        let mut codewords = Vec::with_capacity(k);
        codewords.push(boundaries[0]);
        for w in boundaries.windows(2) {
            codewords.push(0.5 * (w[0] + w[1]));
        }
        codewords.push(boundaries[k - 2]);
        Ok(CompandingQuantizer {
            boundaries,
            codewords,
            density: label.into(),
        })
    }

    pub fn size(&self) -> usize {
        self.codewords.len()
    }

    /// Fixed rate `log₂ K` in bits.
    pub fn rate(&self) -> f64 {
        libm::log2(self.size() as f64)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn codewords(&self) -> &[f64] {
        &self.codewords
    }

    pub fn density_label(&self) -> &str {
        &self.density
    }

    /// Cell `k` as `(lower, upper)`, including the infinite extremes.
    pub fn cell(&self, k: usize) -> Result<(f64, f64)> {
        let n = self.size();
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, len: n });
        }
        let lo = if k == 0 {
            f64::NEG_INFINITY
        } else {
            self.boundaries[k - 1]
        };
        let hi = if k + 1 == n {
            f64::INFINITY
        } else {
            self.boundaries[k]
        };
        Ok((lo, hi))
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.size()).map(|k| self.cell(k).unwrap())
    }

    pub fn encode(&self, x: f64) -> Result<usize> {
        if x.is_nan() {
            return Err(Error::InvalidInput("cannot encode NaN".into()));
        }
        Ok(self.encode_unchecked(x))
    }

    /// Encoding without the NaN check, for hot loops over sampled data.
    #[inline]
    pub fn encode_unchecked(&self, x: f64) -> usize {
        self.boundaries.partition_point(|&p| p < x)
    }

    pub fn decode(&self, k: usize) -> Result<f64> {
        self.codewords
            .get(k)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index: k,
                len: self.size(),
            })
    }

    #[inline]
    pub fn quantize(&self, x: f64) -> f64 {
        self.codewords[self.encode_unchecked(x)]
    }
}
