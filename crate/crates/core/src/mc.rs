//! Monte Carlo plumbing: seeded substreams, block plans, and moment
//! accumulators whose reductions are order-fixed and therefore bit-stable.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, Result};

pub type Rng = ChaCha8Rng;

/// Stream domains keep estimators that share a seed from sharing draws.
pub mod domain {
    pub const SAMPLES: u64 = 0x5341_4d50;
    pub const SENSITIVITY: u64 = 0x5345_4e53;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for substream `index` of `(seed, domain)`.
pub fn substream(seed: u64, domain: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn uniform_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Sample budget split into fixed-size blocks, each with its own substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McPlan {
    pub samples: usize,
    pub block_size: usize,
    pub seed: u64,
}

impl McPlan {
    pub const DEFAULT_BLOCK: usize = 1 << 14;

    pub fn new(samples: usize, seed: u64) -> Self {
        McPlan {
            samples,
            block_size: Self::DEFAULT_BLOCK,
            seed,
        }
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size.max(1);
        self
    }

    pub fn require_at_least(&self, min: usize) -> Result<()> {
        if self.samples < min {
            return Err(Error::InvalidParameter(alloc::format!(
                "at least {min} Monte Carlo samples required, got {}",
                self.samples
            )));
        }
        Ok(())
    }

    pub fn block_count(&self) -> usize {
        self.samples.div_ceil(self.block_size)
    }

    /// Number of samples in block `b`.
    pub fn block_len(&self, b: usize) -> usize {
        let start = b * self.block_size;
        self.block_size.min(self.samples.saturating_sub(start))
    }

    pub fn block_rng(&self, b: usize) -> Rng {
        substream(self.seed, domain::SAMPLES, b as u64)
    }

    /// Runs `kernel` on block `b` alone.
    pub fn run_block<F>(&self, b: usize, width: usize, kernel: F) -> Moments
    where
        F: Fn(&mut Rng, usize, &mut Moments),
    {
        let mut acc = Moments::new(width);
        kernel(&mut self.block_rng(b), self.block_len(b), &mut acc);
        acc
    }

    /// Runs `kernel` over every block in order and merges the results.
    ///
    /// Merging per-block results in block order is what makes parallel
    /// drivers bit-identical to this loop.
    pub fn run<F>(&self, width: usize, kernel: F) -> Moments
    where
        F: Fn(&mut Rng, usize, &mut Moments),
    {
        let mut total = Moments::new(width);
        for b in 0..self.block_count() {
            total.merge(&self.run_block(b, width, &kernel));
        }
        total
    }
}

/// First and second (cross) moments of a vector of per-sample losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    count: u64,
    sum: Vec<f64>,
    cross: Vec<f64>,
}

impl Moments {
    pub fn new(width: usize) -> Self {
        Moments {
            count: 0,
            sum: vec![0.0; width],
            cross: vec![0.0; width * width],
        }
    }

    pub fn width(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    #[inline]
    pub fn push(&mut self, values: &[f64]) {
        let w = self.width();
        debug_assert_eq!(values.len(), w);
        self.count += 1;
        for i in 0..w {
            self.sum[i] += values[i];
            for j in i..w {
                self.cross[i * w + j] += values[i] * values[j];
            }
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        debug_assert_eq!(self.width(), other.width());
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.cross.iter_mut().zip(&other.cross) {
            *a += b;
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.count as f64
    }

    /// Sample covariance of components `i` and `j`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.count as f64;
        if n < 2.0 {
            return 0.0;
        }
        let w = self.width();
        let c = self.cross[i * w + j] - self.sum[i] * self.sum[j] / n;
        c / (n - 1.0)
    }

    pub fn estimate(&self, i: usize) -> MeanEstimate {
        let var = self.covariance(i, i).max(0.0);
        MeanEstimate {
            mean: self.mean(i),
            stderr: libm::sqrt(var / self.count as f64),
            count: self.count,
        }
    }

    /// Estimate of `mean(i) - mean(j)` with its paired standard error.
    pub fn difference(&self, i: usize, j: usize) -> MeanEstimate {
        let var =
            (self.covariance(i, i) + self.covariance(j, j) - 2.0 * self.covariance(i, j)).max(0.0);
        MeanEstimate {
            mean: self.mean(i) - self.mean(j),
            stderr: libm::sqrt(var / self.count as f64),
            count: self.count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let mut a = substream(7, domain::SAMPLES, 3);
        let mut b = substream(7, domain::SAMPLES, 3);
        let mut c = substream(7, domain::SAMPLES, 4);
        let xa: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn uniform_draws_stay_open() {
        let mut r = substream(1, 2, 3);
        for _ in 0..10_000 {
            let u = uniform_open(&mut r);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn block_plan_covers_all_samples() {
        let plan = McPlan::new(100_003, 1).with_block_size(1000);
        assert_eq!(plan.block_count(), 101);
        let total: usize = (0..plan.block_count()).map(|b| plan.block_len(b)).sum();
        assert_eq!(total, 100_003);
    }

    #[test]
    fn paired_difference_of_identical_columns_has_zero_error() {
        let mut m = Moments::new(2);
        for i in 0..100 {
            let v = i as f64 * 0.1;
            m.push(&[v, v]);
        }
        let d = m.difference(0, 1);
        assert_eq!(d.mean, 0.0);
        assert_eq!(d.stderr, 0.0);
        let e = m.estimate(0);
        assert!((e.mean - 4.95).abs() < 1e-12);
    }
}
