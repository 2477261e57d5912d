//! Shape-preserving piecewise-cubic Hermite interpolation (Fritsch–Carlson).

use alloc::vec::Vec;

use crate::{Error, Result};

/// Monotone piecewise-cubic interpolant through `(xs, ys)`.
///
/// Between knots the curve never overshoots the neighbouring data, so
/// nonnegative data yields a nonnegative interpolant. Outside the knot range
/// the first/last value is held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::InvalidInput(
                "interpolation needs equal-length, nonempty knot arrays".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "interpolation knots must be finite and strictly increasing".into(),
            ));
        }
        let slopes = fritsch_carlson(&xs, &ys);
        Ok(MonotoneCubic { xs, ys, slopes })
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i]
            + h10 * h * self.slopes[i]
            + h01 * self.ys[i + 1]
            + h11 * h * self.slopes[i + 1]
    }
}

fn fritsch_carlson(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n == 1 {
        return alloc::vec![0.0];
    }
    let secants: Vec<f64> = (0..n - 1)
        .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
        .collect();
    let mut m = alloc::vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for i in 1..n - 1 {
        let (a, b) = (secants[i - 1], secants[i]);
        m[i] = if a * b <= 0.0 {
            0.0
        } else {
            // weighted harmonic mean
            let w1 = 2.0 * (xs[i + 1] - xs[i]) + (xs[i] - xs[i - 1]);
            let w2 = (xs[i + 1] - xs[i]) + 2.0 * (xs[i] - xs[i - 1]);
            (w1 + w2) / (w1 / a + w2 / b)
        };
    }
    for i in 0..n - 1 {
        let d = secants[i];
        if d == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
            continue;
        }
        let a = m[i] / d;
        let b = m[i + 1] / d;
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / libm::sqrt(s);
            m[i] = tau * a * d;
            m[i + 1] = tau * b * d;
        }
    }
    m
}
