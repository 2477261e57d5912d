//! Source distributions: closed-form densities, CDFs, quantile functions,
//! inverse-transform sampling, and differential entropy.
//!
//! Moments are deliberately absent from the API. The Cauchy family has none,
//! and nothing downstream may assume they exist.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{E, LN_2, PI, SQRT_2};
use core::fmt;
use core::str::FromStr;

use rand_core::RngCore;

use crate::mc::uniform_open;
use crate::quadrature::{integrate_split, Tolerance};
use crate::{Error, Result};

/// Information quantity measured in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Bits(pub f64);

impl Bits {
    pub fn from_nats(nats: f64) -> Self {
        Bits(nats / LN_2)
    }

    pub fn nats(self) -> f64 {
        self.0 * LN_2
    }
}

/// Closed interval `[lo, hi]` on the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "empty or invalid interval [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Interval { lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Uniform,
    Gaussian,
    Exponential,
    Cauchy,
}

impl FromStr for SourceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(SourceKind::Uniform),
            "gaussian" | "normal" => Ok(SourceKind::Gaussian),
            "exponential" => Ok(SourceKind::Exponential),
            "cauchy" => Ok(SourceKind::Cauchy),
            other => Err(Error::InvalidParameter(format!(
                "unknown source kind `{other}`"
            ))),
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Uniform => "uniform",
            SourceKind::Gaussian => "gaussian",
            SourceKind::Exponential => "exponential",
            SourceKind::Cauchy => "cauchy",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceModel {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Exponential {
        rate: f64,
    },
    Cauchy {
        loc: f64,
        scale: f64,
    },
    /// Law of `X²` for an inner source `X`, by change of variables.
    Squared(Box<SourceModel>),
}

fn param(params: &[f64], i: usize, default: f64) -> f64 {
    params.get(i).copied().unwrap_or(default)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// Builds a source from its family and parameters.
///
/// Parameters: uniform `[lo, hi]`, gaussian `[mean, sd]`, exponential
/// `[rate]`, cauchy `[loc, scale]`. Missing trailing parameters take the
/// standard values.
pub fn make_source(kind: SourceKind, params: &[f64]) -> Result<SourceModel> {
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidParameter(
            "source parameters must be finite".into(),
        ));
    }
    let src = match kind {
        SourceKind::Uniform => {
            let (lo, hi) = (param(params, 0, 0.0), param(params, 1, 1.0));
            positive("uniform width", hi - lo)?;
            SourceModel::Uniform { lo, hi }
        }
        SourceKind::Gaussian => SourceModel::Gaussian {
            mean: param(params, 0, 0.0),
            sd: positive("gaussian sd", param(params, 1, 1.0))?,
        },
        SourceKind::Exponential => SourceModel::Exponential {
            rate: positive("exponential rate", param(params, 0, 1.0))?,
        },
        SourceKind::Cauchy => SourceModel::Cauchy {
            loc: param(params, 0, 0.0),
            scale: positive("cauchy scale", param(params, 1, 1.0))?,
        },
    };
    src.check_normalized()?;
    Ok(src)
}

// Acklam's rational approximation, refined by one Halley step.
fn std_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -std_normal_quantile(1.0 - p);
    }
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / SQRT_2) - p;
    let u = e * libm::sqrt(2.0 * PI) * libm::exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

impl SourceModel {
    /// The law of `X²` where `X` follows `self`.
    pub fn squared(&self) -> Result<SourceModel> {
        let s = SourceModel::Squared(Box::new(self.clone()));
        s.check_normalized()?;
        Ok(s)
    }

    fn check_normalized(&self) -> Result<()> {
        let mass = integrate_split(
            |x| self.pdf(x),
            self.support().lo,
            self.support().hi,
            &self.breakpoints(),
            &self.tolerance(),
        )?;
        if (mass.value - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "density integrates to {} instead of 1",
                mass.value
            )));
        }
        Ok(())
    }

    pub fn support(&self) -> Interval {
        match self {
            SourceModel::Uniform { lo, hi } => Interval { lo: *lo, hi: *hi },
            SourceModel::Gaussian { .. } | SourceModel::Cauchy { .. } => Interval::REAL_LINE,
            SourceModel::Exponential { .. } => Interval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            SourceModel::Squared(inner) => {
                let s = inner.support();
                let (a, b) = (s.lo * s.lo, s.hi * s.hi);
                if s.contains(0.0) {
                    Interval {
                        lo: 0.0,
                        hi: a.max(b),
                    }
                } else {
                    Interval {
                        lo: a.min(b),
                        hi: a.max(b),
                    }
                }
            }
        }
    }

    /// Characteristic length of the distribution (used to size tail panels).
    pub fn scale(&self) -> f64 {
        match self {
            SourceModel::Uniform { lo, hi } => hi - lo,
            SourceModel::Gaussian { sd, .. } => *sd,
            SourceModel::Exponential { rate } => 1.0 / rate,
            SourceModel::Cauchy { scale, .. } => *scale,
            SourceModel::Squared(inner) => {
                let s = inner.scale();
                s * s
            }
        }
    }

    pub fn median(&self) -> f64 {
        match self {
            SourceModel::Uniform { lo, hi } => 0.5 * (lo + hi),
            SourceModel::Gaussian { mean, .. } => *mean,
            SourceModel::Exponential { rate } => LN_2 / rate,
            SourceModel::Cauchy { loc, .. } => *loc,
            SourceModel::Squared(_) => self.inv_cdf(0.5),
        }
    }

    /// Points where quadrature over this density should split.
    pub fn breakpoints(&self) -> Vec<f64> {
        let s = self.support();
        let mut b = alloc::vec![self.median()];
        b.extend([s.lo, s.hi].into_iter().filter(|x| x.is_finite()));
        b
    }

    /// Quadrature tolerance with tail panels matched to this source.
    pub fn tolerance(&self) -> Tolerance {
        Tolerance::default().with_tail_scale(self.scale())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            SourceModel::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            SourceModel::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                libm::exp(-0.5 * z * z) / (sd * libm::sqrt(2.0 * PI))
            }
            SourceModel::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * libm::exp(-rate * x)
                }
            }
            SourceModel::Cauchy { loc, scale } => {
                let z = (x - loc) / scale;
                1.0 / (PI * scale * (1.0 + z * z))
            }
            SourceModel::Squared(inner) => {
                if x <= 0.0 {
                    return 0.0;
                }
                let r = libm::sqrt(x);
                (inner.pdf(r) + inner.pdf(-r)) / (2.0 * r)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self {
            SourceModel::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            SourceModel::Gaussian { mean, sd } => 0.5 * libm::erfc(-(x - mean) / (sd * SQRT_2)),
            SourceModel::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -libm::expm1(-rate * x)
                }
            }
            SourceModel::Cauchy { loc, scale } => {
                let z = (x - loc) / scale;
                if z < -1.0 {
                    libm::atan(-1.0 / z) / PI
                } else {
                    0.5 + libm::atan(z) / PI
                }
            }
            SourceModel::Squared(inner) => {
                if x <= 0.0 {
                    0.0
                } else {
                    let r = libm::sqrt(x);
                    (inner.cdf(r) - inner.cdf(-r)).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Survival function `1 - cdf(x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self {
            SourceModel::Uniform { .. } => 1.0 - self.cdf(x),
            SourceModel::Gaussian { mean, sd } => 0.5 * libm::erfc((x - mean) / (sd * SQRT_2)),
            SourceModel::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    libm::exp(-rate * x)
                }
            }
            SourceModel::Cauchy { loc, scale } => {
                let z = (x - loc) / scale;
                if z > 1.0 {
                    libm::atan(1.0 / z) / PI
                } else {
                    0.5 - libm::atan(z) / PI
                }
            }
            SourceModel::Squared(inner) => {
                if x <= 0.0 {
                    1.0
                } else {
                    let r = libm::sqrt(x);
                    (inner.sf(r) + inner.cdf(-r)).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Probability of the interval `(a, b]`.
    pub fn prob(&self, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        if a >= self.median() {
            (self.sf(a) - self.sf(b)).max(0.0)
        } else {
            (self.cdf(b) - self.cdf(a)).max(0.0)
        }
    }

    pub fn inv_cdf(&self, u: f64) -> f64 {
        if u.is_nan() {
            return f64::NAN;
        }
        let s = self.support();
        if u <= 0.0 {
            return s.lo;
        }
        if u >= 1.0 {
            return s.hi;
        }
        match self {
            SourceModel::Uniform { lo, hi } => lo + u * (hi - lo),
            SourceModel::Gaussian { mean, sd } => mean + sd * std_normal_quantile(u),
            SourceModel::Exponential { rate } => -libm::log1p(-u) / rate,
            SourceModel::Cauchy { loc, scale } => {
                if u < 0.5 {
                    loc - scale / libm::tan(PI * u)
                } else {
                    loc + scale / libm::tan(PI * (1.0 - u))
                }
            }
            SourceModel::Squared(_) => self.solve_quantile(u),
        }
    }

    fn solve_quantile(&self, u: f64) -> f64 {
        let s = self.support();
        let mut lo = s.lo;
        let mut hi = if s.hi.is_finite() {
            s.hi
        } else {
            let mut h = lo + self.scale().max(1e-300);
            while self.cdf(h) < u {
                h = lo + 2.0 * (h - lo);
            }
            h
        };
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let err = self.cdf(x) - u;
            if err == 0.0 {
                return x;
            }
            if err > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.pdf(x);
            let newton = x - err / d;
            x = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (hi - lo) <= 1e-15 * hi.abs().max(1e-300) || err.abs() < 1e-16 {
                break;
            }
        }
        x
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SourceModel::Squared(inner) => {
                let x = inner.sample(rng);
                x * x
            }
            _ => self.inv_cdf(uniform_open(rng)),
        }
    }

    pub fn sample_n<R: RngCore + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    /// Differential entropy `h(X)` in bits, by adaptive quadrature of `-f log f`.
    pub fn diff_entropy(&self) -> Result<Bits> {
        let s = self.support();
        let integrand = |x: f64| {
            let f = self.pdf(x);
            if f > 0.0 {
                -f * libm::log(f)
            } else {
                0.0
            }
        };
        let est = integrate_split(
            integrand,
            s.lo,
            s.hi,
            &self.breakpoints(),
            &self.tolerance().with_rel(1e-9),
        )?;
        Ok(Bits::from_nats(est.value))
    }

    /// Closed-form differential entropy, where one exists.
    pub fn diff_entropy_closed_form(&self) -> Option<Bits> {
        let nats = match self {
            SourceModel::Uniform { lo, hi } => libm::log(hi - lo),
            SourceModel::Gaussian { sd, .. } => 0.5 * libm::log(2.0 * PI * E * sd * sd),
            SourceModel::Exponential { rate } => 1.0 - libm::log(*rate),
            SourceModel::Cauchy { scale, .. } => libm::log(4.0 * PI * scale),
            SourceModel::Squared(_) => return None,
        };
        Some(Bits::from_nats(nats))
    }
}

/// Independent sources observed jointly; the joint density is the product
/// of the marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSource {
    marginals: Vec<SourceModel>,
}

impl ProductSource {
    pub fn new(marginals: Vec<SourceModel>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidParameter(
                "product source needs at least one marginal".into(),
            ));
        }
        Ok(ProductSource { marginals })
    }

    pub fn iid(marginal: SourceModel, n: usize) -> Result<Self> {
        Self::new(alloc::vec![marginal; n])
    }

    pub fn len(&self) -> usize {
        self.marginals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    pub fn marginal(&self, n: usize) -> &SourceModel {
        &self.marginals[n]
    }

    pub fn marginals(&self) -> &[SourceModel] {
        &self.marginals
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.marginals
            .iter()
            .zip(x)
            .map(|(m, &v)| m.pdf(v))
            .product()
    }

    /// Draws one joint realization, component by component.
    pub fn sample_into<R: RngCore + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (m, o) in self.marginals.iter().zip(out.iter_mut()) {
            *o = m.sample(rng);
        }
    }

    /// Draws every component except `n` (conditional law given `X_n`).
    pub fn sample_others<R: RngCore + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
        x_n: f64,
        out: &mut [f64],
    ) {
        for (i, (m, o)) in self.marginals.iter().zip(out.iter_mut()).enumerate() {
            *o = if i == n { x_n } else { m.sample(rng) };
        }
    }
}
