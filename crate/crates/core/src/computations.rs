//! Decoder-side computations `g` with first-partial information.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// Marker returned when a partial derivative is requested on the declared
/// non-smooth set of a computation. The partial buffer still holds a
/// deterministic tie-rule value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonSmooth;

/// A function `g: R^N -> R^M` with exact first partials.
pub trait Computation: Send + Sync + fmt::Debug {
    fn arity(&self) -> usize;

    fn output_dim(&self) -> usize {
        1
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    /// Writes `∂g/∂x_n` (one entry per output) into `out`.
    fn partial_into(&self, n: usize, x: &[f64], out: &mut [f64]) -> Result<(), NonSmooth>;

    /// Uniform bound on the second partials, when one exists.
    fn second_partial_bound(&self) -> Option<f64> {
        None
    }

    /// Univariate points where `g` is not twice differentiable or `g'`
    /// vanishes; quadrature splits there.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }

    /// First output component, for scalar-valued computations.
    fn value(&self, x: &[f64]) -> f64 {
        let mut out = [0.0; 1];
        if self.output_dim() == 1 {
            self.eval_into(x, &mut out);
            out[0]
        } else {
            let mut buf = vec![0.0; self.output_dim()];
            self.eval_into(x, &mut buf);
            buf[0]
        }
    }

    /// `g(x)` for univariate scalar computations.
    fn at(&self, x: f64) -> f64 {
        self.value(&[x])
    }

    /// `g'(x)` for univariate scalar computations.
    fn derivative(&self, x: f64) -> Result<f64, NonSmooth> {
        let mut out = [0.0; 1];
        self.partial_into(0, &[x], &mut out).map(|_| out[0])
    }
}

fn check_arity(g: &dyn Computation, x: &[f64]) -> Result<()> {
    if x.len() != g.arity() {
        return Err(Error::ArityMismatch {
            expected: g.arity(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Evaluates `g(x)` after checking the argument count.
pub fn eval(g: &dyn Computation, x: &[f64]) -> Result<Vec<f64>> {
    check_arity(g, x)?;
    let mut out = vec![0.0; g.output_dim()];
    g.eval_into(x, &mut out);
    Ok(out)
}

/// Partial derivative with respect to argument `n`. The inner result flags
/// points on the non-smooth set; the caller decides whether to skip them.
pub fn partial(
    g: &dyn Computation,
    n: usize,
    x: &[f64],
) -> Result<core::result::Result<Vec<f64>, NonSmooth>> {
    check_arity(g, x)?;
    if n >= g.arity() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: g.arity(),
        });
    }
    let mut out = vec![0.0; g.output_dim()];
    Ok(g.partial_into(n, x, &mut out).map(|_| out))
}

/// Closed-form computations used by the worked examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Identity,
    Square,
    /// `exp(-|x|)`
    ExpNegAbs,
    /// `1 - exp(-x)`: concave, with bounded first and second derivatives on `x ≥ 0`.
    OneMinusExpNeg,
    /// `Σ x_n²` over `N` arguments.
    SumOfSquares(usize),
    /// `min(x_1, …, x_N)`.
    Min(usize),
}

impl Builtin {
    /// Builds a computation from its config name and arity.
    pub fn from_kind(kind: &str, arity: usize) -> Result<Self> {
        let b = kind.parse::<Builtin>()?;
        Ok(match b {
            Builtin::SumOfSquares(_) => Builtin::SumOfSquares(arity),
            Builtin::Min(_) => Builtin::Min(arity),
            univariate => {
                if arity != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "`{kind}` is univariate; arity {arity} requested"
                    )));
                }
                univariate
            }
        })
        .and_then(|b| {
            if b.arity() == 0 {
                Err(Error::InvalidParameter("arity must be at least 1".into()))
            } else {
                Ok(b)
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Identity => "identity",
            Builtin::Square => "square",
            Builtin::ExpNegAbs => "exp_neg_abs",
            Builtin::OneMinusExpNeg => "one_minus_exp_neg",
            Builtin::SumOfSquares(_) => "separable_sum_of_squares",
            Builtin::Min(_) => "min_of_N",
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, Builtin::Min(n) if *n > 1)
    }

    fn scalar_partial(&self, n: usize, x: &[f64]) -> (f64, bool) {
        match *self {
            Builtin::Identity => (1.0, true),
            Builtin::Square => (2.0 * x[0], true),
            Builtin::ExpNegAbs => {
                let v = x[0];
                if v == 0.0 {
                    (0.0, false)
                } else {
                    (-libm::copysign(1.0, v) * libm::exp(-libm::fabs(v)), true)
                }
            }
            Builtin::OneMinusExpNeg => (libm::exp(-x[0]), true),
            Builtin::SumOfSquares(_) => (2.0 * x[n], true),
            Builtin::Min(_) => {
                let (mut best, mut ties) = (0usize, 0usize);
                for (i, &v) in x.iter().enumerate() {
                    if v < x[best] {
                        best = i;
                        ties = 0;
                    } else if i != best && v == x[best] {
                        ties += 1;
                    }
                }
                // Ties resolve to the smallest minimizing index.
                (if best == n { 1.0 } else { 0.0 }, ties == 0)
            }
        }
    }
}

impl FromStr for Builtin {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "identity" => Ok(Builtin::Identity),
            "square" => Ok(Builtin::Square),
            "exp_neg_abs" => Ok(Builtin::ExpNegAbs),
            "one_minus_exp_neg" => Ok(Builtin::OneMinusExpNeg),
            "separable_sum_of_squares" | "sum_of_squares" => Ok(Builtin::SumOfSquares(1)),
            "min_of_n" | "min" => Ok(Builtin::Min(1)),
            other => Err(Error::InvalidParameter(format!(
                "unknown computation `{other}`"
            ))),
        }
    }
}

impl Computation for Builtin {
    fn arity(&self) -> usize {
        match *self {
            Builtin::SumOfSquares(n) | Builtin::Min(n) => n,
            _ => 1,
        }
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out[0] = match *self {
            Builtin::Identity => x[0],
            Builtin::Square => x[0] * x[0],
            Builtin::ExpNegAbs => libm::exp(-libm::fabs(x[0])),
            Builtin::OneMinusExpNeg => -libm::expm1(-x[0]),
            Builtin::SumOfSquares(_) => x.iter().map(|v| v * v).sum(),
            Builtin::Min(_) => x.iter().copied().fold(f64::INFINITY, f64::min),
        };
    }

    fn partial_into(&self, n: usize, x: &[f64], out: &mut [f64]) -> Result<(), NonSmooth> {
        let (v, smooth) = self.scalar_partial(n, x);
        out[0] = v;
        if smooth {
            Ok(())
        } else {
            Err(NonSmooth)
        }
    }

    fn second_partial_bound(&self) -> Option<f64> {
        match self {
            Builtin::Identity => Some(0.0),
            Builtin::Square | Builtin::SumOfSquares(_) => Some(2.0),
            Builtin::ExpNegAbs | Builtin::OneMinusExpNeg => Some(1.0),
            Builtin::Min(1) => Some(0.0),
            Builtin::Min(_) => None,
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            Builtin::Square | Builtin::ExpNegAbs => vec![0.0],
            _ => Vec::new(),
        }
    }
}

/// Vector-valued computation whose outputs are scalar builtins sharing one
/// argument list.
#[derive(Debug, Clone, PartialEq)]
pub struct Stacked {
    parts: Vec<Builtin>,
}

impl Stacked {
    pub fn new(parts: Vec<Builtin>) -> Result<Self> {
        let first = parts.first().ok_or_else(|| {
            Error::InvalidParameter("stacked computation needs a component".into())
        })?;
        if parts.iter().any(|p| p.arity() != first.arity()) {
            return Err(Error::InvalidParameter(
                "stacked components must share one arity".into(),
            ));
        }
        Ok(Stacked { parts })
    }

    pub fn parts(&self) -> &[Builtin] {
        &self.parts
    }
}

impl Computation for Stacked {
    fn arity(&self) -> usize {
        self.parts[0].arity()
    }

    fn output_dim(&self) -> usize {
        self.parts.len()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (p, o) in self.parts.iter().zip(out.iter_mut()) {
            p.eval_into(x, core::slice::from_mut(o));
        }
    }

    fn partial_into(&self, n: usize, x: &[f64], out: &mut [f64]) -> Result<(), NonSmooth> {
        let mut smooth = true;
        for (p, o) in self.parts.iter().zip(out.iter_mut()) {
            smooth &= p.partial_into(n, x, core::slice::from_mut(o)).is_ok();
        }
        if smooth {
            Ok(())
        } else {
            Err(NonSmooth)
        }
    }

    fn second_partial_bound(&self) -> Option<f64> {
        self.parts
            .iter()
            .map(|p| p.second_partial_bound())
            .try_fold(0.0f64, |acc, b| b.map(|b| acc.max(b)))
    }
}
