//! Functional sensitivity profiles.
//!
//! For a univariate computation the profile is `|g'(x)|`. For a multivariate
//! one, the profile of argument `n` is the conditional root-mean-square of
//! `∂g/∂x_n` given `X_n = x`; with product sources the conditioning reduces
//! to sampling the other marginals, so it is estimated by Monte Carlo on a
//! knot grid and interpolated monotonically in between.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::computations::Computation;
use crate::interp::MonotoneCubic;
use crate::mc::{domain, substream};
use crate::sources::{ProductSource, SourceModel};
use crate::{Error, Result};

pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default number of knots for Monte Carlo profiles.
pub const DEFAULT_KNOTS: usize = 257;
pub const MIN_SAMPLES_PER_POINT: usize = 1000;

#[derive(Clone)]
pub enum SensitivityProfile {
    Analytic {
        label: String,
        f: ProfileFn,
        /// Zeros and kinks of the profile; quadrature splits here.
        breaks: Vec<f64>,
    },
    Tabulated(TabulatedProfile),
}

impl fmt::Debug for SensitivityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensitivityProfile::Analytic { label, breaks, .. } => f
                .debug_struct("Analytic")
                .field("label", label)
                .field("breaks", breaks)
                .finish(),
            SensitivityProfile::Tabulated(t) => f.debug_tuple("Tabulated").field(t).finish(),
        }
    }
}

/// Knot table of a Monte Carlo profile with per-knot standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    interp: MonotoneCubic,
    stderr: Vec<f64>,
    pub samples_per_point: usize,
    pub seed: u64,
}

impl TabulatedProfile {
    pub fn new(
        xs: Vec<f64>,
        gammas: Vec<f64>,
        stderr: Vec<f64>,
        samples_per_point: usize,
        seed: u64,
    ) -> Result<Self> {
        if gammas.iter().any(|g| *g < 0.0) {
            return Err(Error::InvalidInput(
                "sensitivity values must be nonnegative".into(),
            ));
        }
        if stderr.len() != xs.len() {
            return Err(Error::InvalidInput(
                "one standard error per knot required".into(),
            ));
        }
        Ok(TabulatedProfile {
            interp: MonotoneCubic::new(xs, gammas)?,
            stderr,
            samples_per_point,
            seed,
        })
    }

    pub fn knots(&self) -> &[f64] {
        self.interp.knots()
    }

    pub fn values(&self) -> &[f64] {
        self.interp.values()
    }

    pub fn stderr(&self) -> &[f64] {
        &self.stderr
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.interp.eval(x).max(0.0)
    }

    /// Rule applied outside the knot range.
    pub fn extrapolation(&self) -> &'static str {
        "constant"
    }
}

impl SensitivityProfile {
    pub fn analytic<F>(label: impl Into<String>, f: F, breaks: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        SensitivityProfile::Analytic {
            label: label.into(),
            f: Arc::new(f),
            breaks,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::analytic(format!("constant({c})"), move |_| c, Vec::new())
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            SensitivityProfile::Analytic { f, .. } => f(x).max(0.0),
            SensitivityProfile::Tabulated(t) => t.eval(x),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            SensitivityProfile::Analytic { breaks, .. } => breaks.clone(),
            SensitivityProfile::Tabulated(t) => t.knots().to_vec(),
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self, SensitivityProfile::Tabulated(_))
    }

    pub fn label(&self) -> String {
        match self {
            SensitivityProfile::Analytic { label, .. } => label.clone(),
            SensitivityProfile::Tabulated(t) => format!(
                "tabulated({} knots, {} samples/knot, seed {})",
                t.knots().len(),
                t.samples_per_point,
                t.seed
            ),
        }
    }

    /// Returns the same profile multiplied by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let inner = self.clone();
        let breaks = self.breakpoints();
        Self::analytic(
            format!("{factor} * {}", self.label()),
            move |x| factor * inner.eval(x),
            breaks,
        )
    }
}

/// `γ(x) = |g'(x)|` for a univariate computation.
pub fn univariate_sensitivity<G>(g: G) -> Result<SensitivityProfile>
where
    G: Computation + 'static,
{
    if g.arity() != 1 || g.output_dim() != 1 {
        return Err(Error::ArityMismatch {
            expected: 1,
            got: g.arity(),
        });
    }
    let label = format!("|g'| of {g:?}");
    let breaks = g.kinks();
    Ok(SensitivityProfile::analytic(
        label,
        move |x| match g.derivative(x) {
            Ok(d) => libm::fabs(d),
            Err(_) => {
                // average of the one-sided slopes at a kink
                let h = 1e-9 * libm::fabs(x).max(1.0);
                let l = g.derivative(x - h).map(libm::fabs).unwrap_or(0.0);
                let r = g.derivative(x + h).map(libm::fabs).unwrap_or(0.0);
                0.5 * (l + r)
            }
        },
        breaks,
    ))
}

/// Closed-form profile of `min` over `n` iid exponential sources:
/// `γ(x) = exp(-rate·x·(n-1)/2)` for `x ≥ 0`.
pub fn min_exponential_sensitivity(n: usize, rate: f64) -> Result<SensitivityProfile> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need N ≥ 2 sources, got {n}"
        )));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rate must be positive, got {rate}"
        )));
    }
    let k = rate * (n as f64 - 1.0) / 2.0;
    Ok(SensitivityProfile::analytic(
        format!("min of {n} iid exponential({rate})"),
        move |x| libm::exp(-k * x.max(0.0)),
        vec![0.0],
    ))
}

/// Knots at marginal quantiles `i/(knots-2)` plus one extra knot in each
/// tail (the support edge when it is finite).
pub fn quantile_grid(marginal: &SourceModel, knots: usize) -> Result<Vec<f64>> {
    if knots < 4 {
        return Err(Error::InvalidParameter(
            "quantile grid needs at least 4 knots".into(),
        ));
    }
    let interior = knots - 2;
    let step = 1.0 / (interior + 1) as f64;
    let s = marginal.support();
    let lo = if s.lo.is_finite() {
        s.lo
    } else {
        marginal.inv_cdf(step / 16.0)
    };
    let hi = if s.hi.is_finite() {
        s.hi
    } else {
        marginal.inv_cdf(1.0 - step / 16.0)
    };
    let mut grid = Vec::with_capacity(knots);
    grid.push(lo);
    grid.extend((1..=interior).map(|i| marginal.inv_cdf(i as f64 * step)));
    grid.push(hi);
    grid.dedup_by(|a, b| !(*a > *b));
    Ok(grid)
}

/// Estimate at one knot: `(γ, standard error)` of
/// `(Σ_m β_m E[|∂g^{(m)}/∂x_n|² | X_n = x])^{1/2}`.
///
/// Each knot draws from its own substream, so knots may be evaluated in any
/// order (or in parallel) with identical results.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_knot(
    g: &dyn Computation,
    src: &ProductSource,
    n: usize,
    weights: &[f64],
    x: f64,
    knot: usize,
    samples_per_point: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = substream(seed, domain::SENSITIVITY ^ ((n as u64) << 32), knot as u64);
    let mut point = vec![0.0; src.len()];
    let mut grad = vec![0.0; g.output_dim()];
    let (mut sum, mut sumsq) = (0.0, 0.0);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    while accepted < samples_per_point {
        src.sample_others(&mut rng, n, x, &mut point);
        if g.partial_into(n, &point, &mut grad).is_err() {
            // measure-zero set: resample
            rejected += 1;
            if rejected > 100 * samples_per_point {
                return Err(Error::EstimationFailure(format!(
                    "every draw at x = {x} fell on the non-smooth set"
                )));
            }
            continue;
        }
        let w: f64 = weights.iter().zip(&grad).map(|(b, d)| b * d * d).sum();
        sum += w;
        sumsq += w * w;
        accepted += 1;
    }
    let m = samples_per_point as f64;
    let mean = sum / m;
    let var = ((sumsq - sum * sum / m) / (m - 1.0)).max(0.0);
    let se_mean = libm::sqrt(var / m);
    let gamma = libm::sqrt(mean.max(0.0));
    let se = if gamma > 0.0 {
        se_mean / (2.0 * gamma)
    } else {
        libm::sqrt(se_mean)
    };
    Ok((gamma, se))
}

fn validate_mc(
    g: &dyn Computation,
    src: &ProductSource,
    n: usize,
    grid: &[f64],
    spp: usize,
) -> Result<()> {
    if g.arity() != src.len() {
        return Err(Error::ArityMismatch {
            expected: g.arity(),
            got: src.len(),
        });
    }
    if n >= src.len() {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: src.len(),
        });
    }
    if spp < MIN_SAMPLES_PER_POINT {
        return Err(Error::InvalidParameter(format!(
            "samples_per_point must be at least {MIN_SAMPLES_PER_POINT}, got {spp}"
        )));
    }
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "grid must be strictly increasing and nonempty".into(),
        ));
    }
    Ok(())
}

fn validate_weights(weights: &[f64], m: usize) -> Result<()> {
    if weights.len() != m {
        return Err(Error::InvalidParameter(format!(
            "expected {m} weights, got {}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(
            "weights must be nonnegative and finite".into(),
        ));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::InvalidParameter(
            "weights must not all be zero".into(),
        ));
    }
    Ok(())
}

/// Validates the inputs of a Monte Carlo profile estimate.
pub fn check_arguments(
    g: &dyn Computation,
    src: &ProductSource,
    n: usize,
    weights: &[f64],
    grid: &[f64],
    samples_per_point: usize,
) -> Result<()> {
    validate_mc(g, src, n, grid, samples_per_point)?;
    validate_weights(weights, g.output_dim())
}

/// Monte Carlo estimate of the weighted profile of argument `n`.
#[allow(clippy::too_many_arguments)]
pub fn weighted_sensitivity(
    g: &dyn Computation,
    src: &ProductSource,
    n: usize,
    weights: &[f64],
    grid: &[f64],
    samples_per_point: usize,
    seed: u64,
) -> Result<SensitivityProfile> {
    check_arguments(g, src, n, weights, grid, samples_per_point)?;
    let mut gammas = Vec::with_capacity(grid.len());
    let mut errs = Vec::with_capacity(grid.len());
    for (k, &x) in grid.iter().enumerate() {
        let (gm, se) = sensitivity_knot(g, src, n, weights, x, k, samples_per_point, seed)?;
        gammas.push(gm);
        errs.push(se);
    }
    Ok(SensitivityProfile::Tabulated(TabulatedProfile::new(
        grid.to_vec(),
        gammas,
        errs,
        samples_per_point,
        seed,
    )?))
}

/// Monte Carlo estimate of the `n`th profile of a scalar computation.
pub fn multivariate_sensitivity_mc(
    g: &dyn Computation,
    src: &ProductSource,
    n: usize,
    grid: &[f64],
    samples_per_point: usize,
    seed: u64,
) -> Result<SensitivityProfile> {
    let ones = vec![1.0; g.output_dim()];
    weighted_sensitivity(g, src, n, &ones, grid, samples_per_point, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::computations::{Builtin, Stacked};
    use crate::sources::{make_source, SourceKind};

    fn exp_iid(n: usize) -> ProductSource {
        ProductSource::iid(make_source(SourceKind::Exponential, &[1.0]).unwrap(), n).unwrap()
    }

    fn tab(p: &SensitivityProfile) -> &TabulatedProfile {
        match p {
            SensitivityProfile::Tabulated(t) => t,
            _ => panic!("expected tabulated"),
        }
    }

    #[test]
    fn univariate_profiles() {
        let sq = univariate_sensitivity(Builtin::Square).unwrap();
        assert_eq!(sq.eval(3.0), 6.0);
        assert_eq!(sq.eval(-3.0), 6.0);
        let id = univariate_sensitivity(Builtin::Identity).unwrap();
        assert_eq!(id.eval(-17.0), 1.0);
        let e = univariate_sensitivity(Builtin::ExpNegAbs).unwrap();
        assert!((e.eval(2.0) - libm::exp(-2.0)).abs() < 1e-15);
        assert!((e.eval(0.0) - 1.0).abs() < 1e-8);
        assert!(univariate_sensitivity(Builtin::Min(2)).is_err());
    }

    #[test]
    fn min_exponential_closed_form() {
        let p = min_exponential_sensitivity(10, 1.0).unwrap();
        assert_eq!(p.eval(0.0), 1.0);
        let q = min_exponential_sensitivity(2, 1.0).unwrap();
        assert!((q.eval(2.0 * core::f64::consts::LN_2) - 0.5).abs() < 1e-15);
        assert!(min_exponential_sensitivity(1, 1.0).is_err());
        assert!(min_exponential_sensitivity(3, 0.0).is_err());
    }

    #[test]
    fn separable_profile_is_exact_within_reported_error() {
        let src =
            ProductSource::iid(make_source(SourceKind::Gaussian, &[0.0, 1.0]).unwrap(), 3).unwrap();
        let grid = quantile_grid(src.marginal(1), 33).unwrap();
        let p = multivariate_sensitivity_mc(&Builtin::SumOfSquares(3), &src, 1, &grid, 1000, 3)
            .unwrap();
        let t = tab(&p);
        for ((x, g), se) in t.knots().iter().zip(t.values()).zip(t.stderr()) {
            assert!((g - 2.0 * x.abs()).abs() <= 3.0 * se + 1e-12, "x={x} g={g}");
        }
    }

    #[test]
    fn min_profile_at_zero_and_one() {
        let src = exp_iid(3);
        let p = multivariate_sensitivity_mc(&Builtin::Min(3), &src, 0, &[0.0, 1.0], 200_000, 8)
            .unwrap();
        let t = tab(&p);
        assert_eq!(t.values()[0], 1.0);
        // oracle: Pr{min = X_1 | X_1 = 1} = e^{-2}, square-rooted
        let expected = libm::exp(-1.0);
        assert!(
            (t.values()[1] - expected).abs() < 4.0 * t.stderr()[1],
            "{}",
            t.values()[1]
        );
    }

    #[test]
    fn mc_profile_tracks_closed_form_for_ten_sources() {
        let src = exp_iid(10);
        let grid: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let mc =
            multivariate_sensitivity_mc(&Builtin::Min(10), &src, 0, &grid, 20_000, 21).unwrap();
        let cf = min_exponential_sensitivity(10, 1.0).unwrap();
        let sup = (0..=500)
            .map(|i| i as f64 * 0.01)
            .map(|x| (mc.eval(x) - cf.eval(x)).abs())
            .fold(0.0, f64::max);
        assert!(sup < 0.02, "sup-norm {sup}");
    }

    #[test]
    fn weighted_profile_reductions() {
        let src = exp_iid(3);
        let grid = [0.25, 0.5, 1.0];
        let single =
            multivariate_sensitivity_mc(&Builtin::Min(3), &src, 0, &grid, 5000, 4).unwrap();
        let one = weighted_sensitivity(&Builtin::Min(3), &src, 0, &[1.0], &grid, 5000, 4).unwrap();
        assert_eq!(tab(&single), tab(&one));

        let stacked = Stacked::new(vec![Builtin::SumOfSquares(3), Builtin::Min(3)]).unwrap();
        let sel = weighted_sensitivity(&stacked, &src, 0, &[0.0, 1.0], &grid, 5000, 4).unwrap();
        assert_eq!(tab(&sel).values(), tab(&single).values());

        let both = weighted_sensitivity(&stacked, &src, 0, &[1.0, 1.0], &grid, 20_000, 5).unwrap();
        let t = tab(&both);
        for ((x, g), se) in grid.iter().zip(t.values()).zip(t.stderr()) {
            let expected = libm::sqrt(4.0 * x * x + libm::exp(-2.0 * x));
            assert!((g - expected).abs() < 4.0 * se, "x={x}: {g} vs {expected}");
        }

        let scaled =
            weighted_sensitivity(&stacked, &src, 0, &[4.0, 4.0], &grid, 20_000, 5).unwrap();
        for (a, b) in tab(&scaled).values().iter().zip(t.values()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn weighted_profile_rejects_bad_weights() {
        let src = exp_iid(2);
        let g = Builtin::Min(2);
        assert!(weighted_sensitivity(&g, &src, 0, &[-1.0], &[0.5], 1000, 1).is_err());
        assert!(weighted_sensitivity(&g, &src, 0, &[0.0], &[0.5], 1000, 1).is_err());
        assert!(weighted_sensitivity(&g, &src, 0, &[1.0], &[0.5], 10, 1).is_err());
    }

    #[test]
    fn doubling_samples_shrinks_error_by_root_two() {
        let src = exp_iid(4);
        let grid = [0.1, 0.3, 0.6];
        let a = multivariate_sensitivity_mc(&Builtin::Min(4), &src, 2, &grid, 40_000, 6).unwrap();
        let b = multivariate_sensitivity_mc(&Builtin::Min(4), &src, 2, &grid, 80_000, 6).unwrap();
        for (ea, eb) in tab(&a).stderr().iter().zip(tab(&b).stderr()) {
            let ratio = ea / eb;
            assert!(
                (ratio / core::f64::consts::SQRT_2 - 1.0).abs() < 0.2,
                "{ratio}"
            );
        }
    }

    #[test]
    fn quantile_grid_shape() {
        let g = quantile_grid(
            &make_source(SourceKind::Gaussian, &[0.0, 1.0]).unwrap(),
            DEFAULT_KNOTS,
        )
        .unwrap();
        assert_eq!(g.len(), DEFAULT_KNOTS);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let e = quantile_grid(&make_source(SourceKind::Exponential, &[1.0]).unwrap(), 17).unwrap();
        assert_eq!(e[0], 0.0);
    }
}
