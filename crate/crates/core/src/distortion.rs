//! Theoretical and empirical functional distortion.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::computations::Computation;
use crate::design::PointDensity;
use crate::mc::{McPlan, MeanEstimate, Moments};
use crate::quadrature::{integrate_split, QuadError, Tolerance};
use crate::quantizer::CompandingQuantizer;
use crate::sensitivity::SensitivityProfile;
use crate::sources::{Bits, ProductSource, SourceModel};
use crate::{Error, Result};

/// Minimum Monte Carlo budget for distortion estimates.
pub const MIN_SAMPLES: usize = 10_000;

fn theory_tolerance(src: &SourceModel) -> Tolerance {
    src.tolerance().with_rel(1e-9).with_abs(1e-300)
}

fn merged_breaks(parts: &[&[f64]]) -> Vec<f64> {
    let mut b: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn undefined(what: &str, e: QuadError) -> Error {
    Error::TheoryUndefined(format!("{what}: {e}"))
}

/// `E_f[h(X)]` over the source support, split at the given points.
fn expectation<H: Fn(f64) -> f64>(
    src: &SourceModel,
    h: H,
    breaks: &[f64],
    what: &str,
) -> Result<f64> {
    let s = src.support();
    let b = merged_breaks(&[&src.breakpoints(), breaks]);
    let e = integrate_split(
        |x| {
            let f = src.pdf(x);
            if f == 0.0 {
                0.0
            } else {
                f * h(x)
            }
        },
        s.lo,
        s.hi,
        &b,
        &theory_tolerance(src),
    )
    .map_err(|e| undefined(what, e))?;
    if !e.value.is_finite() {
        return Err(Error::TheoryUndefined(format!("{what}: non-finite value")));
    }
    Ok(e.value)
}

/// `E[(γ/λ)²]`, the un-normalized high-resolution constant.
pub fn gamma_lambda_moment(
    src: &SourceModel,
    gamma: &SensitivityProfile,
    density: &PointDensity,
) -> Result<f64> {
    let ds = density.support();
    let edges: Vec<f64> = [ds.lo, ds.hi]
        .into_iter()
        .filter(|x| x.is_finite())
        .collect();
    let breaks = merged_breaks(&[&gamma.breakpoints(), density.breakpoints(), &edges]);
    expectation(
        src,
        |x| {
            let g = gamma.eval(x);
            // γ²f underflowing drives λ to zero with it
            if g == 0.0 || g * g * src.pdf(x) == 0.0 {
                return 0.0;
            }
            let l = density.lambda(x);
            (g / l) * (g / l)
        },
        &breaks,
        "E[(γ/λ)²]",
    )
}

/// `L = (1/12)·E[(γ(X)/λ(X))²]`; the fixed-rate prediction at size `K` is `L/K²`.
pub fn theory_univariate_limit(
    src: &SourceModel,
    gamma: &SensitivityProfile,
    density: &PointDensity,
) -> Result<f64> {
    Ok(gamma_lambda_moment(src, gamma, density)? / 12.0)
}

/// A distortion curve `D(R) = constant · 2^{-2R}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCurve {
    pub constant: f64,
}

impl RateCurve {
    pub fn at(&self, rate: f64) -> f64 {
        self.constant * libm::exp2(-2.0 * rate)
    }
}

/// `‖γ²f‖_{1/3} = (∫ (γ² f)^{1/3})³`.
pub fn third_norm(src: &SourceModel, gamma: &SensitivityProfile) -> Result<f64> {
    let s = src.support();
    let b = merged_breaks(&[&src.breakpoints(), &gamma.breakpoints()]);
    let e = integrate_split(
        |x| {
            let g = gamma.eval(x);
            libm::cbrt(g * g * src.pdf(x))
        },
        s.lo,
        s.hi,
        &b,
        &theory_tolerance(src),
    )
    .map_err(|e| undefined("‖γ²f‖_{1/3}", e))?;
    Ok(e.value * e.value * e.value)
}

/// Optimal fixed-rate curve `(1/12)‖γ²f‖_{1/3} 2^{-2R}`.
pub fn theory_fixed_rate_optimal(
    src: &SourceModel,
    gamma: &SensitivityProfile,
) -> Result<RateCurve> {
    Ok(RateCurve {
        constant: third_norm(src, gamma)? / 12.0,
    })
}

/// `E[log₂ γ(X)]`.
pub fn expected_log_sensitivity(src: &SourceModel, gamma: &SensitivityProfile) -> Result<f64> {
    expectation(
        src,
        |x| libm::log2(gamma.eval(x)),
        &gamma.breakpoints(),
        "E[log₂ γ]",
    )
}

/// Optimal entropy-constrained curve `(1/12) 2^{2h(X) + 2E[log₂ γ]} 2^{-2R}`.
pub fn theory_entropy_constrained_optimal(
    src: &SourceModel,
    gamma: &SensitivityProfile,
) -> Result<RateCurve> {
    let h = src
        .diff_entropy()
        .map_err(|e| Error::TheoryUndefined(format!("h(X): {e}")))?;
    let lg = expected_log_sensitivity(src, gamma)?;
    Ok(RateCurve {
        constant: libm::exp2(2.0 * h.0 + 2.0 * lg) / 12.0,
    })
}

/// Entropy-constrained constant of an arbitrary point density:
/// `(1/12) E[(γ/λ)²] 2^{2h(X) + 2E[log₂ λ]}`.
///
/// With `λ ∝ γ` this equals the optimum; any other `λ` gives a larger value.
pub fn entropy_constrained_constant(
    src: &SourceModel,
    gamma: &SensitivityProfile,
    density: &PointDensity,
) -> Result<f64> {
    let m = gamma_lambda_moment(src, gamma, density)?;
    let h = src
        .diff_entropy()
        .map_err(|e| Error::TheoryUndefined(format!("h(X): {e}")))?;
    let ll = expectation(
        src,
        |x| libm::log2(density.lambda(x)),
        density.breakpoints(),
        "E[log₂ λ]",
    )?;
    Ok(m / 12.0 * libm::exp2(2.0 * h.0 + 2.0 * ll))
}

/// Per-source terms and total of the multivariate limit.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateLimit {
    /// `(1/(12 α_n²)) E[(γ_n/λ_n)²]` per source.
    pub terms: Vec<f64>,
    pub constant: f64,
}

impl MultivariateLimit {
    /// Predicted distortion at total codebook budget `κ`.
    pub fn at(&self, kappa: f64) -> f64 {
        self.constant / (kappa * kappa)
    }
}

/// Sum over sources of `(1/(12 α_n²)) E[(γ_n(X_n)/λ_n(X_n))²]`.
pub fn theory_multivariate_limit(
    srcs: &[SourceModel],
    gammas: &[SensitivityProfile],
    densities: &[PointDensity],
    alloc: &RateAllocation,
) -> Result<MultivariateLimit> {
    let n = srcs.len();
    if gammas.len() != n || densities.len() != n || alloc.alphas.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} profiles, densities and fractions; got {}, {}, {}",
            gammas.len(),
            densities.len(),
            alloc.alphas.len()
        )));
    }
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let l = theory_univariate_limit(&srcs[i], &gammas[i], &densities[i])
            .map_err(|e| Error::TheoryUndefined(format!("source {i}: {e}")))?;
        terms.push(l / (alloc.alphas[i] * alloc.alphas[i]));
    }
    let constant = terms.iter().sum();
    Ok(MultivariateLimit { terms, constant })
}

/// The weighted-fMSE constant; `gammas` are weighted profiles `γ_n(·, β)`.
pub fn weighted_fmse_theory(
    srcs: &[SourceModel],
    weighted_gammas: &[SensitivityProfile],
    densities: &[PointDensity],
    alloc: &RateAllocation,
) -> Result<f64> {
    Ok(theory_multivariate_limit(srcs, weighted_gammas, densities, alloc)?.constant)
}

/// Per-source rates and codebook fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct RateAllocation {
    pub total_rate: f64,
    pub rates: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl RateAllocation {
    /// Allocation with `K_n = 2^{R_n}`.
    pub fn from_rates(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidParameter(
                "rates must be finite and nonnegative".into(),
            ));
        }
        let sizes: Vec<f64> = rates.iter().map(|r| libm::exp2(*r)).collect();
        let kappa: f64 = sizes.iter().sum();
        Ok(RateAllocation {
            total_rate: rates.iter().sum(),
            alphas: sizes.iter().map(|k| k / kappa).collect(),
            rates,
        })
    }

    /// Allocation with `K_n = α_n κ`.
    pub fn from_fractions(alphas: Vec<f64>, kappa: f64) -> Result<Self> {
        if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidParameter(
                "every fraction must be positive".into(),
            ));
        }
        let s: f64 = alphas.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "fractions sum to {s}, not 1"
            )));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "κ must be positive, got {kappa}"
            )));
        }
        let rates: Vec<f64> = alphas.iter().map(|a| libm::log2(a * kappa)).collect();
        Ok(RateAllocation {
            total_rate: rates.iter().sum(),
            rates,
            alphas,
        })
    }

    pub fn equal(n: usize, rate_per_source: f64) -> Result<Self> {
        Self::from_rates(vec![rate_per_source; n])
    }

    /// `κ = Σ_n 2^{R_n}`.
    pub fn kappa(&self) -> f64 {
        self.rates.iter().map(|r| libm::exp2(*r)).sum()
    }

    /// `K_n = round(α_n κ)`, at least 3.
    pub fn codebook_sizes(&self, kappa: f64) -> Vec<usize> {
        self.alphas
            .iter()
            .map(|a| (libm::round(a * kappa) as usize).max(3))
            .collect()
    }
}

/// Minimizes `Σ a_n 2^{-2R_n}` subject to `Σ R_n = R`, `R_n ≥ 0`.
///
/// Sources whose unconstrained rate is negative are clipped to zero and the
/// remaining budget is re-solved over the active set.
pub fn allocate_rates(constants: &[f64], total_rate: f64) -> Result<RateAllocation> {
    if !(total_rate > 0.0 && total_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "total rate must be positive, got {total_rate}"
        )));
    }
    if constants.is_empty() || constants.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter(
            "constants must be positive and finite".into(),
        ));
    }
    let logs: Vec<f64> = constants.iter().map(|a| libm::log2(*a)).collect();
    let mut active = vec![true; constants.len()];
    let mut rates = vec![0.0; constants.len()];
    loop {
        let m = active.iter().filter(|a| **a).count() as f64;
        let mean_log = logs
            .iter()
            .zip(&active)
            .filter(|(_, a)| **a)
            .map(|(l, _)| l)
            .sum::<f64>()
            / m;
        let mut clipped = false;
        for i in 0..rates.len() {
            if active[i] {
                rates[i] = total_rate / m + 0.5 * (logs[i] - mean_log);
                if rates[i] < 0.0 {
                    active[i] = false;
                    rates[i] = 0.0;
                    clipped = true;
                }
            }
        }
        if !clipped {
            break;
        }
    }
    RateAllocation::from_rates(rates).map(|mut a| {
        a.total_rate = total_rate;
        a
    })
}

/// How one variant in a common-random-number comparison reconstructs `g`.
#[derive(Debug, Clone, Copy)]
pub enum Scheme<'a> {
    /// Each argument quantized by its own quantizer, then `g` applied to the
    /// reconstructions (the simple decoder).
    Distributed(&'a [CompandingQuantizer]),
    /// `g(X)` computed first and quantized directly; scalar `g` only.
    ComputeFirst(&'a CompandingQuantizer),
}

/// Monte Carlo fMSE of several schemes on one shared sample stream.
#[derive(Debug)]
pub struct FmseExperiment<'a> {
    src: &'a ProductSource,
    g: &'a dyn Computation,
    weights: Vec<f64>,
    schemes: Vec<Scheme<'a>>,
}

impl<'a> FmseExperiment<'a> {
    pub fn new(
        src: &'a ProductSource,
        g: &'a dyn Computation,
        schemes: Vec<Scheme<'a>>,
    ) -> Result<Self> {
        if g.arity() != src.len() {
            return Err(Error::ArityMismatch {
                expected: g.arity(),
                got: src.len(),
            });
        }
        if schemes.is_empty() {
            return Err(Error::InvalidInput("no schemes to evaluate".into()));
        }
        for s in &schemes {
            match s {
                Scheme::Distributed(qs) if qs.len() != src.len() => {
                    return Err(Error::InvalidInput(format!(
                        "{} quantizers for {} sources",
                        qs.len(),
                        src.len()
                    )))
                }
                Scheme::ComputeFirst(_) if g.output_dim() != 1 => {
                    return Err(Error::InvalidInput(
                        "compute-first needs a scalar computation".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(FmseExperiment {
            src,
            g,
            weights: vec![1.0; g.output_dim()],
            schemes,
        })
    }

    /// Weights `β` of the weighted fMSE `Σ_m β_m |g^{(m)} - ĝ^{(m)}|²`.
    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.g.output_dim()
            || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "one nonnegative weight per output required".into(),
            ));
        }
        self.weights = weights.to_vec();
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.schemes.len()
    }

    pub fn run_block(&self, plan: &McPlan, b: usize) -> Moments {
        let n = self.src.len();
        let m = self.g.output_dim();
        plan.run_block(b, self.width(), |rng, len, acc| {
            let mut x = vec![0.0; n];
            let mut xq = vec![0.0; n];
            let mut gx = vec![0.0; m];
            let mut gq = vec![0.0; m];
            let mut loss = vec![0.0; self.schemes.len()];
            for _ in 0..len {
                self.src.sample_into(rng, &mut x);
                self.g.eval_into(&x, &mut gx);
                for (l, s) in loss.iter_mut().zip(&self.schemes) {
                    match s {
                        Scheme::Distributed(qs) => {
                            for ((o, q), v) in xq.iter_mut().zip(qs.iter()).zip(&x) {
                                *o = q.quantize(*v);
                            }
                            self.g.eval_into(&xq, &mut gq);
                        }
                        Scheme::ComputeFirst(q) => gq[0] = q.quantize(gx[0]),
                    }
                    *l = self
                        .weights
                        .iter()
                        .zip(gx.iter().zip(&gq))
                        .map(|(w, (a, c))| w * (a - c) * (a - c))
                        .sum();
                }
                acc.push(&loss);
            }
        })
    }

    /// Sequential run; parallel drivers merge `run_block` results in block order.
    pub fn run(&self, plan: &McPlan) -> Result<Moments> {
        plan.require_at_least(MIN_SAMPLES)?;
        let mut total = Moments::new(self.width());
        for b in 0..plan.block_count() {
            total.merge(&self.run_block(plan, b));
        }
        Ok(total)
    }
}

/// `E|g(X) - g(Q(X))|²` with the simple decoder, one quantizer per source.
pub fn empirical_fmse(
    src: &ProductSource,
    g: &dyn Computation,
    quantizers: &[CompandingQuantizer],
    plan: &McPlan,
) -> Result<MeanEstimate> {
    let exp = FmseExperiment::new(src, g, vec![Scheme::Distributed(quantizers)])?;
    Ok(exp.run(plan)?.estimate(0))
}

/// Univariate form of [`empirical_fmse`]; same sample stream as `N = 1`.
pub fn empirical_fmse_univariate(
    src: &SourceModel,
    g: &dyn Computation,
    quantizer: &CompandingQuantizer,
    plan: &McPlan,
) -> Result<MeanEstimate> {
    let p = ProductSource::iid(src.clone(), 1)?;
    empirical_fmse(&p, g, core::slice::from_ref(quantizer), plan)
}

/// Cell probabilities `P_k = P(X ∈ cell k)`.
pub fn cell_probabilities(src: &SourceModel, q: &CompandingQuantizer) -> Vec<f64> {
    q.cells().map(|(lo, hi)| src.prob(lo, hi)).collect()
}

fn entropy_of(probs: impl Iterator<Item = f64>) -> Bits {
    Bits(probs.filter(|p| *p > 0.0).map(|p| -p * libm::log2(p)).sum())
}

/// Index entropy `-Σ P_k log₂ P_k` with exact cell probabilities.
pub fn index_entropy(src: &SourceModel, q: &CompandingQuantizer) -> Bits {
    entropy_of(cell_probabilities(src, q).into_iter())
}

/// Plug-in index entropy from Monte Carlo cell counts.
pub fn index_entropy_mc(src: &SourceModel, q: &CompandingQuantizer, plan: &McPlan) -> Bits {
    let mut counts = vec![0u64; q.size()];
    for b in 0..plan.block_count() {
        let mut rng = plan.block_rng(b);
        for _ in 0..plan.block_len(b) {
            counts[q.encode_unchecked(src.sample(&mut rng))] += 1;
        }
    }
    let n = plan.samples as f64;
    entropy_of(counts.into_iter().map(|c| c as f64 / n))
}

/// Tail-condition series `T(y)` on both tails.
#[derive(Debug, Clone, PartialEq)]
pub struct TailDiagnostic {
    pub grid: Vec<f64>,
    /// `T` at `y` for the upper tail `(y, ∞)`.
    pub upper: Vec<f64>,
    /// `T` at `-y` for the lower tail `(-∞, -y)`.
    pub lower: Vec<f64>,
    /// A numerator integral diverged or a ratio was infinite.
    pub violated: bool,
    pub note: Option<String>,
}

fn eventually_decreasing(series: &[f64]) -> bool {
    let Some(peak) = series
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    else {
        return true;
    };
    let last = *series.last().unwrap();
    series[peak..].windows(2).all(|w| w[1] <= w[0]) && (last < series[peak] || last == 0.0)
}

impl TailDiagnostic {
    /// Both series are nonincreasing after their peak and end below it (or at zero).
    pub fn decreasing(&self) -> bool {
        eventually_decreasing(&self.upper) && eventually_decreasing(&self.lower)
    }

    pub fn passes(&self) -> bool {
        !self.violated && self.decreasing()
    }
}

/// Evaluates `T(y) = ∫_y^∞ |g(x) - g(y)|² f dx / (∫_y^∞ λ)²` and its mirror.
pub fn check_tail_condition(
    src: &SourceModel,
    g: &dyn Computation,
    density: &PointDensity,
    y_grid: &[f64],
) -> Result<TailDiagnostic> {
    if g.arity() != 1 {
        return Err(Error::ArityMismatch {
            expected: 1,
            got: g.arity(),
        });
    }
    if y_grid.is_empty() || y_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "y grid must be strictly increasing".into(),
        ));
    }
    let s = src.support();
    let tol = theory_tolerance(src);
    let breaks = merged_breaks(&[&src.breakpoints(), &g.kinks()]);
    let mut diag = TailDiagnostic {
        grid: y_grid.to_vec(),
        upper: Vec::with_capacity(y_grid.len()),
        lower: Vec::with_capacity(y_grid.len()),
        violated: false,
        note: None,
    };
    for &y in y_grid {
        for upper in [true, false] {
            let (y, a, b) = if upper {
                (y, y.max(s.lo), s.hi)
            } else {
                (-y, s.lo, (-y).min(s.hi))
            };
            let t = if a >= b {
                0.0
            } else {
                let gy = g.at(y);
                let num = integrate_split(
                    |x| {
                        let f = src.pdf(x);
                        if f == 0.0 {
                            return 0.0;
                        }
                        let d = g.at(x) - gy;
                        d * d * f
                    },
                    a,
                    b,
                    &breaks,
                    &tol,
                );
                let mass = if upper {
                    density.upper_tail_mass(y)
                } else {
                    density.lower_tail_mass(y)
                };
                match (num, mass) {
                    (Ok(n), Ok(m)) => {
                        if n.value == 0.0 {
                            0.0
                        } else if m > 0.0 {
                            n.value / (m * m)
                        } else {
                            f64::INFINITY
                        }
                    }
                    (Err(e), _) => {
                        diag.violated = true;
                        diag.note
                            .get_or_insert_with(|| format!("numerator at y = {y}: {e}"));
                        f64::INFINITY
                    }
                    (_, Err(e)) => return Err(e),
                }
            };
            if t.is_infinite() {
                diag.violated = true;
            }
            if upper {
                diag.upper.push(t);
            } else {
                diag.lower.push(t);
            }
        }
    }
    Ok(diag)
}

/// One row of a distortion table.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport {
    pub experiment: String,
    pub design: String,
    pub n: usize,
    /// `K` (univariate) or `κ` (multivariate).
    pub k_or_kappa: usize,
    /// Bits per source: `log₂ K` for fixed rate, index entropy for EC.
    pub rate_bits: f64,
    pub d_emp: MeanEstimate,
    /// Asymptotic prediction; NaN when the theory is undefined.
    pub d_theory: f64,
    pub seed: u64,
}

impl DistortionReport {
    pub fn samples(&self) -> u64 {
        self.d_emp.count
    }

    pub fn scaled_emp(&self) -> f64 {
        libm::exp2(2.0 * self.rate_bits) * self.d_emp.mean
    }

    pub fn scaled_theory(&self) -> f64 {
        libm::exp2(2.0 * self.rate_bits) * self.d_theory
    }
}
