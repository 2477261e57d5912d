//! Point densities and their compressor functions.
//!
//! A [`PointDensity`] is built from an unnormalized shape. Construction
//! normalizes it by quadrature and tabulates the compressor `c(x) = ∫_{-∞}^x λ`
//! on an adaptive knot grid. The grid is extended into unbounded tails until
//! the remaining λ-mass is below `1e-12`. Beyond the grid the compressor is
//! still evaluated exactly through tail integrals, so the design is never
//! truncated.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::quadrature::{integrate_split, Tolerance};
use crate::sensitivity::SensitivityProfile;
use crate::sources::{Interval, SourceModel};
use crate::{Error, Result};

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const TAIL_MASS: f64 = 1e-12;
const MAX_PANEL_MASS: f64 = 1.0 / 1024.0;
const INVERSE_TOL: f64 = 1e-13;

#[derive(Clone)]
pub struct PointDensity {
    label: String,
    shape: DensityFn,
    norm: f64,
    support: Interval,
    breaks: Vec<f64>,
    knots: Vec<f64>,
    cum: Vec<f64>,
    tol: Tolerance,
}

impl fmt::Debug for PointDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PointDensity")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("normalization_constant", &self.norm)
            .field("knots", &self.knots.len())
            .finish()
    }
}

impl PointDensity {
    /// Normalizes `shape` over `support` and tabulates its compressor.
    ///
    /// `breaks` are points where the shape has kinks, zeros, or
    /// singularities; `scale` is the length scale used to walk into
    /// unbounded tails.
    pub fn from_shape<F>(
        label: impl Into<String>,
        shape: F,
        support: Interval,
        breaks: &[f64],
        scale: f64,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let label = label.into();
        let support = Interval::new(support.lo, support.hi)?;
        let scale = if scale.is_finite() && scale > 0.0 {
            scale
        } else {
            1.0
        };
        let tol = Tolerance::default().with_tail_scale(scale).with_abs(1e-16);
        let mut breaks: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| b.is_finite() && *b > support.lo && *b < support.hi)
            .collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let total =
            integrate_split(&shape, support.lo, support.hi, &breaks, &tol).map_err(|e| {
                Error::DesignInfeasible(format!("{label}: normalization integral failed ({e})"))
            })?;
        if !(total.value.is_finite() && total.value > 0.0) {
            return Err(Error::DesignInfeasible(format!(
                "{label}: normalization constant {} is not positive",
                total.value
            )));
        }

        let mut density = PointDensity {
            label,
            shape: Arc::new(shape),
            norm: total.value,
            support,
            breaks,
            knots: Vec::new(),
            cum: Vec::new(),
            tol,
        };
        density.build_table(scale)?;
        Ok(density)
    }

    fn build_table(&mut self, scale: f64) -> Result<()> {
        let s = self.support;
        let mut anchors: Vec<f64> = self.breaks.clone();
        anchors.extend([s.lo, s.hi].into_iter().filter(|x| x.is_finite()));
        if anchors.is_empty() {
            anchors.push(0.0);
        }
        anchors.sort_by(f64::total_cmp);
        anchors.dedup();

        let mut knots = anchors.clone();
        if !s.lo.is_finite() {
            let mut step = scale;
            let mut x = anchors[0];
            for _ in 0..200 {
                x -= step;
                knots.push(x);
                if self.lower_tail_mass(x)? < TAIL_MASS {
                    break;
                }
                step *= 2.0;
            }
        }
        if !s.hi.is_finite() {
            let mut step = scale;
            let mut x = *anchors.last().unwrap();
            for _ in 0..200 {
                x += step;
                knots.push(x);
                if self.upper_tail_mass(x)? < TAIL_MASS {
                    break;
                }
                step *= 2.0;
            }
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let mut refined = Vec::with_capacity(knots.len() * 4);
        let mut masses = Vec::with_capacity(knots.len() * 4);
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let m = self.raw_mass(a, b)?;
            let pieces = libm::ceil(m / MAX_PANEL_MASS).max(1.0) as usize;
            if pieces == 1 {
                refined.push(a);
                masses.push(m);
            } else {
                let h = (b - a) / pieces as f64;
                for j in 0..pieces {
                    let lo = a + h * j as f64;
                    let hi = if j + 1 == pieces { b } else { lo + h };
                    refined.push(lo);
                    masses.push(self.raw_mass(lo, hi)?);
                }
            }
        }
        refined.push(*knots.last().unwrap());

        let mut cum = Vec::with_capacity(refined.len());
        let mut acc = if s.lo.is_finite() && refined[0] <= s.lo {
            0.0
        } else {
            self.lower_tail_mass(refined[0])?
        };
        cum.push(acc);
        for m in &masses {
            acc += m;
            cum.push(acc);
        }
        let last = *refined.last().unwrap();
        let upper = if s.hi.is_finite() && last >= s.hi {
            0.0
        } else {
            self.upper_tail_mass(last)?
        };
        if (acc + upper - 1.0).abs() > 1e-9 {
            return Err(Error::DesignInfeasible(format!(
                "{}: tabulated mass {} differs from 1",
                self.label,
                acc + upper
            )));
        }
        self.knots = refined;
        self.cum = cum;
        Ok(())
    }

    fn raw_mass(&self, a: f64, b: f64) -> Result<f64> {
        let e = integrate_split(|x| self.lambda(x), a, b, &self.breaks, &self.tol)
            .map_err(|e| Error::DesignInfeasible(format!("{}: {e}", self.label)))?;
        Ok(e.value)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> Interval {
        self.support
    }

    /// The divisor applied to the unnormalized shape.
    pub fn normalization_constant(&self) -> f64 {
        self.norm
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    /// Compressor knot grid and the compressor values on it.
    pub fn table(&self) -> (&[f64], &[f64]) {
        (&self.knots, &self.cum)
    }

    pub fn lambda(&self, x: f64) -> f64 {
        if x < self.support.lo || x > self.support.hi {
            0.0
        } else {
            (self.shape)(x) / self.norm
        }
    }

    /// `∫_y^∞ λ`, computed directly (not as `1 - c(y)`).
    pub fn upper_tail_mass(&self, y: f64) -> Result<f64> {
        if y >= self.support.hi {
            return Ok(0.0);
        }
        let y = y.max(self.support.lo);
        let e = integrate_split(
            |x| self.lambda(x),
            y,
            self.support.hi,
            &self.breaks,
            &self.tol,
        )
        .map_err(|e| Error::DesignInfeasible(format!("{}: {e}", self.label)))?;
        Ok(e.value.max(0.0))
    }

    /// `∫_{-∞}^y λ`, computed directly.
    pub fn lower_tail_mass(&self, y: f64) -> Result<f64> {
        if y <= self.support.lo {
            return Ok(0.0);
        }
        let y = y.min(self.support.hi);
        let e = integrate_split(
            |x| self.lambda(x),
            self.support.lo,
            y,
            &self.breaks,
            &self.tol,
        )
        .map_err(|e| Error::DesignInfeasible(format!("{}: {e}", self.label)))?;
        Ok(e.value.max(0.0))
    }

    fn panel_integral(&self, a: f64, x: f64) -> f64 {
        // Panels are bounded and carry little mass; failures here would have
        // surfaced when the table was built.
        integrate_split(|t| self.lambda(t), a, x, &self.breaks, &self.tol)
            .map(|e| e.value)
            .unwrap_or(0.0)
    }

    /// `c(x)`: the running integral of λ, in `[0, 1]`.
    pub fn compressor(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= self.support.lo {
            return 0.0;
        }
        if x >= self.support.hi {
            return 1.0;
        }
        let first = self.knots[0];
        let last = *self.knots.last().unwrap();
        let c = if x < first {
            self.lower_tail_mass(x).unwrap_or(0.0)
        } else if x >= last {
            1.0 - self.upper_tail_mass(x).unwrap_or(0.0)
        } else {
            let i = self.knots.partition_point(|&k| k <= x) - 1;
            self.cum[i] + self.panel_integral(self.knots[i], x)
        };
        c.clamp(0.0, 1.0)
    }

    /// `c⁻¹(u)`: bracketed Newton on the monotone compressor.
    pub fn inv_compressor(&self, u: f64) -> f64 {
        if u.is_nan() {
            return f64::NAN;
        }
        if u <= 0.0 {
            return self.support.lo;
        }
        if u >= 1.0 {
            return self.support.hi;
        }
        let n = self.knots.len();
        if u < self.cum[0] {
            // lower tail beyond the grid
            let hi = self.knots[0];
            let mut step = self.tol.tail_scale;
            let mut lo = hi - step;
            while self.lower_tail_mass(lo).unwrap_or(0.0) > u {
                step *= 2.0;
                lo = hi - step;
                if !lo.is_finite() {
                    return f64::NEG_INFINITY;
                }
            }
            return self.solve(|x| self.lower_tail_mass(x).unwrap_or(0.0), lo, hi, u, None);
        }
        if u > self.cum[n - 1] {
            let lo = self.knots[n - 1];
            let mut step = self.tol.tail_scale;
            let mut hi = lo + step;
            while 1.0 - self.upper_tail_mass(hi).unwrap_or(0.0) < u {
                step *= 2.0;
                hi = lo + step;
                if !hi.is_finite() {
                    return f64::INFINITY;
                }
            }
            // solve on the upper tail mass for precision near 1
            let target = 1.0 - u;
            return self.solve(
                |x| -self.upper_tail_mass(x).unwrap_or(0.0),
                lo,
                hi,
                -target,
                None,
            );
        }
        let i = (self.cum.partition_point(|&c| c <= u)).clamp(1, n - 1) - 1;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let base = self.cum[i];
        let span = self.cum[i + 1] - base;
        let guess = if span > 0.0 {
            a + (b - a) * ((u - base) / span)
        } else {
            0.5 * (a + b)
        };
        self.solve(|x| base + self.panel_integral(a, x), a, b, u, Some(guess))
    }

    fn solve<H: Fn(f64) -> f64>(
        &self,
        h: H,
        mut lo: f64,
        mut hi: f64,
        target: f64,
        guess: Option<f64>,
    ) -> f64 {
        let mut x = guess.unwrap_or(0.5 * (lo + hi));
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let err = h(x) - target;
            if err.abs() <= INVERSE_TOL {
                return x;
            }
            if err > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.lambda(x);
            let newton = x - err / d;
            x = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
                break;
            }
        }
        x
    }
}

fn source_breaks(src: &SourceModel, extra: &[f64]) -> Vec<f64> {
    let mut b = src.breakpoints();
    b.extend_from_slice(extra);
    b
}

/// MSE-optimal fixed-rate design: `λ ∝ f^{1/3}`.
pub fn design_mse_fixed_rate(src: &SourceModel) -> Result<PointDensity> {
    let s = src.clone();
    PointDensity::from_shape(
        "mse-fixed-rate",
        move |x| libm::cbrt(s.pdf(x)),
        src.support(),
        &source_breaks(src, &[]),
        src.scale(),
    )
}

/// fMSE-optimal fixed-rate design: `λ ∝ (γ² f)^{1/3}`.
pub fn design_fmse_fixed_rate(
    src: &SourceModel,
    gamma: &SensitivityProfile,
) -> Result<PointDensity> {
    let s = src.clone();
    let g = gamma.clone();
    PointDensity::from_shape(
        "fmse-fixed-rate",
        move |x| {
            let gx = g.eval(x);
            libm::cbrt(gx * gx * s.pdf(x))
        },
        src.support(),
        &source_breaks(src, &gamma.breakpoints()),
        src.scale(),
    )
}

/// fMSE-optimal entropy-constrained design: `λ ∝ γ` on `support`.
pub fn design_fmse_entropy_constrained(
    gamma: &SensitivityProfile,
    support: Interval,
) -> Result<PointDensity> {
    let g = gamma.clone();
    let scale = if support.is_bounded() {
        support.hi - support.lo
    } else {
        1.0
    };
    PointDensity::from_shape(
        "fmse-entropy-constrained",
        move |x| g.eval(x),
        support,
        &gamma.breakpoints(),
        scale,
    )
}

/// Constant point density on a finite interval.
pub fn design_uniform(interval: Interval) -> Result<PointDensity> {
    if !interval.is_bounded() {
        return Err(Error::InvalidParameter(
            "uniform design needs a finite interval".into(),
        ));
    }
    let interval = Interval::new(interval.lo, interval.hi)?;
    let width = interval.hi - interval.lo;
    PointDensity::from_shape(
        format!("uniform[{}, {}]", interval.lo, interval.hi),
        |_| 1.0,
        interval,
        &[],
        width,
    )
}

/// Uniform design on `[-w, w]`.
pub fn design_uniform_symmetric(halfwidth: f64) -> Result<PointDensity> {
    design_uniform(Interval::new(-halfwidth, halfwidth)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::computations::Builtin;
    use crate::quadrature::integrate;
    use crate::sensitivity::univariate_sensitivity;
    use crate::sources::{make_source, SourceKind};
    use core::f64::consts::{PI, SQRT_2};

    fn gaussian() -> SourceModel {
        make_source(SourceKind::Gaussian, &[0.0, 1.0]).unwrap()
    }

    fn check_invariants(d: &PointDensity) {
        let s = d.support();
        let mass = integrate_split(
            |x| d.lambda(x),
            s.lo,
            s.hi,
            d.breakpoints(),
            &Tolerance::default(),
        )
        .unwrap();
        assert!(
            (mass.value - 1.0).abs() < 1e-9,
            "{}: mass {}",
            d.label(),
            mass.value
        );
        let mut prev = f64::NEG_INFINITY;
        for i in 1..2000 {
            let u = i as f64 / 2000.0;
            let x = d.inv_compressor(u);
            let c = d.compressor(x);
            assert!((c - u).abs() < 1e-8, "{}: c(c^-1({u})) = {c}", d.label());
            assert!(x >= prev);
            prev = x;
        }
        for u in [1e-6, 1e-5, 1.0 - 1e-5, 1.0 - 1e-6] {
            let c = d.compressor(d.inv_compressor(u));
            assert!((c - u).abs() < 1e-8, "{}: u={u} c={c}", d.label());
        }
    }

    #[test]
    fn uniform_designs() {
        let d = design_uniform(Interval::new(0.0, 1.0).unwrap()).unwrap();
        assert!((d.lambda(0.3) - 1.0).abs() < 1e-14);
        check_invariants(&d);
        let w = 2.5;
        let s = design_uniform_symmetric(w).unwrap();
        assert!((s.lambda(1.0) - 1.0 / (2.0 * w)).abs() < 1e-14);
        assert!((s.compressor(0.0) - 0.5).abs() < 1e-14);
        assert_eq!(s.lambda(3.0), 0.0);
        assert!(design_uniform(Interval { lo: 1.0, hi: 1.0 }).is_err());
        assert!(design_uniform(Interval::REAL_LINE).is_err());
    }

    #[test]
    fn mse_design_for_uniform_source_is_flat() {
        let d =
            design_mse_fixed_rate(&make_source(SourceKind::Uniform, &[0.0, 1.0]).unwrap()).unwrap();
        for i in 0..=10 {
            assert!((d.lambda(i as f64 / 10.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_design_for_gaussian_is_gaussian_with_variance_three() {
        let d = design_mse_fixed_rate(&gaussian()).unwrap();
        check_invariants(&d);
        for i in -40..=40 {
            let x = i as f64 * 0.2;
            let phi3 = libm::exp(-x * x / 6.0) / libm::sqrt(6.0 * PI);
            assert!((d.lambda(x) - phi3).abs() < 1e-12);
            let cdf3 = 0.5 * libm::erfc(-x / (libm::sqrt(3.0) * SQRT_2));
            assert!((d.compressor(x) - cdf3).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn mse_design_for_exponential() {
        let d =
            design_mse_fixed_rate(&make_source(SourceKind::Exponential, &[1.0]).unwrap()).unwrap();
        check_invariants(&d);
        for x in [0.0, 0.5, 2.0, 10.0] {
            assert!((d.lambda(x) - libm::exp(-x / 3.0) / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_design_for_cauchy_is_infeasible() {
        let c = make_source(SourceKind::Cauchy, &[0.0, 1.0]).unwrap();
        assert!(matches!(
            design_mse_fixed_rate(&c),
            Err(Error::DesignInfeasible(_))
        ));
    }

    #[test]
    fn flat_sensitivity_reduces_to_mse_design() {
        let src = gaussian();
        let a = design_mse_fixed_rate(&src).unwrap();
        let b = design_fmse_fixed_rate(&src, &SensitivityProfile::constant(1.0)).unwrap();
        for i in -100..=100 {
            let x = i as f64 * 0.1;
            assert!((a.lambda(x) - b.lambda(x)).abs() <= 1e-9);
        }
    }

    #[test]
    fn gaussian_square_design_is_symmetric() {
        let gamma = univariate_sensitivity(Builtin::Square).unwrap();
        let d = design_fmse_fixed_rate(&gaussian(), &gamma).unwrap();
        check_invariants(&d);
        assert_eq!(d.lambda(0.0), 0.0);
        assert!((d.compressor(0.0) - 0.5).abs() < 1e-12);
        for x in [0.3, 1.0, 2.7] {
            assert!((d.lambda(x) - d.lambda(-x)).abs() < 1e-15);
        }
    }

    #[test]
    fn cauchy_exp_design_normalization_oracle() {
        let c = make_source(SourceKind::Cauchy, &[0.0, 1.0]).unwrap();
        let gamma = univariate_sensitivity(Builtin::ExpNegAbs).unwrap();
        let d = design_fmse_fixed_rate(&c, &gamma).unwrap();
        check_invariants(&d);
        // oracle: symmetric half-line quadrature of (e^{-2x}/(π(1+x²)))^{1/3}
        let half = integrate(
            |x| libm::cbrt(libm::exp(-2.0 * x) / (PI * (1.0 + x * x))),
            0.0,
            f64::INFINITY,
            &Tolerance::default(),
        )
        .unwrap();
        assert!((d.normalization_constant() - 2.0 * half.value).abs() < 1e-9);
    }

    #[test]
    fn entropy_constrained_designs() {
        let unit = Interval::new(0.0, 1.0).unwrap();
        let flat =
            design_fmse_entropy_constrained(&SensitivityProfile::constant(1.0), unit).unwrap();
        assert!((flat.lambda(0.7) - 1.0).abs() < 1e-13);

        let gamma = crate::sensitivity::min_exponential_sensitivity(10, 1.0).unwrap();
        let half_line = Interval::new(0.0, f64::INFINITY).unwrap();
        let d = design_fmse_entropy_constrained(&gamma, half_line).unwrap();
        check_invariants(&d);
        for x in [0.0, 0.1, 1.0, 3.0] {
            assert!((d.lambda(x) - 4.5 * libm::exp(-4.5 * x)).abs() < 1e-10);
        }

        let sq = univariate_sensitivity(Builtin::Square).unwrap();
        assert!(matches!(
            design_fmse_entropy_constrained(&sq, Interval::REAL_LINE),
            Err(Error::DesignInfeasible(_))
        ));
    }

    #[test]
    fn chi_square_design_with_singular_density() {
        let y = gaussian().squared().unwrap();
        let d = design_mse_fixed_rate(&y).unwrap();
        check_invariants(&d);
    }
}
