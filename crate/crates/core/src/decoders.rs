//! Univariate decoders: simple, MMSE, and fMMSE, and the excess-fMSE sweep.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::computations::Computation;
use crate::design::PointDensity;
use crate::mc::{McPlan, MeanEstimate, Moments};
use crate::quadrature::integrate_split;
use crate::quantizer::CompandingQuantizer;
use crate::sources::{ProductSource, SourceModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    /// `g(c_k)`
    Simple,
    /// `g(E[X | cell])`
    Mmse,
    /// `E[g(X) | cell]`
    Fmmse,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 3] = [DecoderKind::Simple, DecoderKind::Mmse, DecoderKind::Fmmse];

    pub fn name(&self) -> &'static str {
        match self {
            DecoderKind::Simple => "simple",
            DecoderKind::Mmse => "mmse",
            DecoderKind::Fmmse => "fmmse",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(DecoderKind::Simple),
            "mmse" => Ok(DecoderKind::Mmse),
            "fmmse" => Ok(DecoderKind::Fmmse),
            other => Err(Error::InvalidParameter(format!(
                "unknown decoder {other:?}"
            ))),
        }
    }
}

/// Per-cell reconstruction table for one decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    kind: DecoderKind,
    /// Codewords for `simple`, `E[X | cell]` for `mmse`, `E[g(X) | cell]` for `fmmse`.
    cell_values: Vec<f64>,
    /// Reconstruction of `g` per cell.
    estimates: Vec<f64>,
    /// Cells whose conditional integral failed or had zero mass and fell
    /// back to the simple value.
    fallback: Vec<bool>,
}

impl Decoder {
    pub fn build(
        kind: DecoderKind,
        src: &SourceModel,
        g: &dyn Computation,
        q: &CompandingQuantizer,
    ) -> Result<Self> {
        if g.arity() != 1 || g.output_dim() != 1 {
            return Err(Error::ArityMismatch {
                expected: 1,
                got: g.arity(),
            });
        }
        let k = q.size();
        let mut cell_values = Vec::with_capacity(k);
        let mut estimates = Vec::with_capacity(k);
        let mut fallback = vec![false; k];
        let s = src.support();
        let tol = src.tolerance().with_rel(1e-10).with_abs(1e-300);
        let mut breaks = src.breakpoints();
        breaks.extend(g.kinks());
        for (i, ((lo, hi), &c)) in q.cells().zip(q.codewords()).enumerate() {
            let simple = g.at(c);
            if kind == DecoderKind::Simple {
                cell_values.push(c);
                estimates.push(simple);
                continue;
            }
            let (a, b) = (lo.max(s.lo), hi.min(s.hi));
            let mass = if a < b { src.prob(a, b) } else { 0.0 };
            let moment = |h: &dyn Fn(f64) -> f64| {
                integrate_split(
                    |x| {
                        let f = src.pdf(x);
                        if f == 0.0 {
                            0.0
                        } else {
                            h(x) * f
                        }
                    },
                    a,
                    b,
                    &breaks,
                    &tol,
                )
                .ok()
                .map(|e| e.value / mass)
                .filter(|v| v.is_finite())
            };
            let value = if mass > 0.0 {
                match kind {
                    DecoderKind::Mmse => moment(&|x| x).map(|m| m.clamp(a, b)),
                    _ => moment(&|x| g.at(x)),
                }
            } else {
                None
            };
            match value {
                Some(v) => {
                    cell_values.push(v);
                    estimates.push(if kind == DecoderKind::Mmse {
                        g.at(v)
                    } else {
                        v
                    });
                }
                None => {
                    fallback[i] = true;
                    cell_values.push(if kind == DecoderKind::Mmse { c } else { simple });
                    estimates.push(simple);
                }
            }
        }
        Ok(Decoder {
            kind,
            cell_values,
            estimates,
            fallback,
        })
    }

    pub fn kind(&self) -> DecoderKind {
        self.kind
    }

    pub fn cell_values(&self) -> &[f64] {
        &self.cell_values
    }

    /// The decoder's estimate of `g` for cell `k`.
    pub fn estimate(&self, k: usize) -> Result<f64> {
        self.estimates
            .get(k)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index: k,
                len: self.estimates.len(),
            })
    }

    pub fn fallback_cells(&self) -> usize {
        self.fallback.iter().filter(|f| **f).count()
    }
}

/// The three decoders on one quantizer, evaluated on a shared sample stream.
#[derive(Debug)]
pub struct DecoderExperiment<'a> {
    src: &'a SourceModel,
    g: &'a dyn Computation,
    quantizer: CompandingQuantizer,
    decoders: [Decoder; 3],
}

impl<'a> DecoderExperiment<'a> {
    pub fn new(
        src: &'a SourceModel,
        g: &'a dyn Computation,
        quantizer: CompandingQuantizer,
    ) -> Result<Self> {
        let build = |k| Decoder::build(k, src, g, &quantizer);
        let decoders = [
            build(DecoderKind::Simple)?,
            build(DecoderKind::Mmse)?,
            build(DecoderKind::Fmmse)?,
        ];
        Ok(DecoderExperiment {
            src,
            g,
            quantizer,
            decoders,
        })
    }

    pub fn quantizer(&self) -> &CompandingQuantizer {
        &self.quantizer
    }

    pub fn decoders(&self) -> &[Decoder; 3] {
        &self.decoders
    }

    /// Squared errors of simple, mmse, fmmse (columns 0, 1, 2) on block `b`.
    pub fn run_block(&self, plan: &McPlan, b: usize) -> Moments {
        let one = ProductSource::iid(self.src.clone(), 1).expect("one marginal");
        plan.run_block(b, 3, |rng, len, acc| {
            let mut x = [0.0];
            for _ in 0..len {
                one.sample_into(rng, &mut x);
                let gx = self.g.at(x[0]);
                let k = self.quantizer.encode_unchecked(x[0]);
                let loss = self.decoders.each_ref().map(|d| {
                    let e = gx - d.estimates[k];
                    e * e
                });
                acc.push(&loss);
            }
        })
    }

    pub fn run(&self, plan: &McPlan) -> Result<Moments> {
        plan.require_at_least(crate::distortion::MIN_SAMPLES)?;
        let mut total = Moments::new(3);
        for b in 0..plan.block_count() {
            total.merge(&self.run_block(plan, b));
        }
        Ok(total)
    }
}

/// One rate point of the decoder comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rate: f64,
    pub k: usize,
    pub simple: MeanEstimate,
    pub mmse: MeanEstimate,
    pub fmmse: MeanEstimate,
    /// `(D_simple - D_fmmse) / D_fmmse`
    pub rel_excess: f64,
    pub rel_excess_stderr: f64,
    /// Paired differences `D_simple - D_fmmse` and `D_mmse - D_fmmse`.
    pub simple_gap: MeanEstimate,
    pub mmse_gap: MeanEstimate,
    pub fallback_cells: usize,
}

/// Delta-method standard error of `mean(i)/mean(j) - 1`.
fn ratio_stderr(m: &Moments, i: usize, j: usize) -> f64 {
    let n = m.count() as f64;
    let (a, b) = (m.mean(i), m.mean(j));
    let var = (m.covariance(i, i) / (b * b) + a * a * m.covariance(j, j) / (b * b * b * b)
        - 2.0 * a * m.covariance(i, j) / (b * b * b))
        / n;
    libm::sqrt(var.max(0.0))
}

impl SweepRow {
    pub fn from_moments(rate: f64, k: usize, m: &Moments, fallback_cells: usize) -> Result<Self> {
        let row = SweepRow {
            rate,
            k,
            simple: m.estimate(0),
            mmse: m.estimate(1),
            fmmse: m.estimate(2),
            rel_excess: m.mean(0) / m.mean(2) - 1.0,
            rel_excess_stderr: ratio_stderr(m, 0, 2),
            simple_gap: m.difference(0, 2),
            mmse_gap: m.difference(1, 2),
            fallback_cells,
        };
        for (name, gap) in [("simple", row.simple_gap), ("mmse", row.mmse_gap)] {
            if gap.mean < -4.0 * gap.stderr {
                return Err(Error::InternalInconsistency(format!(
                    "fMMSE worse than {name} decoder at R = {rate}: gap {} ± {}",
                    gap.mean, gap.stderr
                )));
            }
        }
        Ok(row)
    }
}

/// Least-squares line through `(R, ln rel_excess)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Fits rows whose relative excess exceeds ten standard errors.
pub fn fit_log_excess(rows: &[SweepRow]) -> Option<LogLinearFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rel_excess > 10.0 * r.rel_excess_stderr && r.rel_excess > 0.0)
        .map(|r| (r.rate, libm::log(r.rel_excess)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LogLinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSweep {
    pub rows: Vec<SweepRow>,
    pub fit: Option<LogLinearFit>,
}

/// Codebook size for a (possibly fractional) rate.
pub fn codebook_size(rate: f64) -> Result<usize> {
    if !(rate.is_finite() && rate >= libm::log2(3.0) - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "rate {rate} gives fewer than 3 cells"
        )));
    }
    Ok(libm::round(libm::exp2(rate)) as usize)
}

/// One rate point of [`excess_fmse_sweep`].
pub fn excess_fmse_row(
    src: &SourceModel,
    g: &dyn Computation,
    design: &PointDensity,
    rate: f64,
    plan: &McPlan,
) -> Result<SweepRow> {
    let k = codebook_size(rate)?;
    let exp = DecoderExperiment::new(src, g, CompandingQuantizer::build(design, k)?)?;
    let m = exp.run(plan)?;
    let fallback = exp.decoders.iter().map(Decoder::fallback_cells).sum();
    SweepRow::from_moments(rate, k, &m, fallback)
}

/// Compares the three decoders at each rate under common random numbers.
pub fn excess_fmse_sweep(
    src: &SourceModel,
    g: &dyn Computation,
    design: &PointDensity,
    rates: &[f64],
    plan: &McPlan,
) -> Result<DecoderSweep> {
    if rates.iter().any(|r| *r < 2.0) {
        return Err(Error::InvalidParameter(
            "decoder sweep rates must be at least 2 bits".into(),
        ));
    }
    let rows = rates
        .iter()
        .map(|&r| excess_fmse_row(src, g, design, r, plan))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_log_excess(&rows);
    Ok(DecoderSweep { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::computations::Builtin;
    use crate::design::{design_fmse_fixed_rate, design_mse_fixed_rate, design_uniform};
    use crate::sensitivity::univariate_sensitivity;
    use crate::sources::{make_source, Interval, SourceKind};

    fn exp1() -> SourceModel {
        make_source(SourceKind::Exponential, &[1.0]).unwrap()
    }

    #[test]
    fn kind_names_round_trip() {
        for k in DecoderKind::ALL {
            assert_eq!(k.name().parse::<DecoderKind>().unwrap(), k);
        }
        assert!("best".parse::<DecoderKind>().is_err());
    }

    #[test]
    fn uniform_centroids_are_midpoints() {
        let src = make_source(SourceKind::Uniform, &[0.0, 1.0]).unwrap();
        let q = CompandingQuantizer::build(
            &design_uniform(Interval::new(0.0, 1.0).unwrap()).unwrap(),
            8,
        )
        .unwrap();
        let m = Decoder::build(DecoderKind::Mmse, &src, &Builtin::Identity, &q).unwrap();
        let f = Decoder::build(DecoderKind::Fmmse, &src, &Builtin::Identity, &q).unwrap();
        for k in 1..7 {
            assert!((m.cell_values()[k] - q.codewords()[k]).abs() < 1e-12);
        }
        // overload cells hold only the support piece
        assert!((m.cell_values()[0] - 0.0625).abs() < 1e-12);
        for (a, b) in m.cell_values().iter().zip(f.cell_values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_centroid() {
        let src = exp1();
        let q = CompandingQuantizer::from_boundaries(vec![libm::log(2.0), libm::log(4.0)], "test")
            .unwrap();
        let m = Decoder::build(DecoderKind::Mmse, &src, &Builtin::Identity, &q).unwrap();
        // E[X | 0 < X ≤ ln 2] = 1 - ln 2 for the unit exponential
        assert!((m.cell_values()[0] - (1.0 - libm::log(2.0))).abs() < 1e-12);
        // memoryless top cell
        assert!((m.cell_values()[2] - (libm::log(4.0) + 1.0)).abs() < 1e-10);
    }

    #[test]
    fn mmse_values_lie_in_cells_and_fmmse_within_g_range() {
        let src = exp1();
        let g = Builtin::OneMinusExpNeg;
        let d = design_mse_fixed_rate(&src).unwrap();
        let q = CompandingQuantizer::build(&d, 16).unwrap();
        let m = Decoder::build(DecoderKind::Mmse, &src, &g, &q).unwrap();
        let f = Decoder::build(DecoderKind::Fmmse, &src, &g, &q).unwrap();
        for (k, (lo, hi)) in q.cells().enumerate() {
            let (lo, hi) = (lo.max(0.0), hi);
            assert!(m.cell_values()[k] >= lo && m.cell_values()[k] <= hi);
            let v = f.cell_values()[k];
            assert!(v >= g.at(lo) && v <= g.at(hi));
        }
        assert_eq!(f.fallback_cells(), 0);
    }

    #[test]
    fn divergent_overload_centroid_falls_back() {
        let src = make_source(SourceKind::Cauchy, &[0.0, 1.0]).unwrap();
        let gamma = univariate_sensitivity(Builtin::ExpNegAbs).unwrap();
        let q =
            CompandingQuantizer::build(&design_fmse_fixed_rate(&src, &gamma).unwrap(), 8).unwrap();
        let m = Decoder::build(DecoderKind::Mmse, &src, &Builtin::ExpNegAbs, &q).unwrap();
        assert_eq!(m.fallback_cells(), 2);
        let f = Decoder::build(DecoderKind::Fmmse, &src, &Builtin::ExpNegAbs, &q).unwrap();
        assert_eq!(f.fallback_cells(), 0);
    }

    #[test]
    fn identity_decoders_coincide() {
        let src = make_source(SourceKind::Gaussian, &[]).unwrap();
        let d = design_mse_fixed_rate(&src).unwrap();
        let s = excess_fmse_sweep(
            &src,
            &Builtin::Identity,
            &d,
            &[2.0, 4.0],
            &McPlan::new(50_000, 1),
        )
        .unwrap();
        for r in &s.rows {
            assert!(r.mmse_gap.mean.abs() < 1e-12);
            assert!(r.simple_gap.mean > 0.0);
        }
        assert!(excess_fmse_sweep(
            &src,
            &Builtin::Identity,
            &d,
            &[1.0],
            &McPlan::new(50_000, 1)
        )
        .is_err());
    }

    #[test]
    fn excess_decays_with_rate() {
        let src = exp1();
        let g = Builtin::OneMinusExpNeg;
        let gamma = univariate_sensitivity(g).unwrap();
        let d = design_fmse_fixed_rate(&src, &gamma).unwrap();
        let s = excess_fmse_sweep(
            &src,
            &g,
            &d,
            &[2.0, 3.0, 4.0, 5.0, 6.0],
            &McPlan::new(200_000, 3),
        )
        .unwrap();
        for r in &s.rows {
            assert!(r.fmmse.mean <= r.simple.mean + 2.0 * r.simple_gap.stderr);
            assert!(r.fmmse.mean <= r.mmse.mean + 2.0 * r.mmse_gap.stderr);
        }
        let fit = s.fit.unwrap();
        assert!(fit.slope < 0.0, "{fit:?}");
    }

    #[test]
    fn fit_recovers_exact_line() {
        let row = |r: f64| SweepRow {
            rate: r,
            k: 0,
            simple: MeanEstimate {
                mean: 0.0,
                stderr: 0.0,
                count: 1,
            },
            mmse: MeanEstimate {
                mean: 0.0,
                stderr: 0.0,
                count: 1,
            },
            fmmse: MeanEstimate {
                mean: 0.0,
                stderr: 0.0,
                count: 1,
            },
            rel_excess: 3.0 * libm::exp(-0.7 * r),
            rel_excess_stderr: 1e-9,
            simple_gap: MeanEstimate {
                mean: 0.0,
                stderr: 0.0,
                count: 1,
            },
            mmse_gap: MeanEstimate {
                mean: 0.0,
                stderr: 0.0,
                count: 1,
            },
            fallback_cells: 0,
        };
        let rows: Vec<SweepRow> = (2..8).map(|r| row(r as f64)).collect();
        let fit = fit_log_excess(&rows).unwrap();
        assert!((fit.slope + 0.7).abs() < 1e-12);
        assert!((fit.intercept - libm::log(3.0)).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.points, 6);
        assert!(fit_log_excess(&rows[..1]).is_none());
    }
}
