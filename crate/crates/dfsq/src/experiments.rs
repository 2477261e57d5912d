//! Worked examples and the uniform granular-region search.

use std::path::{Path, PathBuf};

use dfsq_core::computations::{Builtin, Computation};
use dfsq_core::decoders::{
    codebook_size, fit_log_excess, DecoderExperiment, DecoderSweep, SweepRow,
};
use dfsq_core::design::{
    design_fmse_fixed_rate, design_mse_fixed_rate, design_uniform, PointDensity,
};
use dfsq_core::distortion::{
    theory_multivariate_limit, theory_univariate_limit, FmseExperiment, Scheme,
};
use dfsq_core::sensitivity::{
    min_exponential_sensitivity, quantile_grid, univariate_sensitivity, TabulatedProfile,
};
use dfsq_core::{
    CompandingQuantizer, DistortionReport, Error, Interval, McPlan, MeanEstimate, ProductSource,
    RateAllocation, SensitivityProfile, SourceModel,
};
use rayon::prelude::*;

use crate::config::{check_arity, ExperimentConfig, ExperimentName};
use crate::error::{Context, HarnessError};
use crate::output;
use crate::par;

/// Samples used by the granular-region search; the chosen interval is then
/// re-evaluated with the full budget alongside the other designs.
pub const GRANULAR_SEARCH_SAMPLES: usize = 250_000;
const SENSITIVITY_SAMPLES_PER_KNOT: usize = 20_000;

/// fMSE of the uniform design over a grid of granular half-widths.
#[derive(Debug, Clone, PartialEq)]
pub struct GranularSearch {
    pub rate: f64,
    pub halfwidths: Vec<f64>,
    pub distortions: Vec<MeanEstimate>,
    pub best: usize,
}

impl GranularSearch {
    pub fn best_halfwidth(&self) -> f64 {
        self.halfwidths[self.best]
    }

    pub fn best_distortion(&self) -> MeanEstimate {
        self.distortions[self.best]
    }
}

/// Granular region `[m - w, m + w]` around the median, or `[lo, lo + w]` when
/// the support is bounded below.
pub fn granular_interval(src: &SourceModel, w: f64) -> dfsq_core::Result<Interval> {
    let s = src.support();
    if s.lo.is_finite() {
        Interval::new(s.lo, s.lo + w)
    } else {
        let m = src.median();
        Interval::new(m - w, m + w)
    }
}

/// Geometric grid of half-widths from `0.25` to `32` source scales.
pub fn default_halfwidths(src: &SourceModel) -> Vec<f64> {
    let s = src.scale();
    let n = 32;
    (0..n)
        .map(|i| s * 0.25 * 128f64.powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Brute-force search for the fMSE-minimizing uniform quantizer.
///
/// Every source uses the same granular region; all candidates see the same
/// samples.
pub fn best_uniform_granular(
    src: &ProductSource,
    g: &dyn Computation,
    rate: f64,
    halfwidths: &[f64],
    plan: &McPlan,
) -> Result<GranularSearch, HarnessError> {
    if halfwidths.is_empty()
        || halfwidths[0] <= 0.0
        || halfwidths.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(HarnessError::Config(
            "half-width grid must be positive and increasing".into(),
        ));
    }
    let k = codebook_size(rate).context("uniform search")?;
    let marginal = src.marginal(0);
    let distortions = halfwidths
        .par_iter()
        .map(|&w| {
            let d = design_uniform(granular_interval(marginal, w)?)?;
            let qs = vec![CompandingQuantizer::build(&d, k)?; src.len()];
            let exp = FmseExperiment::new(src, g, vec![Scheme::Distributed(&qs)])?;
            Ok(exp.run(plan)?.estimate(0))
        })
        .collect::<dfsq_core::Result<Vec<MeanEstimate>>>()
        .context(format!("uniform search at R = {rate}"))?;
    let best = distortions
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .map(|(i, _)| i)
        .unwrap();
    Ok(GranularSearch {
        rate,
        halfwidths: halfwidths.to_vec(),
        distortions,
        best,
    })
}

/// Monte Carlo sensitivity estimate written next to its closed form.
#[derive(Debug, Clone)]
pub struct SensitivityTable {
    pub profile: TabulatedProfile,
    pub closed_form: Option<SensitivityProfile>,
}

impl SensitivityTable {
    /// Largest deviation from the closed form on knots inside `[lo, hi]`.
    pub fn sup_error(&self, lo: f64, hi: f64) -> Option<f64> {
        let c = self.closed_form.as_ref()?;
        self.profile
            .knots()
            .iter()
            .zip(self.profile.values())
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(x, g)| (g - c.eval(*x)).abs())
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct ExampleOutput {
    pub config: ExperimentConfig,
    pub rows: Vec<DistortionReport>,
    pub sweep: Option<DecoderSweep>,
    pub granular: Vec<GranularSearch>,
    pub sensitivity: Option<SensitivityTable>,
    pub notes: Vec<String>,
}

impl ExampleOutput {
    /// Rows for one design, ordered by rate.
    pub fn design_rows(&self, design: &str) -> Vec<&DistortionReport> {
        let mut v: Vec<&DistortionReport> =
            self.rows.iter().filter(|r| r.design == design).collect();
        v.sort_by(|a, b| a.rate_bits.total_cmp(&b.rate_bits));
        v
    }

    pub fn summary(&self) -> String {
        let c = &self.config;
        let mut s = format!(
            "experiment {}  N = {}  seed = {}  samples = {}  rates = {:?}\n",
            c.experiment,
            c.sources(),
            c.seed,
            c.samples,
            c.rate_grid
        );
        s.push_str("distortions are multiplied by 2^(2R); R is bits per source\n");
        if let Some(sw) = &self.sweep {
            s.push('\n');
            s.push_str(&output::sweep_summary(sw));
        }
        if !self.rows.is_empty() {
            s.push_str(&output::summary_table(&self.rows));
            s.push_str(&self.gains());
        }
        for g in &self.granular {
            s.push_str(&format!(
                "\nbest uniform half-width at R = {}: {} (D = {:.4e})",
                g.rate,
                g.best_halfwidth(),
                g.best_distortion().mean
            ));
        }
        if let Some(t) = &self.sensitivity {
            if let Some(e) = t.sup_error(0.0, 5.0) {
                s.push_str(&format!(
                    "\nsensitivity sup-norm error vs closed form on [0, 5]: {e:.4}"
                ));
            }
        }
        for n in &self.notes {
            s.push_str(&format!("\nnote: {n}"));
        }
        s.push('\n');
        s
    }

    fn gains(&self) -> String {
        let mut s = String::new();
        let pairs = [
            ("ordinary", "functional"),
            ("functional", "compute-first"),
            ("uniform", "functional"),
        ];
        for (a, b) in pairs {
            let (ra, rb) = (self.design_rows(a), self.design_rows(b));
            if ra.is_empty() || rb.is_empty() {
                continue;
            }
            s.push_str(&format!("\ngain of {b} over {a} (dB):"));
            for (x, y) in ra.iter().zip(&rb) {
                s.push_str(&format!(
                    " R={}: {:.2}",
                    x.rate_bits,
                    10.0 * (x.d_emp.mean / y.d_emp.mean).log10()
                ));
            }
        }
        s
    }

    /// Writes the main CSV at `path` plus `.summary.txt` and any side tables.
    pub fn write(&self, path: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        let mut written = vec![path.to_path_buf()];
        match &self.sweep {
            Some(sw) => output::write_file(path, &output::sweep_csv(&sw.rows))?,
            None => output::write_file(path, &output::distortion_csv(&self.rows))?,
        }
        let summary = output::sibling(path, "summary.txt");
        output::write_file(&summary, &self.summary())?;
        written.push(summary);
        if !self.granular.is_empty() {
            let mut csv = String::from("rate_bits,halfwidth,d_emp,d_emp_stderr\n");
            for g in &self.granular {
                for (w, d) in g.halfwidths.iter().zip(&g.distortions) {
                    csv.push_str(&format!("{},{},{},{}\n", g.rate, w, d.mean, d.stderr));
                }
            }
            let p = output::sibling(path, "granular.csv");
            output::write_file(&p, &csv)?;
            written.push(p);
        }
        if let Some(t) = &self.sensitivity {
            let closed = t.closed_form.clone();
            let f = closed.as_ref().map(|c| move |x: f64| c.eval(x));
            let csv =
                output::sensitivity_csv(&t.profile, f.as_ref().map(|f| f as &dyn Fn(f64) -> f64));
            let p = output::sibling(path, "sensitivity.csv");
            output::write_file(&p, &csv)?;
            written.push(p);
        }
        Ok(written)
    }
}

pub fn run_example(cfg: &ExperimentConfig) -> Result<ExampleOutput, HarnessError> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentName::DecoderGap => decoder_gap(cfg),
        _ => distortion_example(cfg),
    }
}

/// Per-source sensitivity for an iid product source, plus a Monte Carlo table when the
/// profile needed one or has a closed form to check against.
pub fn sensitivity_for(
    cfg: &ExperimentConfig,
    src: &ProductSource,
    g: &Builtin,
) -> Result<(SensitivityProfile, Option<SensitivityTable>), HarnessError> {
    let n = src.len();
    let marginal = src.marginal(0);
    if n == 1 {
        return Ok((univariate_sensitivity(*g).context("sensitivity")?, None));
    }
    if g.is_separable() {
        // ∂g/∂x_0 depends on x_0 alone; the other arguments are placeholders.
        let gg = *g;
        let rest: Vec<f64> = src.marginals().iter().map(SourceModel::median).collect();
        let profile = SensitivityProfile::analytic(
            format!("|d{}/dx|", g.name()),
            move |x| {
                let mut p = rest.clone();
                p[0] = x;
                let mut d = [0.0];
                let _ = gg.partial_into(0, &p, &mut d);
                d[0].abs()
            },
            g.kinks(),
        );
        return Ok((profile, None));
    }
    let grid = quantile_grid(marginal, dfsq_core::sensitivity::DEFAULT_KNOTS)
        .context("sensitivity grid")?;
    let mc =
        par::multivariate_sensitivity(g, src, 0, &grid, SENSITIVITY_SAMPLES_PER_KNOT, cfg.seed)
            .context("sensitivity estimate")?;
    let SensitivityProfile::Tabulated(table) = mc.clone() else {
        unreachable!("Monte Carlo profiles are tabulated")
    };
    let closed = match (g, marginal) {
        (Builtin::Min(_), SourceModel::Exponential { rate }) => {
            Some(min_exponential_sensitivity(n, *rate).context("sensitivity")?)
        }
        _ => None,
    };
    let profile = closed.clone().unwrap_or(mc);
    Ok((
        profile,
        Some(SensitivityTable {
            profile: table,
            closed_form: closed,
        }),
    ))
}

fn theory_or_nan(
    r: dfsq_core::Result<f64>,
    what: &str,
    notes: &mut Vec<String>,
) -> Result<f64, HarnessError> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::TheoryUndefined(msg)) => {
            let note = format!("{what} theory undefined, reported as NaN ({msg})");
            if !notes.contains(&note) {
                notes.push(note);
            }
            Ok(f64::NAN)
        }
        Err(e) => Err(e).context(what.to_string()),
    }
}

fn distortion_example(cfg: &ExperimentConfig) -> Result<ExampleOutput, HarnessError> {
    let name = cfg.experiment.as_str();
    let n = cfg.sources();
    let marginal = cfg.source_spec().build()?;
    let g = cfg.computation_spec().build(n)?;
    check_arity(&g, n)?;
    let src = ProductSource::iid(marginal.clone(), n).context(name)?;
    let mut notes = Vec::new();

    let (gamma, sensitivity) = sensitivity_for(cfg, &src, &g)?;
    let functional =
        design_fmse_fixed_rate(&marginal, &gamma).context(format!("{name}: functional design"))?;
    let ordinary = match design_mse_fixed_rate(&marginal) {
        Ok(d) => Some(d),
        Err(Error::DesignInfeasible(msg)) => {
            notes.push(format!(
                "ordinary design skipped: design-infeasible ({msg})"
            ));
            None
        }
        Err(e) => return Err(e).context(format!("{name}: ordinary design")),
    };
    let compute_first = if cfg.experiment == ExperimentName::GaussianSquare && n == 1 {
        let y = marginal
            .squared()
            .context(format!("{name}: density of g(X)"))?;
        let d = design_mse_fixed_rate(&y).context(format!("{name}: compute-first design"))?;
        Some((y, d))
    } else {
        None
    };

    // theory per unit codebook fraction; scaled by the allocation below
    let alloc = RateAllocation::from_fractions(vec![1.0 / n as f64; n], n as f64).context(name)?;
    let multi = |d: &PointDensity| {
        theory_multivariate_limit(
            &vec![marginal.clone(); n],
            &vec![gamma.clone(); n],
            &vec![d.clone(); n],
            &alloc,
        )
        .map(|m| m.constant)
    };
    let c_functional = multi(&functional).context(format!("{name}: functional theory"))?;
    let c_ordinary = match &ordinary {
        Some(d) => theory_or_nan(multi(d), "ordinary", &mut notes)?,
        None => f64::NAN,
    };
    let c_compute_first = match &compute_first {
        Some((y, d)) => theory_or_nan(
            theory_univariate_limit(y, &SensitivityProfile::constant(1.0), d),
            "compute-first",
            &mut notes,
        )?,
        None => f64::NAN,
    };

    let plan = cfg.plan();
    let search_plan = McPlan {
        samples: cfg.samples.min(GRANULAR_SEARCH_SAMPLES),
        ..plan
    };
    let halfwidths = default_halfwidths(&marginal);
    let mut rows = Vec::new();
    let mut granular = Vec::new();
    for &rate in &cfg.rate_grid {
        let k = codebook_size(rate).context(name)?;
        let kappa = (n * k) as f64;
        let search = best_uniform_granular(&src, &g, rate, &halfwidths, &search_plan)?;
        let uniform =
            design_uniform(granular_interval(&marginal, search.best_halfwidth()).context(name)?)
                .context(format!("{name}: uniform design"))?;
        let c_uniform = theory_or_nan(multi(&uniform), "uniform", &mut notes)?;
        granular.push(search);

        let build = |d: &PointDensity| CompandingQuantizer::build(d, k).map(|q| vec![q; n]);
        let mut designs: Vec<(&str, Vec<CompandingQuantizer>, f64)> = vec![
            (
                "functional",
                build(&functional).context(name)?,
                c_functional,
            ),
            ("uniform", build(&uniform).context(name)?, c_uniform),
        ];
        if let Some(d) = &ordinary {
            designs.push(("ordinary", build(d).context(name)?, c_ordinary));
        }
        let cf_q = match &compute_first {
            Some((_, d)) => Some(CompandingQuantizer::build(d, k).context(name)?),
            None => None,
        };
        let mut schemes: Vec<Scheme<'_>> = designs
            .iter()
            .map(|(_, qs, _)| Scheme::Distributed(qs))
            .collect();
        if let Some(q) = &cf_q {
            schemes.push(Scheme::ComputeFirst(q));
        }
        let exp = FmseExperiment::new(&src, &g, schemes).context(name)?;
        let m = par::run_fmse(&exp, &plan).context(format!("{name}: simulation at R = {rate}"))?;

        let mut labels: Vec<(&str, f64)> = designs.iter().map(|(l, _, c)| (*l, *c)).collect();
        if cf_q.is_some() {
            // compute-first quantizes one scalar with a K-cell codebook
            labels.push((
                "compute-first",
                c_compute_first * kappa * kappa / (k * k) as f64,
            ));
        }
        for (i, (label, constant)) in labels.into_iter().enumerate() {
            rows.push(DistortionReport {
                experiment: name.into(),
                design: label.into(),
                n,
                k_or_kappa: if n == 1 { k } else { n * k },
                rate_bits: (k as f64).log2(),
                d_emp: m.estimate(i),
                d_theory: constant / (kappa * kappa),
                seed: cfg.seed,
            });
        }
    }
    output::sort_rows(&mut rows);
    Ok(ExampleOutput {
        config: cfg.clone(),
        rows,
        sweep: None,
        granular,
        sensitivity,
        notes,
    })
}

fn decoder_gap(cfg: &ExperimentConfig) -> Result<ExampleOutput, HarnessError> {
    let name = cfg.experiment.as_str();
    let src = cfg.source_spec().build()?;
    let g = cfg.computation_spec().build(1)?;
    check_arity(&g, 1)?;
    if cfg.rate_grid.iter().any(|r| *r < 2.0) {
        return Err(HarnessError::Config(
            "decoder-gap rates must be at least 2 bits".into(),
        ));
    }
    let gamma = univariate_sensitivity(g).context(name)?;
    let design =
        design_fmse_fixed_rate(&src, &gamma).context(format!("{name}: functional design"))?;
    let plan = cfg.plan();
    let rows = cfg
        .rate_grid
        .iter()
        .map(|&rate| {
            let k = codebook_size(rate)?;
            let exp = DecoderExperiment::new(&src, &g, CompandingQuantizer::build(&design, k)?)?;
            let m = par::run_decoders(&exp, &plan)?;
            let fallback = exp.decoders().iter().map(|d| d.fallback_cells()).sum();
            SweepRow::from_moments(rate, k, &m, fallback)
        })
        .collect::<dfsq_core::Result<Vec<_>>>()
        .context(name)?;
    let mut notes = vec![format!("design: {}", design.label())];
    let flagged: usize = rows.iter().map(|r| r.fallback_cells).sum();
    if flagged > 0 {
        notes.push(format!(
            "{flagged} decoder cells fell back to the simple value"
        ));
    }
    let fit = fit_log_excess(&rows);
    Ok(ExampleOutput {
        config: cfg.clone(),
        rows: Vec::new(),
        sweep: Some(DecoderSweep { rows, fit }),
        granular: Vec::new(),
        sensitivity: None,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use dfsq_core::{make_source, SourceKind};

    fn small(name: ExperimentName) -> ExperimentConfig {
        ExperimentConfig {
            rate_grid: vec![3.0, 5.0],
            samples: 20_000,
            seed: 11,
            ..ExperimentConfig::new(name)
        }
    }

    #[test]
    fn granular_search_on_uniform_source_covers_support() {
        let src =
            ProductSource::iid(make_source(SourceKind::Uniform, &[0.0, 1.0]).unwrap(), 1).unwrap();
        let grid = [0.5, 0.75, 1.0, 1.25, 1.5, 2.0];
        let s = best_uniform_granular(
            &src,
            &Builtin::Identity,
            4.0,
            &grid,
            &McPlan::new(100_000, 1),
        )
        .unwrap();
        assert_eq!(s.best_halfwidth(), 1.0);
        let worst = s.distortions.iter().map(|d| d.mean).fold(0.0, f64::max);
        assert!(s.distortions[0].mean > s.best_distortion().mean);
        assert!(worst > s.best_distortion().mean);
        assert!(best_uniform_granular(
            &src,
            &Builtin::Identity,
            4.0,
            &[1.0, 0.5],
            &McPlan::new(100_000, 1)
        )
        .is_err());
    }

    #[test]
    fn gaussian_square_rows() {
        let out = run_example(&small(ExperimentName::GaussianSquare)).unwrap();
        assert_eq!(out.rows.len(), 8);
        for d in ["functional", "ordinary", "uniform", "compute-first"] {
            assert_eq!(out.design_rows(d).len(), 2);
        }
        let f = out.design_rows("functional");
        assert!(f
            .iter()
            .all(|r| r.d_theory.is_finite() && r.d_emp.stderr > 0.0));
        assert!(out
            .design_rows("uniform")
            .iter()
            .all(|r| r.d_theory.is_nan()));
        assert_eq!(out.granular.len(), 2);
    }

    #[test]
    fn sum_square_with_one_source_reproduces_gaussian_square() {
        let a = run_example(&small(ExperimentName::GaussianSquare)).unwrap();
        let b = run_example(&ExperimentConfig {
            n: Some(1),
            ..small(ExperimentName::MultiSumSquare)
        })
        .unwrap();
        for d in ["functional", "ordinary", "uniform"] {
            for (x, y) in a.design_rows(d).iter().zip(b.design_rows(d)) {
                assert_eq!(x.d_emp, y.d_emp, "{d}");
                assert_eq!(x.d_theory.to_bits(), y.d_theory.to_bits());
            }
        }
    }

    #[test]
    fn cauchy_skips_ordinary_design() {
        let out = run_example(&small(ExperimentName::CauchyExp)).unwrap();
        assert!(out.design_rows("ordinary").is_empty());
        assert!(out.notes.iter().any(|n| n.contains("design-infeasible")));
    }

    #[test]
    fn multi_min_uses_closed_form_profile_and_reports_table() {
        let cfg = ExperimentConfig {
            n: Some(3),
            ..small(ExperimentName::MultiMin)
        };
        let out = run_example(&cfg).unwrap();
        let t = out.sensitivity.as_ref().unwrap();
        assert!(t.sup_error(0.0, 5.0).unwrap() < 0.05);
        assert_eq!(out.design_rows("functional")[0].k_or_kappa, 24);
    }

    #[test]
    fn decoder_gap_sweep() {
        let out = run_example(&ExperimentConfig {
            rate_grid: vec![2.0, 3.0, 4.0],
            samples: 50_000,
            ..ExperimentConfig::new(ExperimentName::DecoderGap)
        })
        .unwrap();
        let sw = out.sweep.unwrap();
        assert_eq!(sw.rows.len(), 3);
        assert!(sw.fit.unwrap().slope < 0.0);
    }

    #[test]
    fn custom_propagates_infeasible_designs() {
        let cfg = ExperimentConfig {
            source: Some(crate::SourceSpec::new("gaussian", &[])),
            computation: Some(crate::ComputationSpec::new("exp_neg_abs", 1)),
            ..small(ExperimentName::Custom)
        };
        assert!(run_example(&cfg).is_ok());
        let bad = ExperimentConfig {
            computation: Some(crate::ComputationSpec::new("min", 2)),
            ..cfg
        };
        assert!(matches!(run_example(&bad), Err(HarnessError::Config(_))));
    }
}
