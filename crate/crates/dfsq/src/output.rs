//! CSV and summary writers.
//!
//! Floats use Rust's shortest round-trip formatting, so identical values give
//! identical bytes. Infinite boundaries print as `inf` and `-inf`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dfsq_core::decoders::{DecoderSweep, SweepRow};
use dfsq_core::design::PointDensity;
use dfsq_core::sensitivity::TabulatedProfile;
use dfsq_core::{CompandingQuantizer, DistortionReport};

use crate::error::HarnessError;

pub const DISTORTION_HEADER: &str =
    "experiment_id,N,K_or_kappa,rate_bits,d_emp,d_emp_stderr,d_theory,scaled_emp,scaled_theory,seed,samples";
pub const SWEEP_HEADER: &str = "R,d_simple,d_mmse,d_fmmse,rel_excess,rel_excess_stderr";
pub const QUANTIZER_HEADER: &str = "k,p_lo,p_hi,c";

/// `experiment:design`, the row key of the distortion CSV.
pub fn row_id(r: &DistortionReport) -> String {
    format!("{}:{}", r.experiment, r.design)
}

/// Sorts rows by design, then rate.
pub fn sort_rows(rows: &mut [DistortionReport]) {
    rows.sort_by(|a, b| {
        row_id(a)
            .cmp(&row_id(b))
            .then(a.rate_bits.total_cmp(&b.rate_bits))
            .then(a.k_or_kappa.cmp(&b.k_or_kappa))
    });
}

pub fn distortion_csv(rows: &[DistortionReport]) -> String {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut s = String::from(DISTORTION_HEADER);
    s.push('\n');
    for r in &rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row_id(r),
            r.n,
            r.k_or_kappa,
            r.rate_bits,
            r.d_emp.mean,
            r.d_emp.stderr,
            r.d_theory,
            r.scaled_emp(),
            r.scaled_theory(),
            r.seed,
            r.samples()
        )
        .unwrap();
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.rate, r.simple.mean, r.mmse.mean, r.fmmse.mean, r.rel_excess, r.rel_excess_stderr
        )
        .unwrap();
    }
    s
}

/// One row per cell, `k` counted from 1.
pub fn quantizer_csv(q: &CompandingQuantizer) -> String {
    let mut s = String::from(QUANTIZER_HEADER);
    s.push('\n');
    for (k, ((lo, hi), c)) in q.cells().zip(q.codewords()).enumerate() {
        writeln!(s, "{},{},{},{}", k + 1, lo, hi, c).unwrap();
    }
    s
}

/// Tabulates `λ` and the compressor on `points` evenly spaced quantiles of λ.
pub fn density_csv(d: &PointDensity, points: usize) -> String {
    let mut s = String::from("x,lambda,compressor\n");
    for i in 1..points {
        let x = d.inv_compressor(i as f64 / points as f64);
        writeln!(s, "{},{},{}", x, d.lambda(x), d.compressor(x)).unwrap();
    }
    s
}

pub fn sensitivity_csv(t: &TabulatedProfile, closed_form: Option<&dyn Fn(f64) -> f64>) -> String {
    let mut s = String::from(if closed_form.is_some() {
        "x,gamma,stderr,closed_form\n"
    } else {
        "x,gamma,stderr\n"
    });
    for ((x, g), e) in t.knots().iter().zip(t.values()).zip(t.stderr()) {
        match closed_form {
            Some(f) => writeln!(s, "{x},{g},{e},{}", f(*x)).unwrap(),
            None => writeln!(s, "{x},{g},{e}").unwrap(),
        }
    }
    s
}

/// Table of `2^{2R}·D` per design, the figures' convention.
pub fn summary_table(rows: &[DistortionReport]) -> String {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut s = String::new();
    let mut last = String::new();
    for r in &rows {
        let id = row_id(r);
        if id != last {
            writeln!(s, "\n{id}").unwrap();
            writeln!(
                s,
                "{:>8} {:>10} {:>14} {:>12} {:>14}",
                "R", "K|kappa", "2^2R D_emp", "+-", "2^2R D_theory"
            )
            .unwrap();
            last = id;
        }
        let scale = (2.0 * r.rate_bits).exp2();
        writeln!(
            s,
            "{:>8.3} {:>10} {:>14.6} {:>12.2e} {:>14.6}",
            r.rate_bits,
            r.k_or_kappa,
            r.scaled_emp(),
            scale * r.d_emp.stderr,
            r.scaled_theory()
        )
        .unwrap();
    }
    s
}

pub fn sweep_summary(sweep: &DecoderSweep) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "R", "D_simple", "D_mmse", "D_fmmse", "rel_excess", "+-"
    )
    .unwrap();
    for r in &sweep.rows {
        writeln!(
            s,
            "{:>6.2} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.5} {:>10.1e}",
            r.rate, r.simple.mean, r.mmse.mean, r.fmmse.mean, r.rel_excess, r.rel_excess_stderr
        )
        .unwrap();
    }
    match &sweep.fit {
        Some(f) => writeln!(
            s,
            "fit ln(rel_excess) = {:.4} + {:.4} R  (R^2 = {:.4}, {} rates)",
            f.intercept, f.slope, f.r_squared, f.points
        )
        .unwrap(),
        None => writeln!(
            s,
            "fit unavailable: fewer than two rates above 10 standard errors"
        )
        .unwrap(),
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

/// `out.csv` → `out.<suffix>`
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dfsq_core::MeanEstimate;

    fn row(design: &str, rate: f64) -> DistortionReport {
        DistortionReport {
            experiment: "e".into(),
            design: design.into(),
            n: 1,
            k_or_kappa: rate.exp2() as usize,
            rate_bits: rate,
            d_emp: MeanEstimate {
                mean: 0.5,
                stderr: 0.01,
                count: 10_000,
            },
            d_theory: f64::NAN,
            seed: 3,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        assert_eq!(distortion_csv(&[]), format!("{DISTORTION_HEADER}\n"));
    }

    #[test]
    fn rows_are_sorted_and_counted() {
        let mut rows = Vec::new();
        for r in [4.0, 2.0, 3.0, 5.0, 6.0] {
            for d in ["uniform", "functional", "ordinary"] {
                rows.push(row(d, r));
            }
        }
        let csv = distortion_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 16);
        assert!(lines[1].starts_with("e:functional,1,4,2,"));
        assert!(lines[15].starts_with("e:uniform,1,64,6,"));
        assert!(lines[1].contains(",NaN,"));
        assert_eq!(csv, distortion_csv(&rows));
    }

    #[test]
    fn quantizer_rows_spell_infinities() {
        let q = CompandingQuantizer::from_boundaries(vec![0.25, 0.5, 0.75], "uniform").unwrap();
        let csv = quantizer_csv(&q);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], QUANTIZER_HEADER);
        assert_eq!(lines[1], "1,-inf,0.25,0.25");
        assert_eq!(lines[2], "2,0.25,0.5,0.375");
        assert_eq!(lines[4], "4,0.75,inf,0.75");
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling(Path::new("out/run.csv"), "summary.txt"),
            PathBuf::from("out/run.summary.txt")
        );
    }
}
