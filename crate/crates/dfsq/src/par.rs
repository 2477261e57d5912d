//! Thread-parallel Monte Carlo drivers.
//!
//! Blocks run in parallel but their moments are merged in block order, so
//! every driver returns the same bits as the sequential core loop.

use dfsq_core::computations::Computation;
use dfsq_core::decoders::DecoderExperiment;
use dfsq_core::distortion::{FmseExperiment, MIN_SAMPLES};
use dfsq_core::mc::Moments;
use dfsq_core::sensitivity::{check_arguments, sensitivity_knot, TabulatedProfile};
use dfsq_core::{McPlan, ProductSource, Result, SensitivityProfile};
use rayon::prelude::*;

fn merge_in_order(width: usize, blocks: Vec<Moments>) -> Moments {
    let mut total = Moments::new(width);
    for b in &blocks {
        total.merge(b);
    }
    total
}

pub fn run_fmse(exp: &FmseExperiment<'_>, plan: &McPlan) -> Result<Moments> {
    plan.require_at_least(MIN_SAMPLES)?;
    let blocks = (0..plan.block_count())
        .into_par_iter()
        .map(|b| exp.run_block(plan, b))
        .collect();
    Ok(merge_in_order(exp.width(), blocks))
}

pub fn run_decoders(exp: &DecoderExperiment<'_>, plan: &McPlan) -> Result<Moments> {
    plan.require_at_least(MIN_SAMPLES)?;
    let blocks = (0..plan.block_count())
        .into_par_iter()
        .map(|b| exp.run_block(plan, b))
        .collect();
    Ok(merge_in_order(3, blocks))
}

/// Weighted sensitivity profile with knots estimated in parallel.
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
    let knots: Vec<(f64, f64)> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &x)| sensitivity_knot(g, src, n, weights, x, k, samples_per_point, seed))
        .collect::<Result<_>>()?;
    let (gammas, errs) = knots.into_iter().unzip();
    Ok(SensitivityProfile::Tabulated(TabulatedProfile::new(
        grid.to_vec(),
        gammas,
        errs,
        samples_per_point,
        seed,
    )?))
}

pub fn multivariate_sensitivity(
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
