use dfsq::best_uniform_granular;
use dfsq::experiments::default_halfwidths;
use dfsq_core::computations::Builtin;
use dfsq_core::{make_source, McPlan, ProductSource, SourceKind};

#[test]
fn gaussian_square_argmin_is_stable_under_more_samples() {
    let m = make_source(SourceKind::Gaussian, &[]).unwrap();
    let src = ProductSource::iid(m.clone(), 1).unwrap();
    let grid = default_halfwidths(&m);
    let a = best_uniform_granular(&src, &Builtin::Square, 5.0, &grid, &McPlan::new(250_000, 3))
        .unwrap();
    let b = best_uniform_granular(
        &src,
        &Builtin::Square,
        5.0,
        &grid,
        &McPlan::new(1_000_000, 4),
    )
    .unwrap();
    assert!(
        a.best.abs_diff(b.best) <= 1,
        "{} vs {}",
        a.best_halfwidth(),
        b.best_halfwidth()
    );

    // both ends of the grid are worse than the minimum
    let best = b.best_distortion().mean;
    assert!(b.distortions[0].mean > best && b.distortions.last().unwrap().mean > best);
}

#[test]
fn one_sided_support_uses_zero_based_interval() {
    let m = make_source(SourceKind::Exponential, &[1.0]).unwrap();
    let i = dfsq::experiments::granular_interval(&m, 3.0).unwrap();
    assert_eq!((i.lo, i.hi), (0.0, 3.0));
    let g = dfsq::experiments::granular_interval(
        &make_source(SourceKind::Gaussian, &[1.0, 2.0]).unwrap(),
        3.0,
    )
    .unwrap();
    assert_eq!((g.lo, g.hi), (-2.0, 4.0));
}
