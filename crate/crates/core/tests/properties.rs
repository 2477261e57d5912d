use dfsq_core::computations::Builtin;
use dfsq_core::design::{
    design_fmse_entropy_constrained, design_fmse_fixed_rate, design_mse_fixed_rate, design_uniform,
    PointDensity,
};
use dfsq_core::distortion::allocate_rates;
use dfsq_core::sensitivity::{min_exponential_sensitivity, univariate_sensitivity};
use dfsq_core::{make_source, CompandingQuantizer, Interval, SourceKind, SourceModel};
use proptest::prelude::*;

fn source(kind: u8, a: f64, b: f64) -> SourceModel {
    match kind {
        0 => make_source(SourceKind::Uniform, &[a, a + 0.5 + b]).unwrap(),
        1 => make_source(SourceKind::Gaussian, &[a, 0.5 + b]).unwrap(),
        2 => make_source(SourceKind::Exponential, &[0.5 + b]).unwrap(),
        _ => make_source(SourceKind::Cauchy, &[a, 0.5 + b]).unwrap(),
    }
}

fn any_design() -> impl Strategy<Value = PointDensity> {
    (0u8..4, -1.0f64..1.0, 0.0f64..1.5, 0u8..5).prop_map(|(kind, a, b, which)| {
        let src = source(kind, a, b);
        let g = if kind == 3 {
            Builtin::ExpNegAbs
        } else {
            Builtin::Square
        };
        // source-reproducing designs do not exist for Cauchy
        let which = if kind == 3 && (which == 1 || which == 4) {
            0
        } else {
            which
        };
        match which {
            0 => design_fmse_fixed_rate(&src, &univariate_sensitivity(g).unwrap()).unwrap(),
            1 => design_mse_fixed_rate(&src).unwrap(),
            2 => design_uniform(Interval::new(src.inv_cdf(0.05), src.inv_cdf(0.95)).unwrap())
                .unwrap(),
            3 => {
                let gamma = min_exponential_sensitivity(2 + (b * 6.0) as usize, 1.0).unwrap();
                design_fmse_entropy_constrained(&gamma, Interval::new(0.0, f64::INFINITY).unwrap())
                    .unwrap()
            }
            _ => design_fmse_fixed_rate(&src, &univariate_sensitivity(Builtin::Identity).unwrap())
                .unwrap(),
        }
    })
}

/// `Σ a_n 2^{-2R_n}` minimized over a grid on the simplex `Σ R_n = R`.
fn grid_allocation(a: &[f64], r: f64, step: f64) -> Vec<f64> {
    let cost = |rs: &[f64]| {
        rs.iter()
            .zip(a)
            .map(|(r, a)| a * (-2.0 * r).exp2())
            .sum::<f64>()
    };
    let n = (r / step).floor() as usize;
    let mut best = (f64::INFINITY, vec![]);
    match a.len() {
        2 => {
            for i in 0..=n {
                let r0 = i as f64 * step;
                let rs = [r0, r - r0];
                if cost(&rs) < best.0 {
                    best = (cost(&rs), rs.to_vec());
                }
            }
        }
        3 => {
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let (r0, r1) = (i as f64 * step, j as f64 * step);
                    let rs = [r0, r1, r - r0 - r1];
                    if cost(&rs) < best.0 {
                        best = (cost(&rs), rs.to_vec());
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    best.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cells_carry_equal_density_mass(d in any_design(), k in 3usize..300) {
        let q = CompandingQuantizer::build(&d, k).unwrap();
        let mut prev = 0.0;
        for (i, p) in q.boundaries().iter().enumerate() {
            let c = d.compressor(*p);
            prop_assert!((c - prev - 1.0 / k as f64).abs() < 1e-6, "cell {i} of {k}: {}", c - prev);
            prev = c;
        }
        prop_assert!((1.0 - prev - 1.0 / k as f64).abs() < 1e-6);
    }

    #[test]
    fn compressor_round_trips(d in any_design(), u in 1e-6f64..(1.0 - 1e-6)) {
        let x = d.inv_compressor(u);
        prop_assert!((d.compressor(x) - u).abs() < 1e-8);
        let back = d.inv_compressor(d.compressor(x));
        prop_assert!((back - x).abs() < 1e-8 * x.abs().max(1.0), "{x} -> {back}");
    }

    #[test]
    fn encode_is_monotone_and_lands_in_its_cell(
        d in any_design(),
        k in 3usize..64,
        mut xs in prop::collection::vec(-20.0f64..20.0, 2..40),
    ) {
        let q = CompandingQuantizer::build(&d, k).unwrap();
        xs.sort_by(f64::total_cmp);
        let idx: Vec<usize> = xs.iter().map(|x| q.encode(*x).unwrap()).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        for (x, i) in xs.iter().zip(&idx) {
            let (lo, hi) = q.cell(*i).unwrap();
            prop_assert!(lo < *x && *x <= hi);
        }
    }

    #[test]
    fn allocation_matches_grid_search(
        logs in prop::collection::vec(-8.0f64..8.0, 2..=3),
        r in 0.5f64..8.0,
    ) {
        let a: Vec<f64> = logs.iter().map(|l| l.exp2()).collect();
        let alloc = allocate_rates(&a, r).unwrap();
        prop_assert!((alloc.rates.iter().sum::<f64>() - r).abs() < 1e-9);
        let step = if a.len() == 2 { 1e-3 } else { 4e-3 };
        let grid = grid_allocation(&a, r, step);
        for (x, y) in alloc.rates.iter().zip(&grid) {
            prop_assert!((x - y).abs() < 1e-2, "{:?} vs grid {:?}", alloc.rates, grid);
        }
    }
}

#[test]
fn clipped_allocation_example() {
    let alloc = allocate_rates(&[1.0, (-20f64).exp2()], 2.0).unwrap();
    assert_eq!(alloc.rates, vec![2.0, 0.0]);
    assert_eq!(
        grid_allocation(&[1.0, (-20f64).exp2()], 2.0, 1e-3),
        vec![2.0, 0.0]
    );
}
