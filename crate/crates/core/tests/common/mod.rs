//! Exhaustive cell-by-cell fMSE, computed with a tanh-sinh rule that shares
//! no code with the library's adaptive quadrature.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use dfsq_core::computations::Computation;
use dfsq_core::{CompandingQuantizer, SourceModel};

const STEP: f64 = 1.0 / 64.0;
const REACH: f64 = 4.0;

/// Tanh-sinh rule on a finite interval.
fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let d = 0.5 * (b - a);
    let n = (REACH / STEP) as i64;
    let mut sum = 0.0;
    for i in -n..=n {
        let t = i as f64 * STEP;
        let u = FRAC_PI_2 * t.sinh();
        // distance to the nearer endpoint, kept exact near ±1
        let gap = 2.0 / (1.0 + (2.0 * u.abs()).exp());
        let x = if t >= 0.0 { b - d * gap } else { a + d * gap };
        if !(x > a && x < b) {
            continue;
        }
        let w = FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        let v = f(x);
        if v.is_finite() {
            sum += w * v;
        }
    }
    d * STEP * sum
}

/// `∫_a^b f`, either end possibly infinite, with interior split points.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, splits: &[f64]) -> f64 {
    let mut pts: Vec<f64> = splits
        .iter()
        .copied()
        .filter(|s| *s > a && *s < b)
        .collect();
    pts.sort_by(f64::total_cmp);
    let mut edges = vec![a];
    edges.extend(pts);
    edges.push(b);
    edges.windows(2).map(|w| piece(f, w[0], w[1])).sum()
}

fn piece(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (true, true) => tanh_sinh(f, a, b),
        // x = a + s/(1-s)
        (true, false) => tanh_sinh(
            &|s| {
                let r = 1.0 - s;
                f(a + s / r) / (r * r)
            },
            0.0,
            1.0,
        ),
        (false, true) => piece(&|x| f(-x), -b, f64::INFINITY),
        (false, false) => piece(f, a, 0.0) + piece(f, 0.0, b),
    }
}

fn scalar(g: &dyn Computation, x: &[f64]) -> f64 {
    let mut y = [0.0];
    g.eval_into(x, &mut y);
    y[0]
}

fn source_splits(src: &SourceModel) -> Vec<f64> {
    let mut s = src.breakpoints();
    s.push(src.median());
    s
}

/// `Σ_k ∫_{cell k} (g(x) - g(c_k))² f(x) dx`
pub fn cell_fmse_1d(src: &SourceModel, g: &dyn Computation, q: &CompandingQuantizer) -> f64 {
    let splits = source_splits(src);
    q.cells()
        .zip(q.codewords())
        .map(|((lo, hi), c)| {
            let gc = scalar(g, &[*c]);
            integrate(
                &|x| {
                    let e = scalar(g, &[x]) - gc;
                    e * e * src.pdf(x)
                },
                lo,
                hi,
                &splits,
            )
        })
        .sum()
}

/// Two-source version over the product of cells; the inner integral is split
/// on the diagonal so kinks of `min`-like computations sit on panel edges.
pub fn cell_fmse_2d(
    src: [&SourceModel; 2],
    g: &dyn Computation,
    q: [&CompandingQuantizer; 2],
) -> f64 {
    let outer_splits = source_splits(src[0]);
    let mut total = 0.0;
    for ((lo0, hi0), c0) in q[0].cells().zip(q[0].codewords()) {
        for ((lo1, hi1), c1) in q[1].cells().zip(q[1].codewords()) {
            let gc = scalar(g, &[*c0, *c1]);
            let inner = |x: f64| {
                let mut splits = source_splits(src[1]);
                splits.push(x);
                integrate(
                    &|y| {
                        let e = scalar(g, &[x, y]) - gc;
                        e * e * src[1].pdf(y)
                    },
                    lo1,
                    hi1,
                    &splits,
                )
            };
            total += integrate(&|x| inner(x) * src[0].pdf(x), lo0, hi0, &outer_splits);
        }
    }
    total
}
