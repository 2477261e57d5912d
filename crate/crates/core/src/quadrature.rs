//! Adaptive Gauss–Kronrod quadrature over finite, semi-infinite, and infinite
//! intervals.
//!
//! Finite intervals use a global adaptive 21-point Kronrod rule. Infinite
//! tails are covered by panels of doubling width; a tail whose panel
//! contributions stop shrinking is reported as [`QuadError::Divergent`]
//! rather than silently truncated.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

// 21-point Kronrod abscissae; odd indices are the embedded 10-point Gauss nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_685_010_814,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadError {
    /// The integrand returned NaN or an infinity at `x`.
    NonFinite {
        x: f64,
    },
    /// Subdivision budget exhausted before the error target was met.
    MaxSubdivisions {
        estimate: f64,
        error: f64,
    },
    /// Tail panels stopped shrinking; the integral does not converge.
    Divergent {
        partial: f64,
        reached: f64,
    },
    InvalidInterval,
}

impl fmt::Display for QuadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuadError::NonFinite { x } => write!(f, "integrand not finite at x = {x}"),
            QuadError::MaxSubdivisions { estimate, error } => write!(
                f,
                "subdivision limit reached (estimate {estimate}, error {error})"
            ),
            QuadError::Divergent { partial, reached } => write!(
                f,
                "integral diverges (partial sum {partial} at |x| = {reached})"
            ),
            QuadError::InvalidInterval => f.write_str("invalid integration interval"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    /// Width of the first tail panel on infinite intervals.
    pub tail_scale: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-10,
            abs: 1e-15,
            tail_scale: 1.0,
            max_subdivisions: 4000,
        }
    }
}

impl Tolerance {
    pub fn with_rel(mut self, rel: f64) -> Self {
        self.rel = rel;
        self
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }

    pub fn with_tail_scale(mut self, scale: f64) -> Self {
        self.tail_scale = scale;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl core::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            error: self.error + rhs.error,
        }
    }
}

const ZERO: Estimate = Estimate {
    value: 0.0,
    error: 0.0,
};

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Estimate, QuadError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| -> Result<f64, QuadError> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadError::NonFinite { x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = eval(center - dx)? + eval(center + dx)?;
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Ok(Estimate {
        value: kronrod * half,
        error: libm::fabs((kronrod - gauss) * half),
    })
}

struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

fn adaptive_finite<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: &Tolerance,
) -> Result<Estimate, QuadError> {
    let first = kronrod21(f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, est: first });
    let mut total = first;
    let mut splits = 0usize;
    loop {
        if total.error <= libm::fmax(tol.abs, tol.rel * libm::fabs(total.value)) {
            break;
        }
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Interval cannot be split further in floating point.
            heap.push(worst);
            break;
        }
        if splits >= tol.max_subdivisions {
            heap.push(worst);
            let (value, error) = resum(&heap);
            return Err(QuadError::MaxSubdivisions {
                estimate: value,
                error,
            });
        }
        splits += 1;
        let left = kronrod21(f, worst.a, mid)?;
        let right = kronrod21(f, mid, worst.b)?;
        total.value += left.value + right.value - worst.est.value;
        total.error += left.error + right.error - worst.est.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            est: left,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            est: right,
        });
    }
    let (value, error) = resum(&heap);
    Ok(Estimate { value, error })
}

fn resum(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    panels
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.est.value, e + p.est.error))
}

const MIN_TAIL_PANELS: usize = 6;
const MAX_TAIL_PANELS: usize = 200;

/// Integrates `f` over `[a, ∞)` with doubling panels.
fn tail<F: Fn(f64) -> f64>(f: &F, a: f64, tol: &Tolerance) -> Result<Estimate, QuadError> {
    let scale = if tol.tail_scale > 0.0 {
        tol.tail_scale
    } else {
        1.0
    };
    let mut total = ZERO;
    let mut lo = a;
    let mut width = scale;
    let mut quiet = 0usize;
    let mut growing = 0usize;
    let mut prev = f64::NAN;
    for j in 0..MAX_TAIL_PANELS {
        let hi = lo + width;
        let est = adaptive_finite(f, lo, hi, tol)?;
        total = total + est;
        let mag = libm::fabs(est.value);
        let thresh = libm::fmax(tol.abs, tol.rel * libm::fabs(total.value));
        if mag <= thresh {
            quiet += 1;
        } else {
            quiet = 0;
        }
        if j >= MIN_TAIL_PANELS && quiet >= 2 {
            return Ok(total);
        }
        if prev.is_finite() && mag > thresh && mag >= 0.95 * prev {
            growing += 1;
        } else {
            growing = 0;
        }
        if j >= 20 && growing >= 10 {
            return Err(QuadError::Divergent {
                partial: total.value,
                reached: libm::fabs(hi),
            });
        }
        prev = mag;
        lo = hi;
        width *= 2.0;
    }
    Err(QuadError::Divergent {
        partial: total.value,
        reached: libm::fabs(lo),
    })
}

/// Integrates `f` over `(a, b)`; either end may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: &Tolerance,
) -> Result<Estimate, QuadError> {
    if a.is_nan() || b.is_nan() {
        return Err(QuadError::InvalidInterval);
    }
    if a == b {
        return Ok(ZERO);
    }
    if a > b {
        let e = integrate(f, b, a, tol)?;
        return Ok(Estimate {
            value: -e.value,
            error: e.error,
        });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive_finite(&f, a, b, tol),
        (true, false) => tail(&f, a, tol),
        (false, true) => tail(&|t: f64| f(-t), -b, tol),
        (false, false) => {
            let right = tail(&f, 0.0, tol)?;
            let left = tail(&|t: f64| f(-t), 0.0, tol)?;
            Ok(left + right)
        }
    }
}

/// Integrates over `(a, b)` split at every breakpoint strictly inside it.
pub fn integrate_split<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<Estimate, QuadError> {
    if a.is_nan() || b.is_nan() {
        return Err(QuadError::InvalidInterval);
    }
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut points: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut total = ZERO;
    let mut left = lo;
    for &p in points.iter().chain(core::iter::once(&hi)) {
        total = total + integrate(&f, left, p, tol)?;
        left = p;
    }
    Ok(Estimate {
        value: sign * total.value,
        error: total.error,
    })
}
