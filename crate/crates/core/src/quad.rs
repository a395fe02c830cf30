//! Adaptive Gauss–Kronrod quadrature for complex-valued integrands.
//!
//! Everything in the bath and kernel code bottoms out here: a 21-point
//! Kronrod rule with its embedded 10-point Gauss rule, a globally adaptive
//! driver that always bisects the interval with the largest error estimate,
//! and a semi-infinite variant built on the map `x = a + (1 - u) / u`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

/// Gauss weights attached to the odd-indexed Kronrod abscissae.
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// Error targets for an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel: 1e-9,
            abs: 1e-14,
            max_intervals: 4000,
        }
    }
}

impl Tolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self {
            rel,
            abs,
            ..Self::default()
        }
    }

    pub fn with_abs(self, abs: f64) -> Self {
        Self { abs, ..self }
    }

    fn target(&self, value: Complex64) -> f64 {
        self.abs.max(self.rel * value.norm())
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
}

/// One application of the 21-point Kronrod rule on `[a, b]`.
///
/// Returns the Kronrod value and a QUADPACK-style error estimate built from
/// the difference to the embedded Gauss rule.
pub fn gk21<F>(f: &mut F, a: f64, b: f64) -> (Complex64, f64)
where
    F: FnMut(f64) -> Complex64,
{
    let (value, err, _) = gk21_full(f, a, b);
    (value, err)
}

/// As [`gk21`], additionally returning the integral of `|f|`.
fn gk21_full<F>(f: &mut F, a: f64, b: f64) -> (Complex64, f64, f64)
where
    F: FnMut(f64) -> Complex64,
{
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fv = [Complex64::new(0.0, 0.0); 21];
    fv[10] = f(centre);
    for j in 0..10 {
        let dx = half * XGK[j];
        fv[j] = f(centre - dx);
        fv[20 - j] = f(centre + dx);
    }

    let mut kron = fv[10] * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    for j in 0..10 {
        kron += (fv[j] + fv[20 - j]) * WGK[j];
        if j % 2 == 1 {
            gauss += (fv[j] + fv[20 - j]) * WG[j / 2];
        }
    }
    let mean = kron * 0.5;
    let mut asc = WGK[10] * (fv[10] - mean).norm();
    let mut res_abs = WGK[10] * fv[10].norm();
    for j in 0..10 {
        asc += WGK[j] * ((fv[j] - mean).norm() + (fv[20 - j] - mean).norm());
        res_abs += WGK[j] * (fv[j].norm() + fv[20 - j].norm());
    }

    let scale = half.abs();
    let value = kron * half;
    let res_asc = asc * scale;
    let res_abs = res_abs * scale;
    let mut err = ((kron - gauss) * half).norm();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err, res_abs)
}

/// Nodes and weights of the 21-point Kronrod rule mapped to `[a, b]`.
pub fn kronrod_nodes(a: f64, b: f64) -> [(f64, f64); 21] {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(centre, WGK[10] * half); 21];
    for j in 0..10 {
        out[j] = (centre - half * XGK[j], WGK[j] * half);
        out[20 - j] = (centre + half * XGK[j], WGK[j] * half);
    }
    out
}

/// Composite 21-point Kronrod rule on `n` equal panels, without error control.
pub fn fixed_panels<F>(mut f: F, a: f64, b: f64, n: usize) -> Complex64
where
    F: FnMut(f64) -> Complex64,
{
    let width = (b - a) / n as f64;
    (0..n)
        .map(|k| {
            let lo = a + width * k as f64;
            gk21(&mut f, lo, lo + width).0
        })
        .sum()
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    magnitude: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: &Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Complex64,
{
    integrate_breaks(f, &[a, b], tol)
}

/// Globally adaptive integration with a prescribed initial partition.
///
/// `breaks` must be sorted; consecutive equal points are skipped.
pub fn integrate_breaks<F>(mut f: F, breaks: &[f64], tol: &Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Complex64,
{
    if breaks.len() < 2 {
        return Ok(Integral {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            evaluations: 0,
        });
    }
    let mut heap = BinaryHeap::new();
    let mut total = Complex64::new(0.0, 0.0);
    let mut total_err = 0.0;
    let mut magnitude = 0.0;
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        if w[1] == w[0] {
            continue;
        }
        let (value, error, mag) = gk21_full(&mut f, w[0], w[1]);
        evaluations += 21;
        total += value;
        total_err += error;
        magnitude += mag;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value,
            error,
            magnitude: mag,
        });
    }

    // Cancellation in oscillatory integrands caps the attainable accuracy
    // at a small multiple of eps * ∫|f|; asking for more only burns intervals.
    let target = |total: Complex64, magnitude: f64| {
        tol.target(total).max(200.0 * f64::EPSILON * magnitude)
    };
    while total_err > target(total, magnitude) {
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature {
                achieved: total_err,
                requested: tol.target(total),
                intervals: heap.len(),
            });
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // Interval cannot be split further in floating point.
            return Err(Error::Quadrature {
                achieved: total_err,
                requested: tol.target(total),
                intervals: heap.len() + 1,
            });
        }
        let (v1, e1, m1) = gk21_full(&mut f, worst.a, mid);
        let (v2, e2, m2) = gk21_full(&mut f, mid, worst.b);
        evaluations += 42;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        magnitude += m1 + m2 - worst.magnitude;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            magnitude: m1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            magnitude: m2,
        });
    }

    // Re-sum in interval order to shed the drift of the running updates
    // and keep the result independent of heap layout.
    let mut segments = heap.into_vec();
    segments.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = segments.iter().map(|s| s.value).sum();
    let error = segments.iter().map(|s| s.error).sum();
    Ok(Integral {
        value,
        error,
        evaluations,
    })
}

/// Adaptive integration over `[a, ∞)`.
///
/// The integrand must decay fast enough for the substitution
/// `x = a + (1 - u) / u` to yield an integrable function of `u` on `(0, 1]`.
pub fn integrate_semi_infinite<F>(mut f: F, a: f64, scale: f64, tol: &Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Complex64,
{
    // x = a + scale (1 - u) / u, dx = scale du / u²
    let g = move |u: f64| {
        if u <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let x = a + scale * (1.0 - u) / u;
        f(x) * (scale / (u * u))
    };
    integrate_breaks(g, &[0.0, 0.5, 1.0], tol)
}
