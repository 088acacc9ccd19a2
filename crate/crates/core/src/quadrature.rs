//! Globally adaptive Gauss-Kronrod (10/21) quadrature on finite, semi-infinite
//! and infinite intervals, with optional interior breakpoints.

// Node tables keep their published digits.
#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::summation::Neumaier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol > 0.0) {
            return Err(crate::error::param("rel_tol", "must be positive"));
        }
        if !(abs_tol >= 0.0) {
            return Err(crate::error::param("abs_tol", "must be non-negative"));
        }
        Ok(Self {
            rel_tol,
            abs_tol,
            max_subdivisions: max_subdivisions.max(1),
        })
    }

    /// Same spec with the relative tolerance scaled, for inner integrals of a
    /// nested rule.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
    pub converged: bool,
}

impl Estimate {
    pub fn into_result(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::Quadrature {
                estimate: self.value,
                error: self.error,
                subdivisions: self.subdivisions,
            })
        }
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_600_525_405,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// One GK21 panel: (kronrod estimate, error estimate, rounding floor of the
/// error estimate).
fn gk21(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resg = 0.0;
    let mut resk = WGK[10] * fc;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(floor);
    }
    if !value.is_finite() {
        err = f64::INFINITY;
    }
    (value, err, floor)
}

struct Panel {
    seg: usize,
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    floor: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Errors below this are treated as met: relative control breaks down
/// once the integral itself is near the subnormal range.
const UNDERFLOW_TOL: f64 = 1e-280;

type Segment<'a> = (Box<dyn Fn(f64) -> f64 + 'a>, f64, f64);

/// Adaptive bisection over a list of finite segments, each with its own
/// integrand, sharing one global error budget.
fn adapt(segments: &[Segment<'_>], spec: &QuadratureSpec) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for (i, (g, a, b)) in segments.iter().enumerate() {
        if a == b {
            continue;
        }
        let (v, e, fl) = gk21(g.as_ref(), *a, *b);
        total += v;
        total_err += e;
        heap.push(Panel { seg: i, a: *a, b: *b, value: v, error: e, floor: fl });
    }
    let mut subdivisions = 0;
    let mut converged = false;
    loop {
        let tol = spec.abs_tol.max(spec.rel_tol * total.abs()).max(UNDERFLOW_TOL);
        if total_err <= tol {
            converged = true;
            break;
        }
        if subdivisions >= spec.max_subdivisions {
            break;
        }
        if subdivisions % 16 == 0 && subdivisions > 0 {
            // cancellation can leave an error floor above the request;
            // accept once every panel sits at its rounding floor
            let floor: f64 = heap.iter().map(|p| p.floor).sum();
            if total_err <= 2.0 * floor {
                converged = true;
                break;
            }
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // panel cannot be split further in floating point
            heap.push(Panel { error: 0.0, ..worst });
            total_err = heap.iter().map(|p| p.error).sum();
            subdivisions += 1;
            continue;
        }
        let g = segments[worst.seg].0.as_ref();
        let (v1, e1, f1) = gk21(g, worst.a, mid);
        let (v2, e2, f2) = gk21(g, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { seg: worst.seg, a: worst.a, b: mid, value: v1, error: e1, floor: f1 });
        heap.push(Panel { seg: worst.seg, a: mid, b: worst.b, value: v2, error: e2, floor: f2 });
        subdivisions += 1;
        if subdivisions % 64 == 0 {
            // refresh running sums to stop drift
            total_err = heap.iter().map(|p| p.error).sum();
            total = heap.iter().map(|p| p.value).collect::<Neumaier>().value();
        }
    }
    let value = heap.iter().map(|p| p.value).collect::<Neumaier>().value();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Estimate {
        value,
        error,
        subdivisions,
        converged: converged || error <= spec.abs_tol.max(spec.rel_tol * value.abs()).max(UNDERFLOW_TOL),
    }
}

/// Integrates `f` over `[a, b]`; either end may be infinite. Infinite ends
/// are mapped with `x = c ± scale·t/(1-t)`, where `scale` sets the length
/// at which the mapping puts half of its nodes.
pub fn integrate_scaled<F>(f: F, a: f64, b: f64, scale: f64, spec: &QuadratureSpec) -> Estimate
where
    F: Fn(f64) -> f64,
{
    integrate_breaks(f, &[a, b], scale, spec)
}

pub fn integrate<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Estimate
where
    F: Fn(f64) -> f64,
{
    integrate_scaled(f, a, b, 1.0, spec)
}

/// Integrates over consecutive panels `points[0]..points[1]..` (ascending;
/// the ends may be infinite). Breakpoints should sit where the integrand
/// has peaks or kinks.
pub fn integrate_breaks<F>(f: F, points: &[f64], scale: f64, spec: &QuadratureSpec) -> Estimate
where
    F: Fn(f64) -> f64,
{
    assert!(points.len() >= 2, "need at least two points");
    assert!(scale > 0.0);
    let f = &f;
    let mut segments: Vec<Segment<'_>> = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        assert!(a <= b, "breakpoints must be ascending");
        match (a.is_finite(), b.is_finite()) {
            (true, true) => segments.push((Box::new(f), a, b)),
            (true, false) => segments.push((
                Box::new(move |t: f64| {
                    let u = 1.0 - t;
                    f(a + scale * t / u) * scale / (u * u)
                }),
                0.0,
                1.0,
            )),
            (false, true) => segments.push((
                Box::new(move |t: f64| {
                    let u = 1.0 - t;
                    f(b - scale * t / u) * scale / (u * u)
                }),
                0.0,
                1.0,
            )),
            (false, false) => {
                segments.push((
                    Box::new(move |t: f64| {
                        let u = 1.0 - t;
                        f(-scale * t / u) * scale / (u * u)
                    }),
                    0.0,
                    1.0,
                ));
                segments.push((
                    Box::new(move |t: f64| {
                        let u = 1.0 - t;
                        f(scale * t / u) * scale / (u * u)
                    }),
                    0.0,
                    1.0,
                ));
            }
        }
    }
    adapt(&segments, spec)
}
