//! Radial potentials `V(|y|)` and the critical points of `s²V(s)`.

use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::path::Path;

use crate::error::{param, Error, Result};

pub trait RadialPotential: Send + Sync + Debug {
    fn value(&self, s: f64) -> f64;
    fn derivative(&self, s: f64) -> f64;
    /// Interval on which the potential is declared `C¹` and bounded.
    fn range(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }
    /// An upper bound for `sup V` on the range.
    fn sup(&self) -> f64;
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant of sampled values.
/// Outside the sample range it is extended by the end values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePotential {
    s: Vec<f64>,
    v: Vec<f64>,
    slopes: Vec<f64>,
}

impl TablePotential {
    pub fn new(s: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if s.len() != v.len() || s.len() < 2 {
            return Err(param("table", "need at least two (s, V) samples of equal length"));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(param("table", "radii must be strictly increasing"));
        }
        if v.iter().any(|x| !(*x >= 0.0)) {
            return Err(param("table", "values must be non-negative"));
        }
        let slopes = fritsch_carlson(&s, &v);
        Ok(Self { s, v, slopes })
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Io(e.to_string()))?;
        let (mut s, mut v) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            let parse = |i: usize| -> Option<f64> { rec.get(i)?.parse().ok() };
            match (parse(0), parse(1)) {
                (Some(a), Some(b)) => {
                    s.push(a);
                    v.push(b);
                }
                // a header row is allowed
                _ if s.is_empty() => continue,
                _ => return Err(param("table", format!("bad row {:?}", rec))),
            }
        }
        Self::new(s, v)
    }

    fn locate(&self, x: f64) -> usize {
        match self.s.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i.min(self.s.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.s.len() - 2),
        }
    }

    fn eval(&self, x: f64) -> (f64, f64) {
        let n = self.s.len();
        if x <= self.s[0] {
            return (self.v[0], 0.0);
        }
        if x >= self.s[n - 1] {
            return (self.v[n - 1], 0.0);
        }
        let i = self.locate(x);
        let h = self.s[i + 1] - self.s[i];
        let t = (x - self.s[i]) / h;
        let (y0, y1, m0, m1) = (self.v[i], self.v[i + 1], self.slopes[i], self.slopes[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let val = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * m1;
        let der = ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (3.0 * t2 - 2.0 * t) * m1;
        (val, der)
    }
}

fn fritsch_carlson(s: &[f64], v: &[f64]) -> Vec<f64> {
    let n = s.len();
    let delta: Vec<f64> = (0..n - 1).map(|i| (v[i + 1] - v[i]) / (s[i + 1] - s[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            // weighted harmonic mean keeps each cubic monotone
            let h0 = s[i] - s[i - 1];
            let h1 = s[i + 1] - s[i];
            let w1 = 2.0 * h1 + h0;
            let w2 = h1 + 2.0 * h0;
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Potential {
    /// `V ≡ c`.
    Constant { c: f64 },
    /// `(-4λ - N(N-2)) / (1+s²)²`.
    Bn { lambda: f64, n: usize },
    /// `a + b exp(-(s-c)²/w²)`.
    Bump { a: f64, b: f64, c: f64, w: f64 },
    Table(TablePotential),
    /// `factor · inner`.
    Scaled { factor: f64, inner: Box<Potential> },
}

impl Potential {
    pub fn bn(lambda: f64, n: usize) -> Result<Self> {
        let nf = n as f64;
        if !(lambda < -nf * (nf - 2.0) / 4.0) {
            return Err(param("lambda", format!("need lambda < -N(N-2)/4 = {}", -nf * (nf - 2.0) / 4.0)));
        }
        Ok(Potential::Bn { lambda, n })
    }

    pub fn bump(a: f64, b: f64, c: f64, w: f64) -> Result<Self> {
        if !(a >= 0.0) {
            return Err(param("a", "base must be non-negative"));
        }
        if !(w > 0.0) || !(c > 0.0) {
            return Err(param("w", "center and width must be positive"));
        }
        if b == 0.0 || !b.is_finite() {
            return Err(param("b", "amplitude must be finite and nonzero"));
        }
        if b < 0.0 && !(a + b > 0.0) {
            return Err(param("b", "negative amplitude must keep a + b > 0"));
        }
        Ok(Potential::Bump { a, b, c, w })
    }

    /// Bump whose `s²V(s)` is critical at `r0` with `V(r0) = v0`, for a
    /// given base `a` and width `w`. `a < v0` gives a maximum of `s²V`
    /// (positive amplitude); `a > v0` gives a dip, which for narrow enough
    /// `w` is a minimum.
    pub fn bump_critical_at(r0: f64, v0: f64, a: f64, w: f64) -> Result<Self> {
        if !(r0 > 0.0 && v0 > 0.0) || a == v0 {
            return Err(param("v0", "need r0 > 0, v0 > 0 and a != v0"));
        }
        // 2r0 V + r0² V' = 0 with V' = -2(r0-c)(v0-a)/w²
        let c = r0 - v0 * w * w / (r0 * (v0 - a));
        let b = (v0 - a) * ((r0 - c) * (r0 - c) / (w * w)).exp();
        Self::bump(a, b, c, w)
    }

    pub fn table(s: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Ok(Potential::Table(TablePotential::new(s, v)?))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Potential::Scaled {
            factor,
            inner: Box::new(self.clone()),
        }
    }
}

impl RadialPotential for Potential {
    fn value(&self, s: f64) -> f64 {
        match self {
            Potential::Constant { c } => *c,
            Potential::Bn { lambda, n } => {
                let nf = *n as f64;
                let q = 1.0 + s * s;
                (-4.0 * lambda - nf * (nf - 2.0)) / (q * q)
            }
            Potential::Bump { a, b, c, w } => a + b * (-(s - c) * (s - c) / (w * w)).exp(),
            Potential::Table(t) => t.eval(s).0,
            Potential::Scaled { factor, inner } => factor * inner.value(s),
        }
    }

    fn derivative(&self, s: f64) -> f64 {
        match self {
            Potential::Constant { .. } => 0.0,
            Potential::Bn { lambda, n } => {
                let nf = *n as f64;
                let q = 1.0 + s * s;
                -4.0 * s * (-4.0 * lambda - nf * (nf - 2.0)) / (q * q * q)
            }
            Potential::Bump { b, c, w, .. } => {
                -2.0 * (s - c) / (w * w) * b * (-(s - c) * (s - c) / (w * w)).exp()
            }
            Potential::Table(t) => t.eval(s).1,
            Potential::Scaled { factor, inner } => factor * inner.derivative(s),
        }
    }

    fn range(&self) -> (f64, f64) {
        match self {
            Potential::Table(t) => (t.s[0], *t.s.last().unwrap()),
            Potential::Scaled { inner, .. } => inner.range(),
            _ => (0.0, f64::INFINITY),
        }
    }

    fn sup(&self) -> f64 {
        match self {
            Potential::Constant { c } => *c,
            Potential::Bn { .. } => self.value(0.0),
            Potential::Bump { a, b, .. } => a + b.max(0.0),
            Potential::Table(t) => t.v.iter().cloned().fold(0.0, f64::max),
            Potential::Scaled { factor, inner } => factor.abs() * inner.sup(),
        }
    }
}

/// Serializable description of a potential, as found in a `[potential]`
/// config section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant { c: f64 },
    Bn { lambda: f64, n: usize },
    Bump { a: f64, b: f64, c: f64, w: f64 },
    /// Bump fixed by the location and value of the critical point of `s²V`.
    BumpAt { r0: f64, v0: f64, a: f64, w: f64 },
    Table { path: String },
}

pub fn make_potential(spec: &PotentialSpec) -> Result<Potential> {
    match spec {
        PotentialSpec::Constant { c } => {
            if !(*c >= 0.0) {
                return Err(param("c", "constant potential must be non-negative"));
            }
            Ok(Potential::Constant { c: *c })
        }
        PotentialSpec::Bn { lambda, n } => Potential::bn(*lambda, *n),
        PotentialSpec::Bump { a, b, c, w } => Potential::bump(*a, *b, *c, *w),
        PotentialSpec::BumpAt { r0, v0, a, w } => Potential::bump_critical_at(*r0, *v0, *a, *w),
        PotentialSpec::Table { path } => Ok(Potential::Table(TablePotential::from_csv(Path::new(path))?)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriticalKind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialCriticalPoint {
    pub r0: f64,
    pub kind: CriticalKind,
    pub value: f64,
    /// `(s²V)''(r0)`, estimated from the analytic first derivative.
    pub curvature: f64,
}

/// `d/ds [s² V(s)]`.
pub fn r2v_slope(v: &dyn RadialPotential, s: f64) -> f64 {
    2.0 * s * v.value(s) + s * s * v.derivative(s)
}

/// Roots of `d/ds[s²V]` in `bracket`, located on a uniform scan and polished
/// by bisection. Only points with `V(r0) > 0` are returned.
pub fn r2v_critical(v: &dyn RadialPotential, bracket: (f64, f64), tol: f64) -> Result<Vec<PotentialCriticalPoint>> {
    let (lo, hi) = bracket;
    let (rlo, rhi) = v.range();
    if !(lo < hi) || lo < rlo || hi > rhi || !hi.is_finite() {
        return Err(param("bracket", format!("need a finite bracket inside [{rlo}, {rhi}]")));
    }
    if !(tol > 0.0) {
        return Err(param("tol", "must be positive"));
    }
    const SCAN: usize = 2000;
    let g = |s: f64| r2v_slope(v, s);
    let mut out = Vec::new();
    let mut a = lo;
    let mut ga = g(a);
    for i in 1..=SCAN {
        let b = lo + (hi - lo) * i as f64 / SCAN as f64;
        let gb = g(b);
        if gb == 0.0 && ga != 0.0 {
            // root exactly on a scan node; classify by the sign just before
            let kind = if ga > 0.0 { CriticalKind::Max } else { CriticalKind::Min };
            push_root(v, &g, b, kind, tol, &mut out);
        } else if ga != 0.0 && gb != 0.0 && ga.signum() != gb.signum() {
            let root = bisect(&g, a, b, ga, tol);
            let kind = if ga > 0.0 { CriticalKind::Max } else { CriticalKind::Min };
            push_root(v, &g, root, kind, tol, &mut out);
        }
        a = b;
        ga = gb;
    }
    Ok(out)
}

fn push_root(
    v: &dyn RadialPotential,
    g: &dyn Fn(f64) -> f64,
    root: f64,
    kind: CriticalKind,
    tol: f64,
    out: &mut Vec<PotentialCriticalPoint>,
) {
    let step = (tol * 10.0).max(1e-6 * root.max(1.0));
    let curvature = (g(root + step) - g(root - step)) / (2.0 * step);
    let value = v.value(root);
    if value > 0.0 && root > 0.0 {
        out.push(PotentialCriticalPoint { r0: root, kind, value, curvature });
    }
}

fn bisect(g: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64, tol: f64) -> f64 {
    while b - a > tol {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
        if m <= a && m >= b {
            break;
        }
    }
    // secant polish inside the final bracket
    let gb = g(b);
    if gb != ga {
        let s = a - ga * (b - a) / (gb - ga);
        if s > a && s < b {
            return s;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bn_value_at_origin() {
        let v = Potential::bn(-10.0, 5).unwrap();
        assert_eq!(v.value(0.0), 25.0);
        assert!(Potential::bn(-3.75, 5).is_err());
        assert!(Potential::bn(-3.7, 5).is_err());
    }

    #[test]
    fn bump_peak() {
        let v = Potential::bump(0.0, 1.0, 1.0, 0.5).unwrap();
        assert_eq!(v.value(1.0), 1.0);
        assert_eq!(v.derivative(1.0), 0.0);
    }

    #[test]
    fn critical_points_examples() {
        let v = Potential::bump(0.05, 1.0, 1.0, 0.3).unwrap();
        let cps = r2v_critical(&v, (0.5, 2.0), 1e-12).unwrap();
        let maxes: Vec<_> = cps.iter().filter(|c| c.kind == CriticalKind::Max).collect();
        assert_eq!(maxes.len(), 1);
        assert!(maxes[0].r0 > 0.9 && maxes[0].r0 < 1.2);
        assert!(r2v_critical(&Potential::Constant { c: 1.0 }, (0.01, 10.0), 1e-10).unwrap().is_empty());
        let bn = Potential::bn(-10.0, 5).unwrap();
        let cps = r2v_critical(&bn, (0.2, 3.0), 1e-13).unwrap();
        assert_eq!(cps.len(), 1);
        assert!((cps[0].r0 - 1.0).abs() < 1e-12);
        assert_eq!(cps[0].kind, CriticalKind::Max);
    }

    #[test]
    fn bump_constructor_places_critical_point() {
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let Potential::Bump { c, b, .. } = v else { unreachable!() };
        assert!((c - 0.75).abs() < 1e-15);
        assert!((b - 0.25f64.exp()).abs() < 1e-14);
        assert!((v.value(1.0) - 1.0).abs() < 1e-15);
        assert!(r2v_slope(&v, 1.0).abs() < 1e-14);
        let cps = r2v_critical(&v, (0.5, 1.5), 1e-12).unwrap();
        assert!(cps.iter().any(|p| (p.r0 - 1.0).abs() < 1e-10 && p.kind == CriticalKind::Max));

        let dip = Potential::bump_critical_at(1.0, 1.0, 2.0, 0.3).unwrap();
        let cps = r2v_critical(&dip, (0.8, 1.2), 1e-12).unwrap();
        assert!(cps.iter().any(|p| (p.r0 - 1.0).abs() < 1e-10 && p.kind == CriticalKind::Min));
    }

    #[test]
    fn table_tracks_analytic_bump() {
        let bump = Potential::bump(0.0, 1.0, 1.0, 0.5).unwrap();
        let s: Vec<f64> = (0..200).map(|i| 0.4 + 1.2 * i as f64 / 199.0).collect();
        let v: Vec<f64> = s.iter().map(|x| bump.value(*x)).collect();
        let t = Potential::table(s, v).unwrap();
        for i in 0..=100 {
            let x = 0.5 + i as f64 / 100.0;
            assert!((t.value(x) - bump.value(x)).abs() < 1e-4);
        }
        assert!(Potential::table(vec![1.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(Potential::table(vec![0.0, 0.5], vec![1.0, -1.0]).is_err());
    }
}
