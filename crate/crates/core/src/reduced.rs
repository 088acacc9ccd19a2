//! Reduced energy `F(r, h, μ)` of the ring ansatz: the main-term expansion,
//! its gradient, the parameter boxes and critical-point location.
//!
//! The optimiser works in scaled variables `u = (r, h k^a, μ k^{-b})` with
//! `a = (N-3)/(N-1)`, `b = (N-2)/(N-4)`, and on `(F - kA1) / k^{1-2b}`,
//! which is O(1) uniformly in `k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{eval_constants, ReductionConstants};
use crate::error::{param, Error, Result};
use crate::geometry::{Configuration, Dimension};
use crate::lattice::{sum_exact, RingKind, SumQuery, Weight};
use crate::optimize::{golden_min, minimize_box, BoxMinimum, BoxOptions, Bound};
use crate::potentials::RadialPotential;

/// Exponent `σ` used in the reported remainder budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderModel {
    pub sigma: f64,
}

impl Default for RemainderModel {
    fn default() -> Self {
        Self { sigma: 0.1 }
    }
}

impl RemainderModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(param("sigma", "need 0 < sigma < 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedTerms {
    #[serde(rename = "const")]
    pub constant: f64,
    pub potential: f64,
    pub same_ring: f64,
    pub cross_ring: f64,
}

impl ReducedTerms {
    /// Everything except the constant `kA1`.
    pub fn varying(&self) -> f64 {
        self.potential + self.same_ring + self.cross_ring
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedValue {
    #[serde(rename = "F")]
    pub value: f64,
    pub terms: ReducedTerms,
    pub remainder_budget: f64,
}

/// Which version of the two ring sums enters `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingSums {
    /// Closed-form leading laws (the main term).
    Leading,
    /// Exact finite lattice sums.
    Exact,
}

fn check_point(k: usize, r: f64, h: f64, mu: f64, vr: f64) -> Result<()> {
    if k < 2 {
        return Err(param("k", "need k >= 2"));
    }
    if !(r > 0.0) {
        return Err(param("r", "need r > 0"));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(param("h", format!("need 0 < h < 1, got {h}")));
    }
    if !(mu > 0.0) {
        return Err(param("mu", "need mu > 0"));
    }
    if !(vr > 0.0) {
        return Err(param("V", format!("need V(r) > 0, got {vr}")));
    }
    Ok(())
}

fn remainder_budget(n: f64, k: f64, h: f64, mu: f64, model: &RemainderModel) -> f64 {
    let s = model.sigma;
    k * (k / mu).powf(n - s) + k * k.powf(n - 4.0) * k.ln() / mu.powf(n - 2.0) + k / (mu.powf(n - 2.0) * h.powf(n - 2.0))
}

/// Main term of the energy expansion with its four pieces.
pub fn f_main(dim: Dimension, k: usize, r: f64, h: f64, mu: f64, v: &dyn RadialPotential, model: &RemainderModel) -> Result<ReducedValue> {
    let vr = v.value(r);
    check_point(k, r, h, mu, vr)?;
    model.validate()?;
    let c = eval_constants(dim);
    let (n, kf) = (dim.nf(), k as f64);
    let sq = (1.0 - h * h).sqrt();
    let mun = mu.powf(n - 2.0);
    let terms = ReducedTerms {
        constant: kf * c.a1,
        potential: kf * c.a2 * vr / (mu * mu),
        same_ring: -kf * c.b3(r) * kf.powf(n - 2.0) / (mun * sq.powf(n - 2.0)),
        cross_ring: -kf * c.b4(r) * kf / (mun * h.powf(n - 3.0) * sq),
    };
    Ok(assemble(terms, remainder_budget(n, kf, h, mu, model)))
}

fn assemble(terms: ReducedTerms, remainder_budget: f64) -> ReducedValue {
    ReducedValue {
        value: terms.constant + terms.potential + terms.same_ring + terms.cross_ring,
        terms,
        remainder_budget,
    }
}

/// Same structure as [`f_main`], with the ring terms taken from the exact
/// lattice sums at exponent `N-2`.
pub fn f_semi(cfg: &Configuration, v: &dyn RadialPotential, model: &RemainderModel) -> Result<ReducedValue> {
    f_semi_with(cfg, v, model, RingSums::Exact)
}

pub fn f_semi_with(cfg: &Configuration, v: &dyn RadialPotential, model: &RemainderModel, sums: RingSums) -> Result<ReducedValue> {
    if sums == RingSums::Leading {
        return f_main(cfg.dim, cfg.k, cfg.r, cfg.h, cfg.mu, v, model);
    }
    let vr = v.value(cfg.r);
    check_point(cfg.k, cfg.r, cfg.h, cfg.mu, vr)?;
    model.validate()?;
    let c = eval_constants(cfg.dim);
    let (n, kf) = (cfg.dim.nf(), cfg.k as f64);
    let alpha = n - 2.0;
    let same = sum_exact(&SumQuery::new(cfg, alpha, RingKind::Same, Weight::One))?;
    let cross = sum_exact(&SumQuery::new(cfg, alpha, RingKind::Cross, Weight::One))?;
    let scale = kf * c.b0 / cfg.mu.powf(n - 2.0);
    let terms = ReducedTerms {
        constant: kf * c.a1,
        potential: kf * c.a2 * vr / (cfg.mu * cfg.mu),
        same_ring: -scale * same,
        cross_ring: -scale * cross,
    };
    Ok(assemble(terms, remainder_budget(n, kf, cfg.h, cfg.mu, model)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedGradient {
    #[serde(rename = "dF_dr")]
    pub dr: f64,
    #[serde(rename = "dF_dh")]
    pub dh: f64,
    #[serde(rename = "dF_dmu")]
    pub dmu: f64,
}

/// Analytic partial derivatives of [`f_main`].
pub fn grad_main(dim: Dimension, k: usize, r: f64, h: f64, mu: f64, v: &dyn RadialPotential) -> Result<ReducedGradient> {
    let vr = v.value(r);
    check_point(k, r, h, mu, vr)?;
    let c = eval_constants(dim);
    Ok(gradient_terms(&c, k, r, h, mu, vr, v.derivative(r)))
}

fn gradient_terms(c: &ReductionConstants, k: usize, r: f64, h: f64, mu: f64, vr: f64, dvr: f64) -> ReducedGradient {
    let (n, kf) = (c.n as f64, k as f64);
    let c2 = 1.0 - h * h;
    let sq = c2.sqrt();
    let mun = mu.powf(n - 2.0);
    let (b3, b4) = (c.b3(r), c.b4(r));
    // magnitudes of the two ring terms divided by k
    let same = b3 * kf.powf(n - 2.0) / (mun * sq.powf(n - 2.0));
    let cross = b4 * kf / (mun * h.powf(n - 3.0) * sq);
    ReducedGradient {
        dr: kf * (c.a2 * dvr / (mu * mu) + (n - 2.0) / r * (same + cross)),
        dh: kf * (-(n - 2.0) * same * h / c2 + (n - 3.0) * cross / h - cross * h / c2),
        dmu: kf * (-2.0 * c.a2 * vr / (mu * mu * mu) + (n - 2.0) / mu * (same + cross)),
    }
}

/// Relative residuals of the two dominant balances at `(H0, Λ0(r))`, each
/// divided by the largest term of its balance, followed by `H0²`.
///
/// The h-balance is the full `dF/dh` bracket; the μ-balance keeps only the
/// potential and same-ring pieces of `dF/dμ`, since the cross-ring piece is
/// of lower order in `k` rather than an O(h²) correction.
pub fn stationarity_residuals(dim: Dimension, k: usize, r: f64, v: &dyn RadialPotential) -> Result<(f64, f64, f64)> {
    let c = eval_constants(dim);
    let vr = v.value(r);
    let (n, kf) = (dim.nf(), k as f64);
    let h = c.h0() * kf.powf(-dim.h_exponent());
    let mu = c.mu0(r, vr) * kf.powf(dim.mu_exponent());
    check_point(k, r, h, mu, vr)?;
    let g = gradient_terms(&c, k, r, h, mu, vr, 0.0);
    let c2 = 1.0 - h * h;
    let mun = mu.powf(n - 2.0);
    let same = c.b3(r) * kf.powf(n - 2.0) / (mun * c2.sqrt().powf(n - 2.0));
    let cross = c.b4(r) * kf / (mun * h.powf(n - 3.0) * c2.sqrt());
    let h_scale = ((n - 2.0) * same * h / c2).max((n - 3.0) * cross / h);
    let pot = 2.0 * c.a2 * vr / mu.powi(3);
    let ring = (n - 2.0) * same / mu;
    Ok(((g.dh / kf).abs() / h_scale, (ring - pot).abs() / pot.max(ring), h * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Half-widths of the box in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisWidths {
    pub r: f64,
    pub h: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WidthMode {
    /// One width `σ̂` for every axis.
    Fixed { sigma: f64 },
    PerAxis(AxisWidths),
    /// `σ̃ = k^{-2(N²-7N+9)/((N-4)(N-1))}`; when that exponent is not
    /// positive the fallback widths are used instead.
    Shrinking { fallback: AxisWidths },
}

/// Exponent `e` in `σ̃ = k^{-e}`.
pub fn shrink_exponent(dim: Dimension) -> f64 {
    let n = dim.nf();
    2.0 * (n * n - 7.0 * n + 9.0) / ((n - 4.0) * (n - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterBox {
    #[serde(rename = "N")]
    pub dim: Dimension,
    pub k: usize,
    pub r0: f64,
    pub h0: f64,
    pub mu0: f64,
    pub widths: AxisWidths,
    /// `σ̃` when the shrinking box was requested.
    pub sigma_tilde: Option<f64>,
    /// Set when the shrinking exponent is not positive and the fallback
    /// widths were used.
    pub exponent_anomaly: bool,
    pub r: Interval,
    pub h: Interval,
    pub mu: Interval,
}

pub const FACE_NAMES: [&str; 6] = ["r_lo", "r_hi", "h_lo", "h_hi", "mu_lo", "mu_hi"];

impl ParameterBox {
    fn h_scale(&self) -> f64 {
        (self.k as f64).powf(self.dim.h_exponent())
    }
    fn mu_scale(&self) -> f64 {
        (self.k as f64).powf(-self.dim.mu_exponent())
    }
    pub fn to_scaled(&self, x: [f64; 3]) -> [f64; 3] {
        [x[0], x[1] * self.h_scale(), x[2] * self.mu_scale()]
    }
    pub fn from_scaled(&self, u: [f64; 3]) -> [f64; 3] {
        [u[0], u[1] / self.h_scale(), u[2] / self.mu_scale()]
    }
    pub fn scaled_lo(&self) -> [f64; 3] {
        [self.r0 - self.widths.r, self.h0 - self.widths.h, self.mu0 - self.widths.mu]
    }
    pub fn scaled_hi(&self) -> [f64; 3] {
        [self.r0 + self.widths.r, self.h0 + self.widths.h, self.mu0 + self.widths.mu]
    }
    pub fn center(&self) -> [f64; 3] {
        [self.r.mid(), self.h.mid(), self.mu.mid()]
    }
    pub fn contains(&self, x: [f64; 3]) -> bool {
        self.r.contains(x[0]) && self.h.contains(x[1]) && self.mu.contains(x[2])
    }
    /// Signed distances to the six faces in scaled units, divided by the
    /// axis width; in the order of [`FACE_NAMES`].
    pub fn margins(&self, x: [f64; 3]) -> [f64; 6] {
        let u = self.to_scaled(x);
        let (lo, hi) = (self.scaled_lo(), self.scaled_hi());
        let w = [self.widths.r, self.widths.h, self.widths.mu];
        let mut out = [0.0; 6];
        for i in 0..3 {
            out[2 * i] = (u[i] - lo[i]) / w[i];
            out[2 * i + 1] = (hi[i] - u[i]) / w[i];
        }
        out
    }
}

/// Builds the parameter box around `(r0, h0, μ0(r0))`.
pub fn make_boxes(dim: Dimension, k: usize, r0: f64, v: &dyn RadialPotential, mode: WidthMode) -> Result<ParameterBox> {
    let vr = v.value(r0);
    if !(vr > 0.0) || !(r0 > 0.0) {
        return Err(param("r0", format!("need r0 > 0 and V(r0) > 0, got V = {vr}")));
    }
    if k < 2 {
        return Err(param("k", "need k >= 2"));
    }
    let c = eval_constants(dim);
    let (h0, mu0) = (c.h0(), c.mu0(r0, vr));
    let kf = k as f64;
    let (widths, sigma_tilde, anomaly) = match mode {
        WidthMode::Fixed { sigma } => (AxisWidths { r: sigma, h: sigma, mu: sigma }, None, false),
        WidthMode::PerAxis(w) => (w, None, false),
        WidthMode::Shrinking { fallback } => {
            let e = shrink_exponent(dim);
            let st = kf.powf(-e);
            if e <= 0.0 {
                (fallback, Some(st), true)
            } else {
                let lim = 0.5 * h0.min(mu0).min(r0);
                if !(st < lim) {
                    return Err(Error::Infeasible(format!(
                        "sigma_tilde = {st:.4} must be below min(h0, mu0, r0)/2 = {lim:.4}; increase k"
                    )));
                }
                (AxisWidths { r: st, h: st, mu: st }, Some(st), false)
            }
        }
    };
    for (name, w, centre) in [("r", widths.r, r0), ("h", widths.h, h0), ("mu", widths.mu, mu0)] {
        if !(w > 0.0) {
            return Err(Error::Infeasible(format!("{name} width must be positive")));
        }
        if !(w < centre) {
            return Err(Error::Infeasible(format!("{name} width {w} must be below the centre value {centre}")));
        }
    }
    let hs = kf.powf(-dim.h_exponent());
    let ms = kf.powf(dim.mu_exponent());
    let bx = ParameterBox {
        dim,
        k,
        r0,
        h0,
        mu0,
        widths,
        sigma_tilde,
        exponent_anomaly: anomaly,
        r: Interval { lo: r0 - widths.r, hi: r0 + widths.r },
        h: Interval { lo: (h0 - widths.h) * hs, hi: (h0 + widths.h) * hs },
        mu: Interval { lo: (mu0 - widths.mu) * ms, hi: (mu0 + widths.mu) * ms },
    };
    if !(bx.h.hi < 1.0) {
        return Err(Error::Infeasible(format!("upper h bound {} must be below 1; increase k", bx.h.hi)));
    }
    for r in [bx.r.lo, bx.r.hi] {
        if !(v.value(r) > 0.0) {
            return Err(Error::Infeasible(format!("V must stay positive on the r interval, V({r}) <= 0")));
        }
    }
    Ok(bx)
}

/// `(F - kA1)/k^{1-2b}` and its gradient in scaled variables.
pub fn scaled_objective(bx: &ParameterBox, v: &dyn RadialPotential, u: [f64; 3]) -> (f64, [f64; 3]) {
    let x = bx.from_scaled(u);
    let c = eval_constants(bx.dim);
    let (n, kf) = (bx.dim.nf(), bx.k as f64);
    let (r, h, mu) = (x[0], x[1], x[2]);
    let vr = v.value(r);
    let sq = (1.0 - h * h).sqrt();
    let mun = mu.powf(n - 2.0);
    let varying = c.a2 * vr / (mu * mu)
        - c.b3(r) * kf.powf(n - 2.0) / (mun * sq.powf(n - 2.0))
        - c.b4(r) * kf / (mun * h.powf(n - 3.0) * sq);
    let scale = kf.powf(-2.0 * bx.dim.mu_exponent());
    let g = gradient_terms(&c, bx.k, r, h, mu, vr, v.derivative(r));
    let gs = 1.0 / (kf * scale);
    (
        varying / scale,
        [g.dr * gs, g.dh * gs / bx.h_scale(), g.dmu * gs / bx.mu_scale()],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Maximum over the whole box.
    Max,
    /// Max over `(h, μ)`, then min over `r`.
    Minmax,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub mode: SolveMode,
    pub r_star: f64,
    pub h_star: f64,
    pub mu_star: f64,
    #[serde(rename = "F")]
    pub value: f64,
    pub gradient: ReducedGradient,
    /// Max-norm of the gradient in box coordinates (`[-1, 1]` per axis),
    /// relative to the varying part of `F` at the box centre.
    pub grad_norm: f64,
    pub solver_tol: f64,
    /// Relative margins to the faces, in the order `r_lo, r_hi, h_lo, h_hi, mu_lo, mu_hi`.
    pub margins: [f64; 6],
    pub h_scaled: f64,
    pub mu_scaled: f64,
    pub h_residual: f64,
    pub mu_residual: f64,
    pub h_rel_residual: f64,
    pub mu_rel_residual: f64,
    pub iterations: usize,
}

/// Tolerance on the scaled gradient for accepted critical points.
pub const SOLVER_TOL: f64 = 1e-9;

fn face_of(active: &[Option<Bound>]) -> Option<String> {
    active.iter().enumerate().find_map(|(i, a)| {
        a.map(|b| FACE_NAMES[2 * i + usize::from(b == Bound::Upper)].to_string())
    })
}

/// Box coordinates `t ∈ [-1, 1]³` around the scaled centre, with the
/// objective negated and divided by its magnitude at the centre.
pub(crate) struct Normalized<'a> {
    bx: &'a ParameterBox,
    v: &'a dyn RadialPotential,
    centre: [f64; 3],
    w: [f64; 3],
    pub(crate) norm: f64,
}

impl<'a> Normalized<'a> {
    pub(crate) fn new(bx: &'a ParameterBox, v: &'a dyn RadialPotential) -> Self {
        let centre = [bx.r0, bx.h0, bx.mu0];
        let (g0, _) = scaled_objective(bx, v, centre);
        Self {
            bx,
            v,
            centre,
            w: [bx.widths.r, bx.widths.h, bx.widths.mu],
            norm: g0.abs().max(f64::MIN_POSITIVE),
        }
    }
    pub(crate) fn to_u(&self, t: &[f64]) -> [f64; 3] {
        [0, 1, 2].map(|i| self.centre[i] + self.w[i] * t[i])
    }
    pub(crate) fn to_t(&self, r: f64) -> f64 {
        (r - self.centre[0]) / self.w[0]
    }
    pub(crate) fn eval(&self, t: &[f64]) -> (f64, Vec<f64>) {
        let (val, g) = scaled_objective(self.bx, self.v, self.to_u(t));
        (-val / self.norm, (0..3).map(|i| -g[i] * self.w[i] / self.norm).collect())
    }
}

fn solver_options() -> BoxOptions {
    BoxOptions { grad_tol: 0.1 * SOLVER_TOL, ..Default::default() }
}

/// Maximises over `(h, μ)` at fixed `r`.
fn inner_max(nz: &Normalized, r: f64) -> Result<BoxMinimum> {
    let tr = nz.to_t(r);
    let f = |t: &[f64]| {
        let (val, mut g) = nz.eval(t);
        g[0] = 0.0;
        (val, g)
    };
    minimize_box(f, &[tr, 0.0, 0.0], &[tr, -1.0, -1.0], &[tr, 1.0, 1.0], &solver_options())
}

/// Locates the critical point of the main term inside `bx`.
pub fn solve_critical(bx: &ParameterBox, v: &dyn RadialPotential, mode: SolveMode) -> Result<CriticalPoint> {
    let nz = Normalized::new(bx, v);
    let (t, iterations) = match mode {
        SolveMode::Max => {
            let m = minimize_box(|t: &[f64]| nz.eval(t), &[0.0; 3], &[-1.0; 3], &[1.0; 3], &solver_options())?;
            if let Some(face) = face_of(&m.active) {
                return Err(Error::BoundaryExtremum { face });
            }
            (m.x, m.iterations)
        }
        SolveMode::Minmax => {
            const GRID: usize = 21;
            let (lo, hi) = (bx.r.lo, bx.r.hi);
            let rs: Vec<f64> = (0..GRID).map(|i| lo + (hi - lo) * i as f64 / (GRID - 1) as f64).collect();
            let vals: Vec<Result<f64>> = rs.par_iter().map(|&r| inner_max(&nz, r).map(|m| -m.value)).collect();
            let vals = vals.into_iter().collect::<Result<Vec<f64>>>()?;
            let imin = (0..GRID).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
            if imin == 0 || imin == GRID - 1 {
                return Err(Error::BoundaryExtremum { face: FACE_NAMES[usize::from(imin != 0)].into() });
            }
            // d/dr of the inner maximum is ∂F/∂r at the maximiser
            let slope = |r: f64| inner_max(&nz, r).map(|m| -nz.eval(&m.x).1[0]);
            let (mut a, mut b) = (rs[imin - 1], rs[imin + 1]);
            let (sa, sb) = (slope(a)?, slope(b)?);
            let r_star = if sa < 0.0 && sb > 0.0 {
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if slope(mid)? < 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            } else {
                let outer = |r: f64| inner_max(&nz, r).map(|m| -m.value).unwrap_or(f64::INFINITY);
                golden_min(outer, a, b, 1e-12).0
            };
            let m = inner_max(&nz, r_star)?;
            // r is pinned with a zero gradient entry, so only h/μ faces can show up
            if let Some(face) = face_of(&m.active) {
                return Err(Error::BoundaryExtremum { face });
            }
            (m.x, m.iterations)
        }
    };
    let (_, gt) = nz.eval(&t);
    let grad_norm = gt.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let x = bx.from_scaled(nz.to_u(&t));
    let (r, h, mu) = (x[0], x[1], x[2]);
    let fv = f_main(bx.dim, bx.k, r, h, mu, v, &RemainderModel::default())?;
    let gradient = grad_main(bx.dim, bx.k, r, h, mu, v)?;
    let u = bx.to_scaled(x);
    Ok(CriticalPoint {
        mode,
        r_star: r,
        h_star: h,
        mu_star: mu,
        value: fv.value,
        gradient,
        grad_norm,
        solver_tol: SOLVER_TOL,
        margins: bx.margins(x),
        h_scaled: u[1],
        mu_scaled: u[2],
        h_residual: (u[1] - bx.h0).abs(),
        mu_residual: (u[2] - bx.mu0).abs(),
        h_rel_residual: (u[1] - bx.h0).abs() / bx.h0,
        mu_rel_residual: (u[2] - bx.mu0).abs() / bx.mu0,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaceSignCount {
    pub face: &'static str,
    pub expected_sign: i8,
    pub points: usize,
    pub agreeing: usize,
}

/// Checks the sign of `dF/dh` on the two h-faces and of `dF/dμ` on the
/// two μ-faces over a `grid × grid` lattice of the remaining two axes.
/// Expected: positive on lower faces, negative on upper faces.
pub fn face_signs(bx: &ParameterBox, v: &dyn RadialPotential, grid: usize) -> Result<Vec<FaceSignCount>> {
    if grid < 2 {
        return Err(param("grid", "need at least 2 points per axis"));
    }
    let lin = |iv: Interval, i: usize| iv.lo + (iv.hi - iv.lo) * i as f64 / (grid - 1) as f64;
    let mut out = Vec::with_capacity(4);
    for (face, sign) in [("h_lo", 1i8), ("h_hi", -1), ("mu_lo", 1), ("mu_hi", -1)] {
        let mut agreeing = 0;
        for i in 0..grid {
            for j in 0..grid {
                let r = lin(bx.r, i);
                let (h, mu, on_h) = match face {
                    "h_lo" => (bx.h.lo, lin(bx.mu, j), true),
                    "h_hi" => (bx.h.hi, lin(bx.mu, j), true),
                    "mu_lo" => (lin(bx.h, j), bx.mu.lo, false),
                    _ => (lin(bx.h, j), bx.mu.hi, false),
                };
                let g = grad_main(bx.dim, bx.k, r, h, mu, v)?;
                let d = if on_h { g.dh } else { g.dmu };
                if d * sign as f64 > 0.0 {
                    agreeing += 1;
                }
            }
        }
        out.push(FaceSignCount { face, expected_sign: sign, points: grid * grid, agreeing });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Potential;

    fn d(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn terms_sum_to_value() {
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let f = f_main(d(5), 64, 1.0, 0.2, 2e4, &v, &RemainderModel::default()).unwrap();
        let c = eval_constants(d(5));
        assert_eq!(f.terms.constant, 64.0 * c.a1);
        let sum = f.terms.constant + f.terms.potential + f.terms.same_ring + f.terms.cross_ring;
        assert_eq!(f.value, sum);
    }

    #[test]
    fn doubling_mu_scales_terms() {
        let v = Potential::Constant { c: 2.0 };
        let m = RemainderModel::default();
        for n in [5, 6, 7] {
            let a = f_main(d(n), 40, 1.0, 0.1, 1e3, &v, &m).unwrap();
            let b = f_main(d(n), 40, 1.0, 0.1, 2e3, &v, &m).unwrap();
            let p = 2f64.powf(-(n as f64 - 2.0));
            assert!((b.terms.potential / a.terms.potential - 0.25).abs() < 1e-14);
            assert!((b.terms.same_ring / a.terms.same_ring - p).abs() < 1e-14);
            assert!((b.terms.cross_ring / a.terms.cross_ring - p).abs() < 1e-14);
        }
    }

    #[test]
    fn h_zero_rejected() {
        let v = Potential::Constant { c: 1.0 };
        assert!(f_main(d(5), 8, 1.0, 0.0, 10.0, &v, &RemainderModel::default()).is_err());
    }

    #[test]
    fn semi_leading_switch_matches_main() {
        let v = Potential::Constant { c: 1.5 };
        let m = RemainderModel::default();
        let cfg = Configuration::new(d(6), 50, 1.2, 0.15, 400.0).unwrap();
        let a = f_semi_with(&cfg, &v, &m, RingSums::Leading).unwrap();
        let b = f_main(d(6), 50, 1.2, 0.15, 400.0, &v, &m).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_matches_differences() {
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let m = RemainderModel::default();
        let (r, h, mu, k) = (1.05, 0.12, 3e3, 30);
        let g = grad_main(d(6), k, r, h, mu, &v).unwrap();
        let f = |r: f64, h: f64, mu: f64| f_main(d(6), k, r, h, mu, &v, &m).unwrap().terms.varying();
        let fd = |e: f64| {
            [
                (f(r + e * r, h, mu) - f(r - e * r, h, mu)) / (2.0 * e * r),
                (f(r, h + e * h, mu) - f(r, h - e * h, mu)) / (2.0 * e * h),
                (f(r, h, mu + e * mu) - f(r, h, mu - e * mu)) / (2.0 * e * mu),
            ]
        };
        let num = fd(1e-5);
        for (a, b) in [g.dr, g.dh, g.dmu].iter().zip(num) {
            assert!((a - b).abs() < 1e-7 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn shrink_exponent_values() {
        assert!((shrink_exponent(d(5)) + 0.5).abs() < 1e-15);
        assert!((shrink_exponent(d(6)) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn n5_shrinking_box_falls_back() {
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let fb = AxisWidths { r: 0.1, h: 0.5, mu: 0.03 };
        let bx = make_boxes(d(5), 64, 1.0, &v, WidthMode::Shrinking { fallback: fb }).unwrap();
        assert!(bx.exponent_anomaly);
        assert_eq!(bx.widths, fb);
    }

    #[test]
    fn boxes_nest() {
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let fixed = make_boxes(d(6), 4096, 1.0, &v, WidthMode::Fixed { sigma: 0.1 }).unwrap();
        let fb = AxisWidths { r: 0.1, h: 0.1, mu: 0.1 };
        let tight = make_boxes(d(6), 4096, 1.0, &v, WidthMode::Shrinking { fallback: fb }).unwrap();
        assert!(!tight.exponent_anomaly);
        assert!(fixed.r.lo < tight.r.lo && tight.r.hi < fixed.r.hi);
        assert!(fixed.h.lo < tight.h.lo && tight.h.hi < fixed.h.hi);
        assert!(fixed.mu.lo < tight.mu.lo && tight.mu.hi < fixed.mu.hi);
    }

    #[test]
    fn small_k_infeasible() {
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let fb = AxisWidths { r: 0.1, h: 0.1, mu: 0.1 };
        let e = make_boxes(d(6), 2, 1.0, &v, WidthMode::Shrinking { fallback: fb }).unwrap_err();
        assert!(matches!(e, Error::Infeasible(_)));
    }

    #[test]
    fn stationarity_at_closed_forms() {
        let v = Potential::Constant { c: 1.0 };
        for n in [5, 6] {
            for k in [64, 256, 1024] {
                let (rh, rm, h2) = stationarity_residuals(d(n), k, 1.0, &v).unwrap();
                assert!(rh < 3.0 * h2 && rm < 3.0 * h2, "N={n} k={k}: {rh} {rm} {h2}");
            }
        }
    }

    #[test]
    fn max_mode_interior() {
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let c = eval_constants(d(5));
        let w = AxisWidths { r: 0.2, h: 0.5 * c.h0(), mu: 0.5 * c.mu0(1.0, 1.0) };
        let bx = make_boxes(d(5), 256, 1.0, &v, WidthMode::PerAxis(w)).unwrap();
        let cp = solve_critical(&bx, &v, SolveMode::Max).unwrap();
        assert!(cp.grad_norm < SOLVER_TOL, "{cp:?}");
        assert!(cp.margins.iter().all(|m| *m > 0.0));
        assert!((cp.r_star - 1.0).abs() < 0.05);
    }

    #[test]
    fn narrow_box_reports_face() {
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let c = eval_constants(d(5));
        // shift the centre well away from the optimum along h
        let w = AxisWidths { r: 0.2, h: 0.01, mu: 0.5 * c.mu0(1.0, 1.0) };
        let mut bx = make_boxes(d(5), 256, 1.0, &v, WidthMode::PerAxis(w)).unwrap();
        bx.h0 *= 0.5;
        let hs = 256f64.powf(-0.5);
        bx.h = Interval { lo: (bx.h0 - 0.01) * hs, hi: (bx.h0 + 0.01) * hs };
        let e = solve_critical(&bx, &v, SolveMode::Max).unwrap_err();
        assert_eq!(e, Error::BoundaryExtremum { face: "h_hi".into() });
    }

    #[test]
    fn critical_value_follows_a3_law() {
        // varying part at the critical point ≈ k A3 (r0²V(r0))^{(N-2)/(N-4)} k^{-2(N-2)/(N-4)}
        for (n, v0) in [(6usize, 2.0), (7, 0.5)] {
            let v = Potential::bump_critical_at(1.0, v0, 0.0, 0.5).unwrap();
            let bx = make_boxes(d(n), 1 << 14, 1.0, &v, WidthMode::Fixed { sigma: 0.05 }).unwrap();
            let cp = solve_critical(&bx, &v, SolveMode::Max).unwrap();
            let f = f_main(d(n), bx.k, cp.r_star, cp.h_star, cp.mu_star, &v, &RemainderModel::default()).unwrap();
            let c = eval_constants(d(n));
            let (kf, b) = (bx.k as f64, d(n).mu_exponent());
            let law = kf * c.a3() * v0.powf(b) * kf.powf(-2.0 * b);
            assert!((f.terms.varying() / law - 1.0).abs() < 0.02, "N={n}: {} vs {law}", f.terms.varying());
        }
    }
}
