//! Closed-form scalars of the energy expansion and their independent checks.

use serde::Serialize;
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{param, Error, Result};
use crate::geometry::Dimension;
use crate::potentials::RadialPotential;
use crate::quadrature::{integrate, QuadratureSpec};
use crate::special::{gamma, half_line_bump_integral, power_bump_integral, sphere_area, zeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReductionConstants {
    #[serde(rename = "N")]
    pub n: usize,
    /// `(2/N) ∫ U^{2*}`.
    pub a1: f64,
    /// `∫ U²`.
    pub a2: f64,
    /// `C_N^{2*} ∫ (1+|z|²)^{-(N+2)/2}`.
    pub b0: f64,
    /// `2 ζ(N-2) / (2π)^{N-2}`.
    pub b1: f64,
    /// `∫_0^∞ (1+z²)^{-(N-2)/2} dz / (2^{N-3} π)`.
    pub b2: f64,
}

const CACHED_MAX_N: usize = 16;

fn cache() -> &'static [ReductionConstants] {
    static CACHE: OnceLock<Vec<ReductionConstants>> = OnceLock::new();
    CACHE.get_or_init(|| {
        (5..=CACHED_MAX_N)
            .map(|n| compute(Dimension::new(n).unwrap()))
            .collect()
    })
}

fn compute(dim: Dimension) -> ReductionConstants {
    let n = dim.n();
    let nf = dim.nf();
    let c = dim.cn();
    let c_crit = c.powf(dim.crit());
    ReductionConstants {
        n,
        a1: 2.0 / nf * c_crit * power_bump_integral(n, nf),
        a2: c * c * power_bump_integral(n, nf - 2.0),
        b0: c_crit * power_bump_integral(n, (nf + 2.0) / 2.0),
        b1: 2.0 * zeta(nf - 2.0) / (2.0 * PI).powf(nf - 2.0),
        b2: half_line_bump_integral(dim.m()) / (2f64.powf(nf - 3.0) * PI),
    }
}

pub fn eval_constants(dim: Dimension) -> ReductionConstants {
    if dim.n() <= CACHED_MAX_N {
        cache()[dim.n() - 5]
    } else {
        compute(dim)
    }
}

impl ReductionConstants {
    pub fn dim(&self) -> Dimension {
        Dimension::new(self.n).expect("constructed from a valid dimension")
    }

    pub fn b3(&self, r: f64) -> f64 {
        self.b0 * self.b1 / r.powf(self.n as f64 - 2.0)
    }

    pub fn b4(&self, r: f64) -> f64 {
        self.b0 * self.b2 / r.powf(self.n as f64 - 2.0)
    }

    pub fn a3(&self) -> f64 {
        let nf = self.n as f64;
        (nf - 4.0) * self.a2 / (nf - 2.0)
            * (2.0 * self.a2 / ((nf - 2.0) * self.b0 * self.b1)).powf(2.0 / (nf - 4.0))
    }

    pub fn h0(&self) -> f64 {
        let nf = self.n as f64;
        ((nf - 3.0) * self.b2 / ((nf - 2.0) * self.b1)).powf(1.0 / (nf - 1.0))
    }

    /// `μ0` for a given potential value `v = V(r)` at radius `r`.
    pub fn mu0(&self, r: f64, v: f64) -> f64 {
        let nf = self.n as f64;
        ((nf - 2.0) * self.b0 * self.b1 / (2.0 * self.a2 * v * r.powf(nf - 2.0))).powf(1.0 / (nf - 4.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub name: String,
    pub closed_form: f64,
    pub numeric: f64,
    pub rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrosscheckReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub tol: f64,
    pub entries: Vec<Discrepancy>,
    pub b0: f64,
    pub half_n_a1: f64,
    pub b0_over_half_n_a1: f64,
    pub max_rel: f64,
    pub passed: bool,
}

/// `∫_{R^N} (1+|z|²)^{-s}` by radial quadrature, using the recursive sphere
/// area so no Gamma function enters.
fn radial_quadrature(n: usize, s: f64, spec: &QuadratureSpec) -> f64 {
    let e = integrate(|rho| (1.0 + rho * rho).powf(-s) * rho.powi(n as i32 - 1), 0.0, f64::INFINITY, spec);
    sphere_area(n - 1) * e.value
}

/// Every closed form recomputed by quadrature; `B0` and `(N/2)A1` side by side.
pub fn crosscheck_constants(dim: Dimension, tol: f64) -> Result<CrosscheckReport> {
    if !(tol > 0.0) {
        return Err(param("tol", "must be positive"));
    }
    let k = eval_constants(dim);
    let n = dim.n();
    let nf = dim.nf();
    let c = dim.cn();
    let c_crit = c.powf(dim.crit());
    let spec = QuadratureSpec::new(1e-14, 0.0, 4000)?;
    let zeta_quad = integrate(|x| x.powf(nf - 3.0) / x.exp_m1(), 0.0, f64::INFINITY, &spec).value / gamma(nf - 2.0);
    let b2_quad = integrate(|z| (1.0 + z * z).powf(-dim.m()), 0.0, f64::INFINITY, &spec).value;
    let numeric = [
        ("A1", k.a1, 2.0 / nf * c_crit * radial_quadrature(n, nf, &spec)),
        ("A2", k.a2, c * c * radial_quadrature(n, nf - 2.0, &spec)),
        ("B0", k.b0, c_crit * radial_quadrature(n, (nf + 2.0) / 2.0, &spec)),
        ("B1", k.b1, 2.0 * zeta_quad / (2.0 * PI).powf(nf - 2.0)),
        ("B2", k.b2, b2_quad / (2f64.powf(nf - 3.0) * PI)),
    ];
    let entries: Vec<Discrepancy> = numeric
        .iter()
        .map(|(name, closed, num)| Discrepancy {
            name: name.to_string(),
            closed_form: *closed,
            numeric: *num,
            rel: (closed - num).abs() / closed.abs(),
        })
        .collect();
    let max_rel = entries.iter().map(|e| e.rel).fold(0.0, f64::max);
    let half_n_a1 = 0.5 * nf * k.a1;
    Ok(CrosscheckReport {
        n,
        tol,
        entries,
        b0: k.b0,
        half_n_a1,
        b0_over_half_n_a1: k.b0 / half_n_a1,
        max_rel,
        passed: max_rel < tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalScalars {
    pub h0: f64,
    pub mu0: f64,
    /// `h0 k^{-(N-3)/(N-1)}`.
    pub big_h0: f64,
    /// `μ0 k^{(N-2)/(N-4)}`.
    pub lambda0: f64,
    pub a3: f64,
    /// `false` when `H0 >= 1`, i.e. `k` is below the scaling regime.
    pub regime_ok: bool,
}

pub fn critical_scalars(dim: Dimension, v: &dyn RadialPotential, r: f64, k: usize) -> Result<CriticalScalars> {
    let vr = v.value(r);
    if !(vr > 0.0) {
        return Err(param("V", format!("need V(r) > 0 at r = {r}, got {vr}")));
    }
    if k < 2 {
        return Err(param("k", "need k >= 2"));
    }
    let c = eval_constants(dim);
    let kf = k as f64;
    let h0 = c.h0();
    let mu0 = c.mu0(r, vr);
    let big_h0 = h0 * kf.powf(-dim.h_exponent());
    Ok(CriticalScalars {
        h0,
        mu0,
        big_h0,
        lambda0: mu0 * kf.powf(dim.mu_exponent()),
        a3: c.a3(),
        regime_ok: big_h0 < 1.0,
    })
}

impl CrosscheckReport {
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::Check {
                what: format!("constants N={}", self.n),
                detail: format!("max discrepancy {:e} exceeds {:e}", self.max_rel, self.tol),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::Potential;

    fn c5() -> ReductionConstants {
        eval_constants(Dimension::new(5).unwrap())
    }

    #[test]
    fn n5_values() {
        // Frozen from an independent mpmath evaluation of the Gamma forms.
        let c = c5();
        assert!((c.a1 - 337.744_105_905_096).abs() < 1e-9);
        assert!((c.a2 - 900.650_949_080_254_3).abs() < 1e-9);
        assert!((c.b0 - 4_586.977_617_488_943).abs() < 1e-8);
        assert!((c.b1 * 4.0 * PI.powi(3) / 1.202_056_903_159_594 - 1.0).abs() < 1e-14);
        assert!((c.b2 * 4.0 * PI - 1.0).abs() < 1e-14);
    }

    #[test]
    fn n6_values() {
        let c = eval_constants(Dimension::new(6).unwrap());
        assert!((c.a1 - 2_381.282_049_047_026).abs() < 1e-8);
        assert!((c.b1 * 720.0 - 1.0).abs() < 1e-14);
        assert!((c.b2 * 32.0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalars_n5() {
        let d = Dimension::new(5).unwrap();
        let c = c5();
        let h0_expect = (2.0 * PI * PI / (3.0 * 1.202_056_903_159_594)).powf(0.25);
        assert!((c.h0() - h0_expect).abs() < 1e-13);
        assert!((c.h0() - 1.5296).abs() < 1e-4);
        let v = Potential::Constant { c: 1.0 };
        let s = critical_scalars(d, &v, 1.0, 100).unwrap();
        assert!((s.mu0 - 3.0 * c.b0 * c.b1 / (2.0 * c.a2)).abs() < 1e-15);
        assert!((s.mu0 - 7.405e-2).abs() < 1e-5);
        assert!((s.big_h0 - s.h0 / 10.0).abs() < 1e-15);
        assert!((s.lambda0 / (s.mu0 * 1e6) - 1.0).abs() < 1e-14);
        assert!(s.regime_ok);
        let low = critical_scalars(d, &v, 1.0, 2).unwrap();
        assert!(!low.regime_ok);
        assert!(critical_scalars(d, &Potential::Constant { c: 0.0 }, 1.0, 8).is_err());
    }

    #[test]
    fn closed_forms_solve_their_balances() {
        for n in 5..=10 {
            let d = Dimension::new(n).unwrap();
            let c = eval_constants(d);
            let nf = n as f64;
            let r = 1.3;
            let h = c.h0();
            // r^{N-2} factors cancel between B3 and B4
            let t1 = (nf - 2.0) * c.b3(r) * h;
            let t2 = (nf - 3.0) * c.b4(r) / h.powf(nf - 2.0);
            assert!(((t1 - t2) / t1).abs() < 1e-12, "h0 balance N={n}");
            let v = 0.7;
            let mu = c.mu0(r, v);
            let s1 = 2.0 * c.a2 * v / mu.powi(3);
            let s2 = (nf - 2.0) * c.b3(r) / mu.powf(nf - 1.0);
            assert!(((s1 - s2) / s1).abs() < 1e-12, "mu0 balance N={n}");
            assert!(c.a1 > 0.0 && c.a2 > 0.0 && c.b0 > 0.0 && c.b1 > 0.0 && c.b2 > 0.0 && c.a3() > 0.0);
        }
    }

    #[test]
    fn crosscheck_reports_b0_ratio() {
        let rep = crosscheck_constants(Dimension::new(5).unwrap(), 1e-9).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!((rep.b0_over_half_n_a1 - 5.433).abs() < 1e-3);
    }
}
