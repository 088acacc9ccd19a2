//! Pairwise bubble integrals by dimension-reduced quadrature, potential
//! integrals, and the direct energy of the ansatz.

use rayon::prelude::*;
use serde::Serialize;
use std::cell::Cell;

use crate::bubble::Ansatz;
use crate::error::{Error, Result};
use crate::geometry::{Configuration, Dimension, Ring};
use crate::montecarlo::{mc_global_ansatz, MCSpec, McTarget};
use crate::potentials::RadialPotential;
use crate::quadrature::{integrate_breaks, Estimate, QuadratureSpec};
use crate::special::sphere_area;
use crate::summation::Neumaier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairIntegrals {
    /// `∫ U_1^{2*-1} U_2`.
    pub int_pow: f64,
    /// `∫ U_1 U_2`.
    pub int_l2: f64,
    /// `∫ ∇U_1 · ∇U_2`.
    pub int_grad: f64,
    /// Largest quadrature error estimate, relative to its integral.
    pub rel_err: f64,
}

fn distance(x1: &[f64], x2: &[f64]) -> f64 {
    x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Nested 2D rule: outer over `t`, inner over `ρ ∈ [0, ∞)`. `inner_scale`
/// supplies the mapping length for the inner half-line at each `t`.
fn nested_2d<F, S>(f: F, t_breaks: &[f64], t_scale: f64, inner_scale: S, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
    S: Fn(f64) -> f64,
{
    let inner_ok = Cell::new(true);
    let inner_spec = spec.tightened(0.1);
    let outer = integrate_breaks(
        |t| {
            let e = integrate_breaks(|rho| f(t, rho), &[0.0, f64::INFINITY], inner_scale(t), &inner_spec);
            if !e.converged {
                inner_ok.set(false);
            }
            e.value
        },
        t_breaks,
        t_scale,
        spec,
    );
    finish(outer, inner_ok.get())
}

fn finish(outer: Estimate, inner_ok: bool) -> Result<f64> {
    if outer.converged && inner_ok {
        Ok(outer.value)
    } else {
        Err(Error::Quadrature {
            estimate: outer.value,
            error: outer.error,
            subdivisions: outer.subdivisions,
        })
    }
}

/// The three two-bubble integrals, reduced to `(t, ρ)`: `t` along the axis
/// through both centers, `ρ` the transverse radius, in the scaled variable
/// `z = μ(y - x_1)`. The transverse measure is `|S^{N-2}| ρ^{N-2} dρ`.
pub fn pair_interaction(dim: Dimension, x1: &[f64], x2: &[f64], mu: f64, spec: &QuadratureSpec) -> Result<PairIntegrals> {
    let big_d = mu * distance(x1, x2);
    let nf = dim.nf();
    let m = dim.m();
    let p = dim.power();
    let c = dim.cn();
    let area = sphere_area(dim.n() - 2);
    let pw = (nf - 2.0) as i32;
    let breaks: Vec<f64> = if big_d > 0.0 {
        vec![f64::NEG_INFINITY, 0.0, 0.5 * big_d, big_d, f64::INFINITY]
    } else {
        vec![f64::NEG_INFINITY, 0.0, f64::INFINITY]
    };
    let scale = |t: f64| 1.0 + t.abs().min((t - big_d).abs());
    let q1 = |t: f64, rho: f64| 1.0 + t * t + rho * rho;
    let q2 = |t: f64, rho: f64| 1.0 + (t - big_d) * (t - big_d) + rho * rho;
    let meas = |rho: f64| area * rho.powi(pw);

    let pow = nested_2d(
        |t, rho| c.powf(p + 1.0) * q1(t, rho).powf(-m * p) * q2(t, rho).powf(-m) * meas(rho),
        &breaks,
        1.0,
        scale,
        spec,
    )?;
    let l2 = nested_2d(
        |t, rho| c * c * (q1(t, rho) * q2(t, rho)).powf(-m) * meas(rho),
        &breaks,
        1.0,
        scale,
        spec,
    )?;
    // ∇U(z) = -(N-2) C z (1+|z|²)^{-N/2}
    let grad = nested_2d(
        |t, rho| {
            let dot = t * (t - big_d) + rho * rho;
            (nf - 2.0).powi(2) * c * c * dot * (q1(t, rho) * q2(t, rho)).powf(-nf / 2.0) * meas(rho)
        },
        &breaks,
        1.0,
        scale,
        spec,
    )?;
    Ok(PairIntegrals {
        int_pow: pow,
        int_l2: l2 / (mu * mu),
        int_grad: grad,
        rel_err: spec.rel_tol,
    })
}

/// `∫ V(|y|) U_{x1,μ} U_{x2,μ}`.
///
/// Diagonal pairs reduce to `(ρ, θ)` about `x1`, with `θ` the angle to `x1`.
/// Off-diagonal pairs use coordinates `(a, b)` in the plane spanned by the
/// pair axis and `x1`, plus the transverse radius.
pub fn potential_pair(
    dim: Dimension,
    v: &dyn RadialPotential,
    x1: &[f64],
    x2: &[f64],
    mu: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let m = dim.m();
    let c2 = dim.cn() * dim.cn();
    let d = distance(x1, x2);
    let r1 = x1.iter().map(|v| v * v).sum::<f64>().sqrt();
    if d == 0.0 {
        let area = sphere_area(dim.n() - 2);
        let pw = dim.n() as i32 - 2;
        let mut breaks = vec![0.0, 1.0, 4.0];
        for f in [0.5, 1.0, 1.5, 2.0] {
            breaks.push(f * mu * r1);
        }
        breaks.push(f64::INFINITY);
        breaks.retain(|b| *b >= 0.0);
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();
        let inner_ok = Cell::new(true);
        let inner_spec = spec.tightened(0.1);
        let outer = integrate_breaks(
            |rho| {
                let radial = c2 * (1.0 + rho * rho).powf(-2.0 * m) * rho.powi(dim.n() as i32 - 1) * area;
                let e = integrate_breaks(
                    |th: f64| {
                        let (s, co) = th.sin_cos();
                        let y2 = r1 * r1 + 2.0 * r1 * rho * co / mu + rho * rho / (mu * mu);
                        v.value(y2.max(0.0).sqrt()) * s.powi(pw)
                    },
                    &[0.0, std::f64::consts::PI],
                    1.0,
                    &inner_spec,
                );
                if !e.converged {
                    inner_ok.set(false);
                }
                radial * e.value
            },
            &breaks,
            1.0,
            spec,
        );
        return Ok(finish(outer, inner_ok.get())? / (mu * mu));
    }

    // orthonormal frame: e1 along the pair axis, e2 the part of x1 normal to it
    let e1: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| (b - a) / d).collect();
    let alpha: f64 = x1.iter().zip(&e1).map(|(a, b)| a * b).sum();
    let perp: Vec<f64> = x1.iter().zip(&e1).map(|(a, e)| a - alpha * e).collect();
    let beta = perp.iter().map(|v| v * v).sum::<f64>().sqrt();
    let big_d = mu * d;
    let area = sphere_area(dim.n() - 3);
    let pw = dim.n() as i32 - 3;
    let a_breaks = vec![f64::NEG_INFINITY, 0.0, 0.5 * big_d, big_d, f64::INFINITY];
    let b_breaks = vec![f64::NEG_INFINITY, 0.0, f64::INFINITY];
    let mid_spec = spec.tightened(0.1);
    let inner_spec = spec.tightened(0.01);
    let ok = Cell::new(true);
    let outer = integrate_breaks(
        |a| {
            let near = 1.0 + a.abs().min((a - big_d).abs());
            let e = integrate_breaks(
                |b| {
                    let base = a * a + b * b;
                    let base2 = (a - big_d) * (a - big_d) + b * b;
                    let ya = alpha + a / mu;
                    let yb = beta + b / mu;
                    let e = integrate_breaks(
                        |rho| {
                            let r2 = rho * rho;
                            let u = ((1.0 + base + r2) * (1.0 + base2 + r2)).powf(-m);
                            let y = (ya * ya + yb * yb + r2 / (mu * mu)).sqrt();
                            c2 * u * v.value(y) * area * rho.powi(pw)
                        },
                        &[0.0, f64::INFINITY],
                        (near * near + b * b).sqrt(),
                        &inner_spec,
                    );
                    if !e.converged {
                        ok.set(false);
                    }
                    e.value
                },
                &b_breaks,
                near,
                &mid_spec,
            );
            if !e.converged {
                ok.set(false);
            }
            e.value
        },
        &a_breaks,
        1.0,
        spec,
    );
    Ok(finish(outer, ok.get())? / (mu * mu))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `2k (1/N) ∫U^{2*}`.
    pub self_energy: f64,
    /// `Σ_j ∫|∇U_j|²`.
    pub grad_diag: f64,
    /// `Σ_j ∫ V U_j²`.
    pub potential_diag: f64,
    /// `Σ_{i≠j} ∫ V U_i U_j`.
    pub potential_cross: f64,
    /// `Σ ∫∇U_i·∇U_j` over ordered same-ring pairs `i ≠ j`.
    pub interaction_same: f64,
    /// `Σ ∫∇U_i·∇U_j` over ordered cross-ring pairs.
    pub interaction_cross: f64,
    /// `-(1/2*) ∫ W^{2*}`.
    pub nonlinear_full: f64,
    pub total: f64,
    /// Standard error of `total`, all of which comes from the Monte Carlo term.
    pub mc_std_err: f64,
    pub quad_rel_tol: f64,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub warnings: Vec<String>,
}

impl EnergyBreakdown {
    fn assemble(
        dim: Dimension,
        parts: [f64; 6],
        w_crit: (f64, f64),
        qspec: &QuadratureSpec,
        mspec: &MCSpec,
        warnings: Vec<String>,
    ) -> Self {
        let [self_energy, grad_diag, potential_diag, potential_cross, interaction_same, interaction_cross] = parts;
        let crit = dim.crit();
        let nonlinear_full = -w_crit.0 / crit;
        let mut acc = Neumaier::new();
        for x in [
            0.5 * grad_diag,
            0.5 * interaction_same,
            0.5 * interaction_cross,
            0.5 * potential_diag,
            0.5 * potential_cross,
            nonlinear_full,
        ] {
            acc.add(x);
        }
        Self {
            self_energy,
            grad_diag,
            potential_diag,
            potential_cross,
            interaction_same,
            interaction_cross,
            nonlinear_full,
            total: acc.value(),
            mc_std_err: w_crit.1 / crit,
            quad_rel_tol: qspec.rel_tol,
            mc_samples: mspec.samples,
            mc_seed: mspec.seed,
            warnings,
        }
    }
}

/// Direct energy of the ring ansatz. Pair loops use the symmetry group: every
/// center is equivalent to `x_1^+`, and the reflection `y_2 ↦ -y_2` pairs
/// `j` with `k+2-j`, so only about `k+2` distinct pairs are integrated.
pub fn direct_energy(cfg: &Configuration, v: &dyn RadialPotential, qspec: &QuadratureSpec, mspec: &MCSpec) -> Result<EnergyBreakdown> {
    if 2 * cfg.k > 64 {
        return Err(crate::error::param("k", "direct energy is limited to 2k <= 64"));
    }
    let dim = cfg.dim;
    let k = cfg.k;
    let x1 = cfg.center(Ring::Upper, 1);
    // (ring, j, multiplicity within the orbit of x_1^+)
    let mut jobs: Vec<(Ring, usize, f64)> = Vec::new();
    for ring in [Ring::Upper, Ring::Lower] {
        for j in 1..=k / 2 + 1 {
            let mirror = k + 2 - j;
            let mult = if j == 1 || mirror == j || mirror > k { 1.0 } else { 2.0 };
            jobs.push((ring, j, mult));
        }
    }
    type PairJob = (Ring, usize, f64, PairIntegrals, f64);
    let results: Vec<Result<PairJob>> = jobs
        .par_iter()
        .map(|&(ring, j, mult)| {
            let xj = cfg.center(ring, j);
            let pi = pair_interaction(dim, &x1, &xj, cfg.mu, qspec)?;
            let pp = potential_pair(dim, v, &x1, &xj, cfg.mu, qspec)?;
            Ok((ring, j, mult, pi, pp))
        })
        .collect();
    let two_k = 2.0 * k as f64;
    let mut parts = [Neumaier::new(); 6];
    for r in results {
        let (ring, j, mult, pi, pp) = r?;
        let w = two_k * mult;
        if ring == Ring::Upper && j == 1 {
            parts[0].add(two_k * pi.int_pow / dim.nf());
            parts[1].add(w * pi.int_grad);
            parts[2].add(w * pp);
        } else {
            parts[3].add(w * pp);
            if ring == Ring::Upper {
                parts[4].add(w * pi.int_grad);
            } else {
                parts[5].add(w * pi.int_grad);
            }
        }
    }
    let ans = Ansatz::from_config(cfg);
    let est = mc_global_ansatz(&ans, v, McTarget::WPow2Star, mspec)?;
    let vals = parts.map(|p| p.value());
    Ok(EnergyBreakdown::assemble(dim, vals, (est.value, est.std_err), qspec, mspec, est.warnings))
}

/// Direct energy for an arbitrary list of centers with a common `μ`. Pairs
/// whose third coordinates have opposite signs count as cross-ring.
pub fn direct_energy_ansatz(ans: &Ansatz, v: &dyn RadialPotential, qspec: &QuadratureSpec, mspec: &MCSpec) -> Result<EnergyBreakdown> {
    let dim = ans.dim;
    let n = ans.centers.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let results: Vec<Result<(usize, usize, PairIntegrals, f64)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&ans.centers[i], &ans.centers[j]);
            Ok((i, j, pair_interaction(dim, a, b, ans.mu, qspec)?, potential_pair(dim, v, a, b, ans.mu, qspec)?))
        })
        .collect();
    let mut parts = [Neumaier::new(); 6];
    for r in results {
        let (i, j, pi, pp) = r?;
        if i == j {
            parts[0].add(pi.int_pow / dim.nf());
            parts[1].add(pi.int_grad);
            parts[2].add(pp);
        } else {
            parts[3].add(2.0 * pp);
            let cross = ans.centers[i][2] * ans.centers[j][2] < 0.0;
            parts[if cross { 5 } else { 4 }].add(2.0 * pi.int_grad);
        }
    }
    let est = mc_global_ansatz(ans, v, McTarget::WPow2Star, mspec)?;
    let vals = parts.map(|p| p.value());
    Ok(EnergyBreakdown::assemble(dim, vals, (est.value, est.std_err), qspec, mspec, est.warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::eval_constants;
    use crate::potentials::Potential;

    fn d5() -> Dimension {
        Dimension::new(5).unwrap()
    }

    #[test]
    fn diagonal_values() {
        let spec = QuadratureSpec::new(1e-10, 0.0, 2000).unwrap();
        for n in [5, 6, 7] {
            let dim = Dimension::new(n).unwrap();
            let c = eval_constants(dim);
            let x = vec![0.3; n];
            let p = pair_interaction(dim, &x, &x, 2.0, &spec).unwrap();
            let half_n_a1 = 0.5 * n as f64 * c.a1;
            assert!((p.int_pow / half_n_a1 - 1.0).abs() < 1e-8, "N={n}");
            assert!((p.int_grad / half_n_a1 - 1.0).abs() < 1e-8, "N={n}");
            assert!((p.int_l2 * 4.0 / c.a2 - 1.0).abs() < 1e-8, "N={n}");
        }
    }

    #[test]
    fn integration_by_parts_and_swap() {
        let spec = QuadratureSpec::new(1e-9, 0.0, 2000).unwrap();
        let x1 = [0.0, 0.0, 0.0, 0.0, 0.0];
        let x2 = [0.7, 0.2, 0.0, 0.0, 0.1];
        let a = pair_interaction(d5(), &x1, &x2, 3.0, &spec).unwrap();
        let b = pair_interaction(d5(), &x2, &x1, 3.0, &spec).unwrap();
        assert!(((a.int_grad - a.int_pow) / a.int_pow).abs() < 10.0 * spec.rel_tol);
        assert!(((a.int_pow - b.int_pow) / a.int_pow).abs() < 10.0 * spec.rel_tol);
    }

    #[test]
    fn constant_potential_diagonal_is_scaled_a2() {
        let spec = QuadratureSpec::new(1e-9, 0.0, 2000).unwrap();
        let v = Potential::Constant { c: 1.0 };
        let x = [1.0, 0.0, 0.0, 0.0, 0.0];
        let got = potential_pair(d5(), &v, &x, &x, 20.0, &spec).unwrap();
        let a2 = eval_constants(d5()).a2;
        assert!((got * 400.0 / a2 - 1.0).abs() < 1e-7, "{got}");
    }

    #[test]
    fn constant_potential_off_diagonal_is_overlap() {
        let spec = QuadratureSpec::new(1e-7, 0.0, 2000).unwrap();
        let v = Potential::Constant { c: 1.0 };
        let x1 = [1.0, 0.0, 0.1, 0.0, 0.0];
        let x2 = [0.8, 0.5, -0.1, 0.0, 0.0];
        let got = potential_pair(d5(), &v, &x1, &x2, 5.0, &spec).unwrap();
        let l2 = pair_interaction(d5(), &x1, &x2, 5.0, &spec).unwrap().int_l2;
        assert!((got / l2 - 1.0).abs() < 1e-5, "{got} {l2}");
    }
}
