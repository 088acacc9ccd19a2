//! Projected BFGS for smooth objectives on a box.

use serde::Serialize;

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxOptions {
    /// Stop when the projected gradient's max-norm drops below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Stop when a step changes the objective by less than this (absolute).
    pub f_tol: f64,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-10,
            max_iter: 500,
            f_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxMinimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub proj_grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per coordinate: the bound it sits on with the gradient pushing
    /// outward, if any.
    pub active: Vec<Option<Bound>>,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Coordinates pinned at a bound by a gradient pointing out of the box.
fn active_set(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<Option<Bound>> {
    (0..x.len())
        .map(|i| {
            let tol = 1e-14 * (1.0 + x[i].abs());
            if x[i] <= lo[i] + tol && g[i] > 0.0 {
                Some(Bound::Lower)
            } else if x[i] >= hi[i] - tol && g[i] < 0.0 {
                Some(Bound::Upper)
            } else {
                None
            }
        })
        .collect()
}

fn proj_grad_norm(g: &[f64], active: &[Option<Bound>]) -> f64 {
    g.iter()
        .zip(active)
        .filter(|(_, a)| a.is_none())
        .fold(0.0, |m, (v, _)| m.max(v.abs()))
}

/// Minimises `f` over `lo <= x <= hi`. `f` returns the value and gradient.
pub fn minimize_box<F>(f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &BoxOptions) -> Result<BoxMinimum>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    if lo.len() != n || hi.len() != n {
        return Err(param("bounds", "length mismatch"));
    }
    if (0..n).any(|i| !(lo[i] <= hi[i])) {
        return Err(param("bounds", "need lo <= hi"));
    }
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(param("x0", "objective not finite at the start point"));
    }
    // inverse Hessian approximation, row-major
    let mut hinv = identity(n);
    let mut iterations = 0;
    let mut converged = false;
    let mut restarted = false;
    while iterations < opts.max_iter {
        let active = active_set(&x, &g, lo, hi);
        if proj_grad_norm(&g, &active) < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = active.iter().map(Option::is_none).collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if free[i] {
                d[i] = -(0..n).filter(|&j| free[j]).map(|j| hinv[i * n + j] * g[j]).sum::<f64>();
            }
        }
        let mut slope: f64 = (0..n).map(|i| d[i] * g[i]).sum();
        if !(slope < 0.0) {
            // curvature estimate went bad: fall back to steepest descent
            hinv = identity(n);
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
            slope = (0..n).map(|i| d[i] * g[i]).sum();
        }
        // projected backtracking line search
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = (0..n).map(|i| x[i] + t * d[i]).collect();
            project(&mut xn, lo, hi);
            let (fn_, gn) = f(&xn);
            let decrease: f64 = (0..n).map(|i| g[i] * (xn[i] - x[i])).sum();
            if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease.min(0.0).max(t * slope) {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if restarted {
                break;
            }
            // retry once from a fresh curvature model
            hinv = identity(n);
            restarted = true;
            continue;
        };
        restarted = false;
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let df = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        if s.iter().all(|v| *v == 0.0) || (opts.f_tol > 0.0 && df.abs() < opts.f_tol) {
            break;
        }
    }
    let active = active_set(&x, &g, lo, hi);
    let pg = proj_grad_norm(&g, &active);
    Ok(BoxMinimum {
        converged: converged || pg < opts.grad_tol,
        x,
        value: fx,
        grad: g,
        proj_grad_norm: pg,
        iterations,
        active,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Golden-section search for a minimum of a unimodal function on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn rosenbrock_interior() {
        let m = minimize_box(rosen, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &BoxOptions { max_iter: 2000, ..Default::default() }).unwrap();
        assert!(m.converged, "{m:?}");
        assert!((m.x[0] - 1.0).abs() < 1e-8 && (m.x[1] - 1.0).abs() < 1e-8);
        assert!(m.active.iter().all(Option::is_none));
    }

    #[test]
    fn bound_becomes_active() {
        let quad = |x: &[f64]| ((x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)]);
        let m = minimize_box(quad, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &BoxOptions::default()).unwrap();
        assert_eq!(m.x, vec![1.0, -1.0]);
        assert_eq!(m.active, vec![Some(Bound::Upper), None]);
        assert!(m.converged);
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, _) = golden_min(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
