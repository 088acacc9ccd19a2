//! The Aubin-Talenti bubble, the 2k-bubble ansatz, kernel functions and the
//! derivatives of a bubble with respect to the configuration parameters.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::geometry::{Configuration, Dimension, Ring};
use crate::summation::Neumaier;

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum()
}

/// Radial profile of `U_{0,1}` as a function of `s = |z|²`, with its first
/// three `s`-derivatives.
#[derive(Debug, Clone, Copy)]
pub struct Profile {
    pub u: f64,
    pub us: f64,
    pub uss: f64,
    pub usss: f64,
}

pub fn profile(dim: Dimension, s: f64) -> Profile {
    let m = dim.m();
    let base = dim.cn() * (1.0 + s).powf(-m);
    let inv = 1.0 / (1.0 + s);
    Profile {
        u: base,
        us: -m * base * inv,
        uss: m * (m + 1.0) * base * inv * inv,
        usss: -m * (m + 1.0) * (m + 2.0) * base * inv * inv * inv,
    }
}

/// `U_{x,μ}(y)`.
pub fn bubble_value(dim: Dimension, x: &[f64], mu: f64, y: &[f64]) -> f64 {
    let s = mu * mu * dist2(x, y);
    dim.cn() * (mu / (1.0 + s)).powf(dim.m())
}

/// `U_{x,μ}(y)` and its spatial gradient.
pub fn bubble_eval(dim: Dimension, x: &[f64], mu: f64, y: &[f64]) -> (f64, Vec<f64>) {
    let s = mu * mu * dist2(x, y);
    let u = dim.cn() * (mu / (1.0 + s)).powf(dim.m());
    // ∂U/∂y_i = -2m μ² (y_i - x_i) U / (1+s)
    let f = -2.0 * dim.m() * mu * mu * u / (1.0 + s);
    let grad = y.iter().zip(x).map(|(yi, xi)| f * (yi - xi)).collect();
    (u, grad)
}

/// Analytic Laplacian of `U_{x,μ}` at `y`.
pub fn bubble_laplacian(dim: Dimension, x: &[f64], mu: f64, y: &[f64]) -> f64 {
    let s = mu * mu * dist2(x, y);
    let p = profile(dim, s);
    // radial φ(s): Δφ = 2Nφ_s + 4sφ_ss, then rescale by μ^{m+2}
    mu.powf(dim.m() + 2.0) * (2.0 * dim.nf() * p.us + 4.0 * s * p.uss)
}

/// Kernel function `Z_i` of the linearised operator at `U_{0,1}`; `i` runs
/// over `1..=N+1`.
pub fn kernel_z(dim: Dimension, i: usize, y: &[f64]) -> Result<f64> {
    let n = dim.n();
    if i == 0 || i > n + 1 {
        return Err(param("i", format!("kernel index must be in 1..={}, got {i}", n + 1)));
    }
    let s: f64 = y.iter().map(|v| v * v).sum();
    let p = profile(dim, s);
    Ok(if i <= n {
        2.0 * y[i - 1] * p.us
    } else {
        dim.m() * p.u + 2.0 * s * p.us
    })
}

/// Analytic Laplacian of `Z_i`.
pub fn kernel_z_laplacian(dim: Dimension, i: usize, y: &[f64]) -> Result<f64> {
    let n = dim.n();
    if i == 0 || i > n + 1 {
        return Err(param("i", format!("kernel index must be in 1..={}, got {i}", n + 1)));
    }
    let s: f64 = y.iter().map(|v| v * v).sum();
    let p = profile(dim, s);
    let nf = dim.nf();
    Ok(if i <= n {
        // Z_i = y_i g(s) with g = 2U_s: Δ = y_i (2(N+2) g_s + 4 s g_ss)
        let gs = 2.0 * p.uss;
        let gss = 2.0 * p.usss;
        y[i - 1] * (2.0 * (nf + 2.0) * gs + 4.0 * s * gss)
    } else {
        let m = dim.m();
        let zs = (m + 2.0) * p.us + 2.0 * s * p.uss;
        let zss = (m + 4.0) * p.uss + 2.0 * s * p.usss;
        2.0 * nf * zs + 4.0 * s * zss
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    R,
    H,
    Mu,
}

/// Selects `∂U_{x_j^±,μ}/∂(r|h|μ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDerivField {
    pub param: Param,
    pub ring: Ring,
    pub j: usize,
}

pub fn param_derivative_eval(field: ParamDerivField, cfg: &Configuration, y: &[f64]) -> Result<f64> {
    if field.j == 0 || field.j > cfg.k {
        return Err(param("j", format!("ring index out of range: {}", field.j)));
    }
    let x = cfg.center(field.ring, field.j);
    let mu = cfg.mu;
    match field.param {
        Param::Mu => {
            let s = mu * mu * dist2(&x, y);
            let u = bubble_value(cfg.dim, &x, mu, y);
            Ok(cfg.dim.m() * u / mu * (1.0 - s) / (1.0 + s))
        }
        Param::R | Param::H => {
            let (_, grad) = bubble_eval(cfg.dim, &x, mu, y);
            let dx = match field.param {
                Param::R => x.iter().map(|v| v / cfg.r).collect::<Vec<_>>(),
                _ => cfg.center_dh(field.ring, field.j),
            };
            // U depends on x through y - x
            Ok(-grad.iter().zip(&dx).map(|(g, d)| g * d).sum::<f64>())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnsatzValue {
    /// `W(y)`.
    pub w: f64,
    /// `Σ_j U_j(y)^{2*-1}`.
    pub sum_powers: f64,
}

/// A sum of bubbles with a common concentration `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    pub dim: Dimension,
    pub mu: f64,
    pub centers: Vec<Vec<f64>>,
    amp: f64,
}

impl Ansatz {
    pub fn new(dim: Dimension, mu: f64, centers: Vec<Vec<f64>>) -> Self {
        let amp = dim.cn() * mu.powf(dim.m());
        Self { dim, mu, centers, amp }
    }

    pub fn from_config(cfg: &Configuration) -> Self {
        Self::new(cfg.dim, cfg.mu, cfg.centers().all())
    }

    /// Each bubble's value at `y`, in center order.
    pub fn values(&self, y: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let mu2 = self.mu * self.mu;
        let m = self.dim.m();
        let y = y.to_vec();
        self.centers
            .iter()
            .map(move |x| self.amp * (1.0 + mu2 * dist2(x, &y)).powf(-m))
    }

    pub fn eval(&self, y: &[f64]) -> AnsatzValue {
        let p = self.dim.power();
        let mut w = Neumaier::new();
        let mut sp = Neumaier::new();
        for u in self.values(y) {
            w.add(u);
            sp.add(u.powf(p));
        }
        AnsatzValue {
            w: w.value(),
            sum_powers: sp.value(),
        }
    }

    pub fn w(&self, y: &[f64]) -> f64 {
        self.values(y).collect::<Neumaier>().value()
    }

    pub fn laplacian(&self, y: &[f64]) -> f64 {
        self.centers
            .iter()
            .map(|x| bubble_laplacian(self.dim, x, self.mu, y))
            .collect::<Neumaier>()
            .value()
    }
}

pub fn ansatz_eval(cfg: &Configuration, y: &[f64]) -> AnsatzValue {
    Ansatz::from_config(cfg).eval(y)
}
