//! Importance-sampled Monte Carlo over `R^N` with a mixture of per-bubble
//! components and a heavy-tailed background.
//!
//! Chunk `c` draws from a ChaCha stream keyed by `(seed, c)` and chunk
//! statistics are merged in index order, so estimates do not depend on how
//! rayon schedules the chunks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bubble::Ansatz;
use crate::error::{param, Result};
use crate::geometry::{Configuration, Dimension};
use crate::potentials::RadialPotential;
use crate::special::power_bump_integral;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCSpec {
    pub samples: usize,
    pub seed: u64,
    /// Mixture weight of the background; the bubbles share the rest equally.
    pub background_weight: f64,
    /// Decay exponent `β` of each bubble component `∝ (1+μ²|y-x_j|²)^{-β}`.
    /// `None` picks a default suited to the integrand.
    pub bubble_tail: Option<f64>,
    /// Length scale of the background component; `None` uses the largest
    /// center norm (at least 1).
    pub background_scale: Option<f64>,
    /// Relative standard error above which a warning is attached.
    pub rel_err_budget: Option<f64>,
}

impl Default for MCSpec {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 0x5eed_2024,
            background_weight: 0.02,
            bubble_tail: None,
            background_scale: None,
            rel_err_budget: None,
        }
    }
}

impl MCSpec {
    pub fn with_samples(samples: usize, seed: u64) -> Self {
        Self { samples, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 1000 {
            return Err(param("samples", "need at least 1000 samples"));
        }
        if !(self.background_weight > 0.0 && self.background_weight < 1.0) {
            return Err(param("background_weight", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples: usize,
    pub warnings: Vec<String>,
}

impl McEstimate {
    pub fn rel_std_err(&self) -> f64 {
        self.std_err / self.value.abs()
    }
}

/// Mixture proposal density and sampler.
#[derive(Debug, Clone)]
pub struct Mixture {
    n: usize,
    mu: f64,
    centers: Vec<Vec<f64>>,
    beta: f64,
    bg_beta: f64,
    bg_scale: f64,
    bg_weight: f64,
    // log normalisers of the unit-scale profiles
    log_norm_bubble: f64,
    log_norm_bg: f64,
    radial_bubble: Beta<f64>,
    radial_bg: Beta<f64>,
}

impl Mixture {
    pub fn new(dim: Dimension, mu: f64, centers: Vec<Vec<f64>>, beta: f64, spec: &MCSpec) -> Result<Self> {
        let n = dim.n();
        let half = dim.nf() / 2.0;
        if !(beta > half) {
            return Err(param("bubble_tail", "need beta > N/2 for a normalisable component"));
        }
        let bg_beta = (dim.nf() + 1.0) / 2.0;
        let bg_scale = spec.background_scale.unwrap_or_else(|| {
            centers
                .iter()
                .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(1.0, f64::max)
        });
        if !(bg_scale > 0.0) {
            return Err(param("background_scale", "must be positive"));
        }
        let bg_weight = if centers.is_empty() { 1.0 } else { spec.background_weight };
        Ok(Self {
            n,
            mu,
            beta,
            bg_beta,
            bg_scale,
            bg_weight,
            log_norm_bubble: power_bump_integral(n, beta).ln(),
            log_norm_bg: power_bump_integral(n, bg_beta).ln(),
            radial_bubble: Beta::new(half, beta - half).map_err(|e| param("bubble_tail", e.to_string()))?,
            radial_bg: Beta::new(half, bg_beta - half).map_err(|e| param("bubble_tail", e.to_string()))?,
            centers,
        })
    }

    pub fn density(&self, y: &[f64]) -> f64 {
        let nf = self.n as f64;
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let l = self.bg_scale;
        let bg = (-nf * l.ln() - self.log_norm_bg).exp() * (1.0 + r2 / (l * l)).powf(-self.bg_beta);
        let mut acc = self.bg_weight * bg;
        if !self.centers.is_empty() {
            let w = (1.0 - self.bg_weight) / self.centers.len() as f64;
            let pref = w * (nf * self.mu.ln() - self.log_norm_bubble).exp();
            let mu2 = self.mu * self.mu;
            for c in &self.centers {
                let d2: f64 = c.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                acc += pref * (1.0 + mu2 * d2).powf(-self.beta);
            }
        }
        acc
    }

    pub fn sample_into(&self, rng: &mut ChaCha8Rng, y: &mut [f64]) {
        // uniform direction
        let mut norm2 = 0.0;
        for v in y.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = g;
            norm2 += g * g;
        }
        let inv = 1.0 / norm2.sqrt();
        let pick_bg = self.centers.is_empty() || rng.random::<f64>() < self.bg_weight;
        let (u, scale, center) = if pick_bg {
            (self.radial_bg.sample(rng), self.bg_scale, None)
        } else {
            let j = rng.random_range(0..self.centers.len());
            (self.radial_bubble.sample(rng), 1.0 / self.mu, Some(&self.centers[j]))
        };
        // a Beta draw can round to exactly 1 when the tail is light
        let u = u.min(1.0 - f64::EPSILON);
        let radius = scale * (u / (1.0 - u)).sqrt();
        for (i, v) in y.iter_mut().enumerate() {
            *v *= inv * radius;
            if let Some(c) = center {
                *v += c[i];
            }
        }
    }
}

/// Per-chunk running statistics (Welford), merged with Chan's formula.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }
}

pub const MC_CHUNK: usize = 1 << 14;

/// Estimates `∫ f` with the given proposal.
pub fn mc_integrate<F>(mix: &Mixture, f: F, spec: &MCSpec) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    spec.validate()?;
    let n_chunks = spec.samples.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(spec.samples - c * MC_CHUNK);
            let mut y = vec![0.0; mix.n];
            let mut m = Moments::default();
            for _ in 0..count {
                mix.sample_into(&mut rng, &mut y);
                m.push(f(&y) / mix.density(&y));
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    for p in &parts {
        total.merge(p);
    }
    let var = total.m2 / (total.n - 1.0);
    let est = McEstimate {
        value: total.mean,
        std_err: (var / total.n).sqrt(),
        samples: spec.samples,
        warnings: Vec::new(),
    };
    Ok(with_budget_warning(est, spec))
}

fn with_budget_warning(mut est: McEstimate, spec: &MCSpec) -> McEstimate {
    if let Some(b) = spec.rel_err_budget {
        if est.rel_std_err() > b {
            est.warnings.push(format!("relative std_err {:.3e} exceeds budget {:.3e}", est.rel_std_err(), b));
        }
    }
    est
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McTarget {
    /// `∫ W^{2*}`.
    WPow2Star,
    /// `∫ V W²`.
    VWSq,
}

/// Default bubble-component exponent for each integrand: `N` matches
/// `U^{2*}` exactly; `(N+1)/2` is heavier than `U²` so the weight stays
/// bounded in the tails.
pub fn default_tail(dim: Dimension, target: McTarget) -> f64 {
    match target {
        McTarget::WPow2Star => dim.nf(),
        McTarget::VWSq => (dim.nf() + 1.0) / 2.0,
    }
}

pub fn mc_global_ansatz(ansatz: &Ansatz, v: &dyn RadialPotential, target: McTarget, spec: &MCSpec) -> Result<McEstimate> {
    let dim = ansatz.dim;
    let beta = spec.bubble_tail.unwrap_or_else(|| default_tail(dim, target));
    let mix = Mixture::new(dim, ansatz.mu, ansatz.centers.clone(), beta, spec)?;
    let crit = dim.crit();
    match target {
        McTarget::WPow2Star => mc_integrate(&mix, |y| ansatz.w(y).powf(crit), spec),
        McTarget::VWSq => mc_integrate(
            &mix,
            |y| {
                let w = ansatz.w(y);
                let s = y.iter().map(|c| c * c).sum::<f64>().sqrt();
                v.value(s) * w * w
            },
            spec,
        ),
    }
}

pub fn mc_global(cfg: &Configuration, v: &dyn RadialPotential, target: McTarget, spec: &MCSpec) -> Result<McEstimate> {
    mc_global_ansatz(&Ansatz::from_config(cfg), v, target, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::eval_constants;
    use crate::potentials::Potential;

    #[test]
    fn single_bubble_power_integral() {
        let dim = Dimension::new(5).unwrap();
        let ans = Ansatz::new(dim, 3.0, vec![vec![0.2, 0.0, 0.1, 0.0, 0.0]]);
        let v = Potential::Constant { c: 0.0 };
        let est = mc_global_ansatz(&ans, &v, McTarget::WPow2Star, &MCSpec::with_samples(200_000, 7)).unwrap();
        let exact = 2.5 * eval_constants(dim).a1;
        assert!((est.value - exact).abs() < 3.0 * est.std_err + 1e-9 * exact, "{est:?} vs {exact}");
    }

    #[test]
    fn proposal_density_is_normalised() {
        // ∫ p = 1 checked with the proposal itself as the integrand
        let dim = Dimension::new(5).unwrap();
        let cfg = Configuration::new(dim, 3, 1.0, 0.3, 4.0).unwrap();
        let spec = MCSpec::with_samples(50_000, 3);
        let mix = Mixture::new(dim, 4.0, cfg.centers().all(), 3.0, &spec).unwrap();
        let other = Mixture::new(dim, 2.0, cfg.centers().all(), 4.0, &spec).unwrap();
        let est = mc_integrate(&mix, |y| other.density(y), &spec).unwrap();
        assert!((est.value - 1.0).abs() < 4.0 * est.std_err, "{est:?}");
    }

    #[test]
    fn deterministic_across_pool_sizes() {
        let dim = Dimension::new(5).unwrap();
        let cfg = Configuration::new(dim, 4, 1.0, 0.2, 5.0).unwrap();
        let v = Potential::Constant { c: 1.0 };
        let spec = MCSpec::with_samples(40_000, 11);
        let a = mc_global(&cfg, &v, McTarget::VWSq, &spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| mc_global(&cfg, &v, McTarget::VWSq, &spec).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
    }
}
