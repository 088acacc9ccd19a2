//! The two rings of bubble centers and the configuration parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{param, Error, Result};

/// Space dimension `N ≥ 5` with its derived exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Dimension(usize);

impl TryFrom<usize> for Dimension {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        Dimension::new(n)
    }
}

impl From<Dimension> for usize {
    fn from(d: Dimension) -> usize {
        d.0
    }
}

impl Dimension {
    pub fn new(n: usize) -> Result<Self> {
        if n < 5 {
            return Err(Error::Dimension(n));
        }
        Ok(Self(n))
    }

    pub fn n(self) -> usize {
        self.0
    }

    pub fn nf(self) -> f64 {
        self.0 as f64
    }

    /// Critical Sobolev exponent `2* = 2N/(N-2)`.
    pub fn crit(self) -> f64 {
        2.0 * self.nf() / (self.nf() - 2.0)
    }

    /// Nonlinearity power `2* - 1 = (N+2)/(N-2)`.
    pub fn power(self) -> f64 {
        (self.nf() + 2.0) / (self.nf() - 2.0)
    }

    /// Half the decay exponent, `(N-2)/2`.
    pub fn m(self) -> f64 {
        0.5 * (self.nf() - 2.0)
    }

    /// Normalisation `C_N = (N(N-2))^{(N-2)/4}`.
    pub fn cn(self) -> f64 {
        let n = self.nf();
        (n * (n - 2.0)).powf((n - 2.0) / 4.0)
    }

    /// Exponent `a` in `H0 = h0 k^{-a}`: `(N-3)/(N-1)`.
    pub fn h_exponent(self) -> f64 {
        (self.nf() - 3.0) / (self.nf() - 1.0)
    }

    /// Exponent `b` in `Λ0 = μ0 k^{b}`: `(N-2)/(N-4)`.
    pub fn mu_exponent(self) -> f64 {
        (self.nf() - 2.0) / (self.nf() - 4.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ring {
    Upper,
    Lower,
}

impl Ring {
    pub fn sign(self) -> f64 {
        match self {
            Ring::Upper => 1.0,
            Ring::Lower => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Ring::Upper => '+',
            Ring::Lower => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub dim: Dimension,
    pub k: usize,
    pub r: f64,
    pub h: f64,
    pub mu: f64,
}

impl Configuration {
    pub fn new(dim: Dimension, k: usize, r: f64, h: f64, mu: f64) -> Result<Self> {
        if k < 2 {
            return Err(param("k", format!("need k >= 2, got {k}")));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(param("r", format!("need r > 0, got {r}")));
        }
        if !(0.0..1.0).contains(&h) {
            return Err(param("h", format!("need 0 <= h < 1, got {h}")));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(param("mu", format!("need mu > 0, got {mu}")));
        }
        Ok(Self { dim, k, r, h, mu })
    }

    pub fn n(&self) -> usize {
        self.dim.n()
    }

    /// Angle of the `j`-th center (1-based).
    pub fn angle(&self, j: usize) -> f64 {
        2.0 * (j as f64 - 1.0) * PI / self.k as f64
    }

    pub fn center(&self, ring: Ring, j: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        let t = self.angle(j);
        let rho = self.r * (1.0 - self.h * self.h).sqrt();
        x[0] = rho * t.cos();
        x[1] = rho * t.sin();
        x[2] = ring.sign() * self.r * self.h;
        x
    }

    /// Derivative of the `j`-th center with respect to `h`.
    pub fn center_dh(&self, ring: Ring, j: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n()];
        let t = self.angle(j);
        let f = -self.r * self.h / (1.0 - self.h * self.h).sqrt();
        x[0] = f * t.cos();
        x[1] = f * t.sin();
        x[2] = ring.sign() * self.r;
        x
    }

    pub fn centers(&self) -> CenterSet {
        CenterSet {
            dim: self.dim,
            upper: (1..=self.k).map(|j| self.center(Ring::Upper, j)).collect(),
            lower: (1..=self.k).map(|j| self.center(Ring::Lower, j)).collect(),
        }
    }

    /// `d0 = min(½|x_2^+ - x_1^+|, ½|x_1^+ - x_1^-|)`.
    pub fn d0(&self) -> f64 {
        let d = ring_distances(self, 2).expect("k >= 2");
        0.5 * d.same.unwrap().min(2.0 * self.r * self.h)
    }

    /// Copy with a new `h`, keeping the rest.
    pub fn with_h(&self, h: f64) -> Result<Self> {
        Self::new(self.dim, self.k, self.r, h, self.mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenterSet {
    pub dim: Dimension,
    pub upper: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
}

impl CenterSet {
    pub fn k(&self) -> usize {
        self.upper.len()
    }

    /// All 2k centers, upper ring first.
    pub fn all(&self) -> Vec<Vec<f64>> {
        self.upper.iter().chain(self.lower.iter()).cloned().collect()
    }

    pub fn get(&self, ring: Ring, j: usize) -> &[f64] {
        match ring {
            Ring::Upper => &self.upper[j - 1],
            Ring::Lower => &self.lower[j - 1],
        }
    }

    /// CSV with columns `ring, j, y1..yN`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let n = self.dim.n();
        let mut header = vec!["ring".to_string(), "j".to_string()];
        header.extend((1..=n).map(|i| format!("y{i}")));
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for (ring, pts) in [(Ring::Upper, &self.upper), (Ring::Lower, &self.lower)] {
            for (j, p) in pts.iter().enumerate() {
                let mut row = vec![ring.symbol().to_string(), (j + 1).to_string()];
                row.extend(p.iter().map(|v| format!("{v:.17e}")));
                w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

pub fn make_centers(cfg: &Configuration) -> CenterSet {
    cfg.centers()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingDistances {
    /// `|x_j^+ - x_1^+|`; `None` for `j = 1`.
    pub same: Option<f64>,
    /// `|x_j^- - x_1^+|`.
    pub cross: f64,
}

pub fn ring_distances(cfg: &Configuration, j: usize) -> Result<RingDistances> {
    if j == 0 || j > cfg.k {
        return Err(param("j", format!("need 1 <= j <= k = {}, got {j}", cfg.k)));
    }
    let s = ((j as f64 - 1.0) * PI / cfg.k as f64).sin();
    let c2 = 1.0 - cfg.h * cfg.h;
    let same = (j >= 2).then(|| 2.0 * cfg.r * c2.sqrt() * s);
    let cross = 2.0 * cfg.r * (c2 * s * s + cfg.h * cfg.h).sqrt();
    Ok(RingDistances { same, cross })
}

/// Sector `Ω_j^±` containing `y`. Angles on a sector boundary go to the
/// lower index; `y_3 = 0` goes to the upper ring.
pub fn cell_index(cfg: &Configuration, y: &[f64]) -> (usize, Ring) {
    let k = cfg.k as f64;
    let mut phi = y[1].atan2(y[0]);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    let t = (phi + PI / k) / (2.0 * PI / k);
    let mut sector = (t.ceil() as i64 - 1).rem_euclid(cfg.k as i64) as usize;
    if t == k {
        // boundary between the last sector and the first
        sector = 0;
    }
    let ring = if y[2] >= 0.0 { Ring::Upper } else { Ring::Lower };
    (sector + 1, ring)
}

/// The generators of the symmetry group of the ansatz, as point maps.
/// A named point map.
pub type Generator = (String, Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>);

pub fn symmetry_generators(n: usize, k: usize) -> Vec<Generator> {
    let theta = 2.0 * PI / k as f64;
    let (s, c) = theta.sin_cos();
    let mut gens: Vec<Generator> = vec![
        (
            "rotation".into(),
            Box::new(move |y: &[f64]| {
                let mut z = y.to_vec();
                z[0] = c * y[0] - s * y[1];
                z[1] = s * y[0] + c * y[1];
                z
            }),
        ),
        ("reflect_y2".into(), Box::new(|y: &[f64]| flip(y, 1))),
        ("reflect_y3".into(), Box::new(|y: &[f64]| flip(y, 2))),
    ];
    for i in 3..n {
        gens.push((format!("reflect_y{}", i + 1), Box::new(move |y: &[f64]| flip(y, i))));
    }
    gens
}

fn flip(y: &[f64], i: usize) -> Vec<f64> {
    let mut z = y.to_vec();
    z[i] = -z[i];
    z
}

/// Probe points spread over the peaks and the bulk of the configuration.
pub fn probe_points(cfg: &Configuration, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = cfg.centers().all();
    let n = cfg.n();
    (0..samples)
        .map(|_| {
            let near = rng.random_bool(0.5);
            let scale = if near { 3.0 / cfg.mu } else { 1.5 * cfg.r };
            let base: Vec<f64> = if near {
                centers[rng.random_range(0..centers.len())].clone()
            } else {
                vec![0.0; n]
            };
            base.iter()
                .map(|b| b + scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Max relative deviation `|f(y) - f(g y)| / |f(y)|` over the generators.
pub fn symmetry_deviation<F>(f: F, n: usize, k: usize, points: &[Vec<f64>]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let gens = symmetry_generators(n, k);
    let mut worst: f64 = 0.0;
    for y in points {
        let base = f(y);
        for (_, g) in &gens {
            let v = f(&g(y));
            let dev = (v - base).abs() / base.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(dev);
        }
    }
    worst
}

/// Max relative deviation of the ansatz `W` under the symmetry generators.
pub fn symmetry_check(cfg: &Configuration, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(param("samples", "need at least one sample"));
    }
    let ansatz = crate::bubble::Ansatz::from_config(cfg);
    let pts = probe_points(cfg, samples, seed);
    Ok(symmetry_deviation(|y| ansatz.eval(y).w, cfg.n(), cfg.k, &pts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, k: usize, r: f64, h: f64) -> Configuration {
        Configuration::new(Dimension::new(n).unwrap(), k, r, h, 10.0).unwrap()
    }

    #[test]
    fn center_examples() {
        let c = cfg(5, 4, 1.0, 0.0).centers();
        let x3 = c.get(Ring::Upper, 3);
        assert!((x3[0] + 1.0).abs() < 1e-15 && x3[1].abs() < 1e-15);
        let c = cfg(5, 2, 2.0, 0.5).centers();
        let x1 = c.get(Ring::Upper, 1);
        assert!((x1[0] - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(&x1[1..], &[0.0, 1.0, 0.0, 0.0]);
        let c = cfg(6, 3, 1.0, 0.1).centers();
        let norm: f64 = c.get(Ring::Upper, 2).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        let d = Dimension::new(5).unwrap();
        assert!(Configuration::new(d, 1, 1.0, 0.1, 1.0).is_err());
        assert!(Configuration::new(d, 4, 0.0, 0.1, 1.0).is_err());
        assert!(Configuration::new(d, 4, 1.0, 1.0, 1.0).is_err());
        assert!(Configuration::new(d, 4, 1.0, -0.1, 1.0).is_err());
        assert!(Dimension::new(4).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(ring_distances(&cfg(5, 4, 1.0, 0.0), 3).unwrap().same, Some(2.0));
        let d = ring_distances(&cfg(5, 6, 2.0, 0.0), 2).unwrap().same.unwrap();
        assert!((d - 2.0).abs() < 1e-15);
        let d = ring_distances(&cfg(5, 6, 1.0, 0.3), 1).unwrap();
        assert!(d.same.is_none());
        assert!((d.cross - 0.6).abs() < 1e-15);
    }

    #[test]
    fn cell_examples() {
        let c = cfg(5, 7, 1.0, 0.2);
        let x2 = c.center(Ring::Upper, 2);
        assert_eq!(cell_index(&c, &x2), (2, Ring::Upper));
        assert_eq!(cell_index(&c, &[0.0; 5]), (1, Ring::Upper));
        let xl = c.center(Ring::Lower, 5);
        assert_eq!(cell_index(&c, &xl), (5, Ring::Lower));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = cfg(5, 3, 1.0, 0.2).centers().to_csv().unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "ring,j,y1,y2,y3,y4,y5");
        assert_eq!(lines.len(), 7);
        assert!(lines[4].starts_with("-,1,"));
    }
}
