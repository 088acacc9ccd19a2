//! Exact lattice sums over the two rings and their leading asymptotic laws.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::eval_constants;
use crate::error::{param, Result};
use crate::geometry::{Configuration, Dimension};
use crate::summation::{chunked_sum, Neumaier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingKind {
    Same,
    Cross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    One,
    /// `1 - cos θ_j` with `θ_j = 2(j-1)π/k`.
    OneMinusCos,
}

/// One lattice sum. Ring geometry is stored directly so that the formal
/// `k = 1` cross sum can be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumQuery {
    pub dim: Dimension,
    pub k: usize,
    pub r: f64,
    pub h: f64,
    pub alpha: f64,
    pub ring: RingKind,
    pub weight: Weight,
}

impl SumQuery {
    pub fn new(cfg: &Configuration, alpha: f64, ring: RingKind, weight: Weight) -> Self {
        Self {
            dim: cfg.dim,
            k: cfg.k,
            r: cfg.r,
            h: cfg.h,
            alpha,
            ring,
            weight,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) {
            return Err(param("alpha", "need alpha >= 1"));
        }
        if !(self.r > 0.0) || !(0.0..1.0).contains(&self.h) {
            return Err(param("r", "need r > 0 and 0 <= h < 1"));
        }
        match self.ring {
            RingKind::Same if self.k < 2 => Err(param("k", "same-ring sums need k >= 2")),
            RingKind::Cross if self.k < 1 => Err(param("k", "need k >= 1")),
            RingKind::Cross if self.h == 0.0 => Err(param("h", "cross-ring sum has a zero distance at h = 0")),
            _ => Ok(()),
        }
    }

    /// `sin((j-1)π/k)`, evaluated at the reflected index when that angle is
    /// smaller so that `j` and `k+2-j` give bit-identical values.
    fn half_angle_sin(&self, j: usize) -> f64 {
        let m = (j - 1).min(self.k - (j - 1));
        (m as f64 * PI / self.k as f64).sin()
    }

    /// Summand for index `j` (1-based).
    pub fn term(&self, j: usize) -> f64 {
        let s = self.half_angle_sin(j);
        let c2 = 1.0 - self.h * self.h;
        let d = match self.ring {
            RingKind::Same => 2.0 * self.r * c2.sqrt() * s,
            RingKind::Cross => 2.0 * self.r * (c2 * s * s + self.h * self.h).sqrt(),
        };
        // 1 - cos θ_j = 2 sin²(θ_j/2)
        let w = match self.weight {
            Weight::One => 1.0,
            Weight::OneMinusCos => 2.0 * s * s,
        };
        w * d.powf(-self.alpha)
    }
}

/// Same-ring sums use the reflection `j ↔ k+2-j`: each pair is counted once
/// and doubled, with the middle term (even `k`) added alone.
pub fn sum_exact(q: &SumQuery) -> Result<f64> {
    q.validate()?;
    let k = q.k;
    Ok(match q.ring {
        RingKind::Same => {
            let half = (k - 1) / 2;
            let paired = chunked_sum(2, 2 + half, |j| q.term(j));
            let mut acc = Neumaier::new();
            acc.add(2.0 * paired);
            if k.is_multiple_of(2) {
                acc.add(q.term(k / 2 + 1));
            }
            acc.value()
        }
        RingKind::Cross => chunked_sum(1, k + 1, |j| q.term(j)),
    })
}

/// Plain summation over every index, for checking the paired path.
pub fn sum_naive(q: &SumQuery) -> Result<f64> {
    q.validate()?;
    let start = if q.ring == RingKind::Same { 2 } else { 1 };
    Ok((start..=q.k).map(|j| q.term(j)).collect::<Neumaier>().value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Law {
    B3,
    B4,
    B5,
    B6,
    B7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionModel {
    Zeta1,
    Zeta2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticResult {
    pub law: Law,
    pub leading: f64,
    pub correction_model: CorrectionModel,
    /// Expected decay exponent of the relative error, in `k` for the same
    /// ring and in `hk` for the cross ring.
    pub predicted_rate: f64,
    /// `false` when a cross-ring law is evaluated with `hk < 5`.
    pub regime_ok: bool,
}

pub const HK_REGIME: f64 = 5.0;

pub fn classify(q: &SumQuery) -> Result<Law> {
    let nf = q.dim.nf();
    let is = |a: f64| (q.alpha - a).abs() < 1e-12;
    match (q.ring, q.weight) {
        (RingKind::Same, Weight::One) if is(nf - 2.0) => Ok(Law::B3),
        (RingKind::Cross, Weight::One) if is(nf - 2.0) => Ok(Law::B4),
        (RingKind::Same, Weight::OneMinusCos) if is(nf) => Ok(Law::B5),
        (RingKind::Cross, Weight::OneMinusCos) if is(nf) => Ok(Law::B6),
        (RingKind::Cross, Weight::One) if is(nf) => Ok(Law::B7),
        _ => Err(param("alpha", "no asymptotic law for this ring/weight/exponent combination")),
    }
}

/// Leading term of the asymptotic law matching the query.
///
/// For the pure-power cross sum at exponent `N` the leading constant is
/// `(N-3) B2 k / (4 (N-2) r^N h^{N-1} √(1-h²))`; the factor 1/4 comes from
/// `B2` being normalised for exponent `N-2`.
pub fn sum_asymptotic(q: &SumQuery) -> Result<AsymptoticResult> {
    q.validate()?;
    let law = classify(q)?;
    let c = eval_constants(q.dim);
    let nf = q.dim.nf();
    let kf = q.k as f64;
    let (r, h) = (q.r, q.h);
    let sq = (1.0 - h * h).sqrt();
    let leading = match law {
        Law::B3 => c.b1 * kf.powf(nf - 2.0) / (r * sq).powf(nf - 2.0),
        Law::B4 => c.b2 * kf / (r.powf(nf - 2.0) * h.powf(nf - 3.0) * sq),
        Law::B5 => 0.5 * c.b1 * kf.powf(nf - 2.0) / (r * sq).powf(nf),
        Law::B6 => c.b2 * kf / (2.0 * (nf - 2.0) * r.powf(nf) * h.powf(nf - 3.0) * sq.powi(3)),
        Law::B7 => (nf - 3.0) * c.b2 * kf / (4.0 * (nf - 2.0) * r.powf(nf) * h.powf(nf - 1.0) * sq),
    };
    let same = matches!(law, Law::B3 | Law::B5);
    Ok(AsymptoticResult {
        law,
        leading,
        correction_model: if same { CorrectionModel::Zeta1 } else { CorrectionModel::Zeta2 },
        predicted_rate: if same { 2.0 } else { 1.0 },
        regime_ok: same || h * kf >= HK_REGIME,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub k: usize,
    pub h: f64,
    pub exact: f64,
    pub leading: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    /// `"k"` or `"hk"`: the abscissa of the log-log fit.
    pub abscissa: String,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    /// Ratio of largest to smallest `|rel_err|`.
    pub spread: f64,
    pub saturated: bool,
}

/// Least-squares fit of `log|exact/leading - 1|` against `log k` (same ring)
/// or `log(hk)` (cross ring; falls back to `log k` when `hk` is constant).
pub fn rate_study<H>(template: &SumQuery, k_list: &[usize], h_rule: H) -> Result<RateFit>
where
    H: Fn(usize) -> f64,
{
    if k_list.len() < 4 || k_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(param("k_list", "need at least four increasing values"));
    }
    let mut points = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let q = SumQuery { k, h: h_rule(k), ..*template };
        let exact = sum_exact(&q)?;
        let leading = sum_asymptotic(&q)?.leading;
        points.push(RatePoint { k, h: q.h, exact, leading, rel_err: exact / leading - 1.0 });
    }
    let saturated = points.iter().all(|p| p.rel_err.abs() < 1e-13);
    let hk: Vec<f64> = points.iter().map(|p| p.h * p.k as f64).collect();
    let hk_constant = hk.iter().all(|v| (v / hk[0] - 1.0).abs() < 1e-9);
    let use_hk = template.ring == RingKind::Cross && !hk_constant;
    let xs: Vec<f64> = points
        .iter()
        .zip(&hk)
        .map(|(p, hk)| if use_hk { hk.ln() } else { (p.k as f64).ln() })
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.rel_err.abs().max(1e-300).ln()).collect();
    let (slope, intercept, residual) = linear_fit(&xs, &ys);
    let abs: Vec<f64> = points.iter().map(|p| p.rel_err.abs()).collect();
    let spread = abs.iter().cloned().fold(0.0, f64::max) / abs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RateFit {
        points,
        abscissa: if use_hk { "hk".into() } else { "k".into() },
        slope,
        intercept,
        residual,
        spread,
        saturated,
    })
}

/// Ordinary least squares `y = a x + b`; returns `(a, b, rms residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let b = my - a * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: usize, k: usize, r: f64, h: f64, alpha: f64, ring: RingKind, weight: Weight) -> SumQuery {
        SumQuery { dim: Dimension::new(n).unwrap(), k, r, h, alpha, ring, weight }
    }

    #[test]
    fn small_examples() {
        let v = sum_exact(&q(5, 2, 1.0, 0.0, 1.0, RingKind::Same, Weight::One)).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let v = sum_exact(&q(5, 4, 1.0, 0.0, 3.0, RingKind::Same, Weight::One)).unwrap();
        assert!((v - (2.0 / 2f64.sqrt().powi(3) + 0.125)).abs() < 1e-15);
        assert!((v - 0.832_107).abs() < 1e-6);
        let v = sum_exact(&q(5, 1, 1.0, 0.25, 3.0, RingKind::Cross, Weight::One)).unwrap();
        assert!((v - 8.0).abs() < 1e-13);
        assert!(sum_exact(&q(5, 1, 1.0, 0.25, 3.0, RingKind::Same, Weight::One)).is_err());
        assert!(sum_exact(&q(5, 4, 1.0, 0.0, 3.0, RingKind::Cross, Weight::One)).is_err());
    }

    #[test]
    fn b3_at_zero_height() {
        let a = sum_asymptotic(&q(5, 10, 1.0, 0.0, 3.0, RingKind::Same, Weight::One)).unwrap();
        let c = eval_constants(Dimension::new(5).unwrap());
        assert!((a.leading - c.b1 * 1000.0).abs() < 1e-12);
        let v = q(5, 400, 1.0, 0.01, 3.0, RingKind::Same, Weight::One);
        let ratio = sum_exact(&v).unwrap() / sum_asymptotic(&v).unwrap().leading;
        assert!((ratio - 1.0).abs() < 0.01);
    }

    #[test]
    fn b4_height_power_law() {
        let a = sum_asymptotic(&q(6, 100, 1.0, 0.1, 4.0, RingKind::Cross, Weight::One)).unwrap();
        let b = sum_asymptotic(&q(6, 100, 1.0, 0.2, 4.0, RingKind::Cross, Weight::One)).unwrap();
        let sq = |h: f64| (1.0 - h * h).sqrt();
        let expect = 2f64.powi(-3) * sq(0.1) / sq(0.2);
        assert!((b.leading / a.leading - expect).abs() < 1e-14);
    }

    #[test]
    fn pairing_matches_naive() {
        for k in [2, 3, 10, 11, 1000, 1001, 20_000] {
            for (alpha, w) in [(3.0, Weight::One), (5.0, Weight::OneMinusCos)] {
                let qq = q(5, k, 1.1, 0.05, alpha, RingKind::Same, w);
                let a = sum_exact(&qq).unwrap();
                let b = sum_naive(&qq).unwrap();
                assert!((a / b - 1.0).abs() < 1e-15, "k={k}: {a} {b}");
            }
        }
    }

    #[test]
    fn weighted_identity_two_orders() {
        // (1-cos θ) d^{-N} = 2 (2r√(1-h²))^{-N} sin^{2-N}(θ/2)
        for (k, r, h) in [(7, 1.0, 0.1), (50, 1.3, 0.4), (1000, 0.7, 0.02)] {
            let qq = q(5, k, r, h, 5.0, RingKind::Same, Weight::OneMinusCos);
            let direct = sum_exact(&qq).unwrap();
            let pref = 2.0 * (2.0 * r * (1.0 - h * h).sqrt()).powi(-5);
            let other: f64 = (2..=k)
                .map(|j| (((j - 1).min(k + 1 - j)) as f64 * PI / k as f64).sin().powi(-3))
                .collect::<Neumaier>()
                .value()
                * pref;
            assert!((direct / other - 1.0).abs() < 1e-14, "{direct} {other}");
        }
    }
}
