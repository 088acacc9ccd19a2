//! Gamma-based closed forms, the Riemann zeta function at integer-ish
//! arguments, and unit-sphere areas.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// `∫_{R^n} (1+|z|²)^{-s} dz = π^{n/2} Γ(s-n/2) / Γ(s)`, valid for `s > n/2`.
pub fn power_bump_integral(n: usize, s: f64) -> f64 {
    let half = n as f64 / 2.0;
    assert!(s > half, "integral diverges for s <= n/2");
    (half * PI.ln() + ln_gamma(s - half) - ln_gamma(s)).exp()
}

/// `∫_0^∞ (1+z²)^{-a} dz = √π Γ(a-1/2) / (2 Γ(a))`, valid for `a > 1/2`.
pub fn half_line_bump_integral(a: f64) -> f64 {
    assert!(a > 0.5);
    0.5 * (0.5 * PI.ln() + ln_gamma(a - 0.5) - ln_gamma(a)).exp()
}

/// Area of the unit sphere `S^n ⊂ R^{n+1}` via the two-step recursion
/// `|S^n| = 2π |S^{n-2}| / (n-1)`. Kept free of the Gamma function so it can
/// serve as an independent check.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI * sphere_area(n - 2) / (n as f64 - 1.0),
    }
}

/// Riemann zeta for real `s > 1`.
///
/// Direct partial sum up to `m-1`, then the integral tail `m^{1-s}/(s-1)`
/// with its first two Euler-Maclaurin corrections. The cutoff `m` is grown
/// until the first omitted correction drops below `1e-15`.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta needs s > 1");
    let mut m: usize = 16;
    loop {
        let mf = m as f64;
        let omitted = s * (s + 1.0) * (s + 2.0) / 720.0 * mf.powf(-s - 3.0);
        if omitted < 1e-15 || m > 1 << 22 {
            break;
        }
        m *= 2;
    }
    let mf = m as f64;
    let mut acc = crate::summation::Neumaier::new();
    for j in (1..m).rev() {
        acc.add((j as f64).powf(-s));
    }
    acc.add(mf.powf(1.0 - s) / (s - 1.0));
    acc.add(0.5 * mf.powf(-s));
    acc.add(s / 12.0 * mf.powf(-s - 1.0));
    acc.value()
}
