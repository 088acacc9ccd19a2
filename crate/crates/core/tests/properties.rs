use double_tower::bubble::{bubble_laplacian, bubble_value};
use double_tower::constants::eval_constants;
use double_tower::geometry::{probe_points, ring_distances, symmetry_check, symmetry_deviation, Configuration, Dimension, Ring};
use double_tower::lattice::{sum_exact, sum_naive, RingKind, SumQuery, Weight};
use double_tower::potentials::{r2v_slope, Potential, RadialPotential};
use double_tower::reduced::{f_main, grad_main, RemainderModel};
use double_tower::residual::residual_at;
use proptest::prelude::*;

fn dim(n: usize) -> Dimension {
    Dimension::new(n).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_distances_match_euclidean(n in 5usize..9, k in 2usize..200, r in 0.1..5.0f64, h in 0.0..0.99f64) {
        let cfg = Configuration::new(dim(n), k, r, h, 1.0).unwrap();
        let x1 = cfg.center(Ring::Upper, 1);
        for j in 1..=k {
            let d = ring_distances(&cfg, j).unwrap();
            let cross = dist(&cfg.center(Ring::Lower, j), &x1);
            prop_assert!((d.cross - cross).abs() <= 1e-14 * cross.max(1e-300) + 1e-15);
            if let Some(same) = d.same {
                let brute = dist(&cfg.center(Ring::Upper, j), &x1);
                prop_assert!((same - brute).abs() <= 1e-14 * brute + 1e-15, "j={} {} {}", j, same, brute);
            }
        }
    }

    #[test]
    fn bubble_solves_critical_equation(n in 5usize..11, mu in 0.1..50.0f64, y in point(10)) {
        let d = dim(n);
        let x = vec![0.1; n];
        let y = &y[..n];
        let u = bubble_value(d, &x, mu, y);
        let lap = bubble_laplacian(d, &x, mu, y);
        let rhs = u.powf(d.power());
        prop_assert!((-lap - rhs).abs() <= 1e-10 * rhs.abs(), "{} vs {}", -lap, rhs);
    }

    #[test]
    fn bubble_scaling_covariance(n in 5usize..11, mu in 0.1..100.0f64, y in point(10)) {
        let d = dim(n);
        let x: Vec<f64> = (0..n).map(|i| 0.3 - 0.1 * i as f64).collect();
        let y = &y[..n];
        let scaled: Vec<f64> = y.iter().zip(&x).map(|(a, b)| mu * (a - b)).collect();
        let lhs = bubble_value(d, &x, mu, y);
        let rhs = mu.powf(d.m()) * bubble_value(d, &vec![0.0; n], 1.0, &scaled);
        prop_assert!((lhs - rhs).abs() <= 1e-13 * lhs);
    }

    #[test]
    fn ansatz_is_symmetric(n in 5usize..8, k in 2usize..12, h in 0.05..0.9f64, mu in 1.0..40.0f64, seed in any::<u64>()) {
        let cfg = Configuration::new(dim(n), k, 1.0, h, mu).unwrap();
        prop_assert!(symmetry_check(&cfg, 20, seed).unwrap() < 1e-12);
    }

    #[test]
    fn residual_is_equivariant(k in 2usize..10, h in 0.05..0.9f64, mu in 5.0..60.0f64, seed in any::<u64>()) {
        let cfg = Configuration::new(dim(5), k, 1.0, h, mu).unwrap();
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let pts = probe_points(&cfg, 10, seed);
        // the residual is a difference of large terms; cancellation costs a few digits
        let dev = symmetry_deviation(|y| residual_at(&cfg, &v, y), 5, k, &pts);
        prop_assert!(dev < 1e-9, "{dev}");
    }

    #[test]
    fn paired_sum_matches_naive(n in 5usize..9, k in 2usize..400, h in 0.0..0.9f64, cross in any::<bool>(), weighted in any::<bool>()) {
        let q = SumQuery {
            dim: dim(n),
            k,
            r: 1.0,
            h: if cross { h.max(0.01) } else { h },
            alpha: n as f64 - 2.0,
            ring: if cross { RingKind::Cross } else { RingKind::Same },
            weight: if weighted { Weight::OneMinusCos } else { Weight::One },
        };
        let (a, b) = (sum_exact(&q).unwrap(), sum_naive(&q).unwrap());
        prop_assert!((a - b).abs() <= 1e-13 * b.abs(), "{a} {b}");
    }

    #[test]
    fn sums_decrease_in_radius_and_height(k in 2usize..300, r in 0.2..3.0f64, h in 0.01..0.8f64) {
        let base = SumQuery { dim: dim(5), k, r, h, alpha: 3.0, ring: RingKind::Same, weight: Weight::One };
        let s = sum_exact(&base).unwrap();
        prop_assert!(s > 0.0);
        let wider = sum_exact(&SumQuery { r: r * 1.01, ..base }).unwrap();
        let higher = sum_exact(&SumQuery { h: h + 0.01, ..base }).unwrap();
        prop_assert!(wider < s);
        prop_assert!(higher > s);
        let c = SumQuery { ring: RingKind::Cross, ..base };
        let cross_wider = sum_exact(&SumQuery { r: r * 1.01, ..c }).unwrap();
        prop_assert!(cross_wider < sum_exact(&c).unwrap());
    }

    #[test]
    fn potential_derivatives_match_differences(r0 in 0.5..2.0f64, v0 in 0.2..3.0f64, a in 0.0..2.0f64, w in 0.2..1.0f64, s in 0.1..4.0f64) {
        let v = match Potential::bump_critical_at(r0, v0, a, w) {
            Ok(v) => v,
            Err(_) => return Ok(()),
        };
        let e = 1e-4 * s;
        let fd = (8.0 * (v.value(s + e) - v.value(s - e)) - (v.value(s + 2.0 * e) - v.value(s - 2.0 * e))) / (12.0 * e);
        let scale = v.derivative(s).abs().max(v.value(s).abs() / s).max(1e-12);
        prop_assert!((fd - v.derivative(s)).abs() <= 1e-7 * scale);
        prop_assert!(r2v_slope(&v, r0).abs() <= 1e-9 * v0 * r0);
    }

    #[test]
    fn bn_potential_is_positive(n in 5usize..11, excess in 0.01..20.0f64, s in 0.0..50.0f64) {
        let nf = n as f64;
        let v = Potential::bn(-nf * (nf - 2.0) / 4.0 - excess, n).unwrap();
        prop_assert!(v.value(s) > 0.0);
    }

    #[test]
    fn mu0_decreases_in_scaled_potential(n in 5usize..11, r in 0.3..3.0f64, v in 0.1..5.0f64) {
        let c = eval_constants(dim(n));
        prop_assert!(c.mu0(r, v * 1.05) < c.mu0(r, v));
        let nf = n as f64;
        let mu = c.mu0(r, v);
        let b3 = c.b3(r);
        let pot = 2.0 * c.a2 * v / mu.powi(3);
        let ring = (nf - 2.0) * b3 / mu.powf(nf - 1.0);
        prop_assert!((pot - ring).abs() <= 1e-12 * pot);
    }

    #[test]
    fn gradient_matches_differences(n in 5usize..8, k in 32usize..256, dr in -0.1..0.1f64, sh in 0.6..1.4f64, sm in 0.6..1.4f64) {
        let d = dim(n);
        let c = eval_constants(d);
        let v = Potential::bump_critical_at(1.0, 1.0, 0.0, 0.5).unwrap();
        let kf = k as f64;
        let r = 1.0 + dr;
        let h = (c.h0() * kf.powf(-d.h_exponent()) * sh).min(0.9);
        let mu = c.mu0(1.0, 1.0) * kf.powf(d.mu_exponent()) * sm;
        let m = RemainderModel::default();
        let f = |r: f64, h: f64, mu: f64| f_main(d, k, r, h, mu, &v, &m).unwrap().terms.varying();
        let g = grad_main(d, k, r, h, mu, &v).unwrap();
        let fd = |x: f64, f1: &dyn Fn(f64) -> f64| {
            let e = 1e-3 * x;
            (8.0 * (f1(x + e) - f1(x - e)) - (f1(x + 2.0 * e) - f1(x - 2.0 * e))) / (12.0 * e)
        };
        let num = [fd(r, &|t| f(t, h, mu)), fd(h, &|t| f(r, t, mu)), fd(mu, &|t| f(r, h, t))];
        for (a, b) in [g.dr, g.dh, g.dmu].iter().zip(num) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs(), "{a} {b}");
        }
    }
}
