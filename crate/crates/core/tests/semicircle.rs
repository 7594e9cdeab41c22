use std::f64::consts::PI;

use lss_clt::semicircle::{cdf, density, m_prime, moment, psi_k, semicircle_integral, stieltjes_m};
use lss_clt::TestFunction;
use num_complex::Complex64;
use proptest::prelude::*;

/// Composite Simpson rule for `∫ g(x) ρ(x) dx` after `x = 2 sin t`, which
/// makes the integrand smooth at the endpoints.
fn simpson_weighted(g: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let (a, b) = (-PI / 2.0, PI / 2.0);
    let h = (b - a) / intervals as f64;
    let w = |t: f64| {
        let x = 2.0 * t.sin();
        g(x) * density(x) * 2.0 * t.cos()
    };
    let mut s = w(a) + w(b);
    for i in 1..intervals {
        s += w(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn density_examples() {
    assert!((density(0.0) - 1.0 / PI).abs() < 1e-15);
    assert_eq!(density(2.0), 0.0);
    assert_eq!(density(-2.0), 0.0);
    assert_eq!(density(3.0), 0.0);
    let mass = simpson_weighted(|_| 1.0, 10_000);
    assert!((mass - 1.0).abs() <= 1e-8);
}

#[test]
fn cdf_examples() {
    assert_eq!(cdf(0.0), 0.5);
    assert_eq!(cdf(2.0), 1.0);
    assert_eq!(cdf(-2.0), 0.0);
    let h = 1e-5;
    let fd = (cdf(1.0 + h) - cdf(1.0 - h)) / (2.0 * h);
    assert!((fd - density(1.0)).abs() <= 1e-6);
}

#[test]
fn moments_against_quadrature() {
    for k in 0..=12u32 {
        let q = simpson_weighted(|x| x.powi(k as i32), 4000);
        assert!((moment(k) - q).abs() <= 1e-9, "k={k}: {} vs {q}", moment(k));
    }
    assert_eq!(moment(2), 1.0);
    assert_eq!(moment(4), 2.0);
    assert_eq!(moment(3), 0.0);
}

#[test]
fn catalan_integrals() {
    let catalan = [1.0, 1.0, 2.0, 5.0, 14.0, 42.0, 132.0];
    for (j, c) in catalan.into_iter().enumerate() {
        let mut coeffs = vec![0.0; 2 * j + 1];
        coeffs[2 * j] = 1.0;
        let v = semicircle_integral(&TestFunction::poly(coeffs)).unwrap();
        assert!((v - c).abs() <= 1e-10, "j={j}: {v}");
    }
}

#[test]
fn psi_of_square() {
    let sq = TestFunction::builtin("xsq").unwrap();
    assert!(psi_k(&sq, 1, 256).unwrap().abs() < 1e-12);
    assert!((psi_k(&sq, 2, 256).unwrap() - 1.0).abs() < 1e-12);
    assert!(psi_k(&sq, 5, 256).unwrap().abs() < 1e-12);
    // oracle: (1/2π) ∫ 4cos²θ dθ
    let oracle = {
        let m = 20_000;
        (0..m).map(|i| 4.0 * (2.0 * PI * (i as f64 + 0.5) / m as f64).cos().powi(2)).sum::<f64>() / m as f64
    };
    assert!((psi_k(&sq, 0, 256).unwrap() - oracle).abs() < 1e-10);
    assert!((semicircle_integral(&sq).unwrap() - 1.0).abs() < 1e-12);
    assert!((semicircle_integral(&TestFunction::constant(1.0)).unwrap() - 1.0).abs() < 1e-14);
    assert!(semicircle_integral(&TestFunction::builtin("x").unwrap()).unwrap().abs() < 1e-14);
}

#[test]
fn semicircle_integral_matches_simpson_for_entire_function() {
    let f = TestFunction::custom("exp", f64::exp, |w: Complex64| w.exp(), None);
    let q = simpson_weighted(f64::exp, 4000);
    assert!((semicircle_integral(&f).unwrap() - q).abs() <= 1e-10);
}

#[test]
fn stieltjes_examples() {
    let m = stieltjes_m(Complex64::new(3.0, 0.0)).unwrap().m;
    assert!((m - Complex64::new((-3.0 + 5f64.sqrt()) / 2.0, 0.0)).norm() < 1e-15);
    let m = stieltjes_m(Complex64::new(0.0, 1.0)).unwrap().m;
    assert!((m - Complex64::new(0.0, (5f64.sqrt() - 1.0) / 2.0)).norm() < 1e-15);
    let m = stieltjes_m(Complex64::new(1e6, 0.0)).unwrap().m;
    assert!((m.norm() - 1e-6).abs() < 1e-15);
    assert!(stieltjes_m(Complex64::new(1.0, 0.0)).is_err());
}

#[test]
fn stieltjes_identity_on_thousand_points() {
    let mut checked = 0;
    for i in 0..40 {
        for j in 0..25 {
            let z = Complex64::new(-8.0 + 0.41 * i as f64, -5.0 + 0.42 * j as f64);
            let Ok(pt) = stieltjes_m(z) else { continue };
            checked += 1;
            assert!((pt.m * pt.m + z * pt.m + 1.0).norm() <= 1e-12, "{z}");
            assert!(pt.m.norm() <= 1.0 + 1e-15);
            if z.im > 0.0 {
                assert!(pt.m.im > 0.0);
            }
            let c = stieltjes_m(z.conj()).unwrap().m;
            assert_eq!(c, pt.m.conj());
        }
    }
    assert_eq!(checked, 1000);
}

#[test]
fn m_prime_examples() {
    assert_eq!(m_prime(Complex64::new(0.0, 0.0)).unwrap(), Complex64::new(0.0, 0.0));
    assert!((m_prime(Complex64::new(0.5, 0.0)).unwrap().re - 1.0 / 3.0).abs() < 1e-15);
    assert!(m_prime(Complex64::new(1.0, 0.0)).is_err());
    let h = 1e-5;
    let z = Complex64::new(3.0, 0.0);
    let fd = (stieltjes_m(z + h).unwrap().m - stieltjes_m(z - h).unwrap().m) / (2.0 * h);
    let m = stieltjes_m(z).unwrap().m;
    assert!((fd - m_prime(m).unwrap()).norm() <= 1e-6);
}

fn poly_strategy() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn psi_is_linear(a in poly_strategy(), b in poly_strategy(), s in -3.0f64..3.0, t in -3.0f64..3.0, k in 0usize..10) {
        let len = a.len().max(b.len());
        let mix: Vec<f64> = (0..len).map(|i| s * a.get(i).unwrap_or(&0.0) + t * b.get(i).unwrap_or(&0.0)).collect();
        let lhs = psi_k(&TestFunction::poly(mix), k, 64).unwrap();
        let rhs = s * psi_k(&TestFunction::poly(a), k, 64).unwrap() + t * psi_k(&TestFunction::poly(b), k, 64).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()) * 10.0);
    }

    #[test]
    fn psi_of_constant(c in -10.0f64..10.0, k in 1usize..20) {
        let f = TestFunction::constant(c);
        prop_assert!((psi_k(&f, 0, 32).unwrap() - c).abs() <= 1e-14 * c.abs().max(1.0));
        prop_assert!(psi_k(&f, k, 32).unwrap().abs() <= 1e-14 * c.abs().max(1.0));
    }

    #[test]
    fn psi_is_node_count_independent(c in poly_strategy(), extra in 0usize..4) {
        let d = c.len() - 1;
        let f = TestFunction::poly(c);
        let base = d + 1 + extra;
        for k in 0..=d + 1 {
            let a = psi_k(&f, k, base).unwrap();
            let b = psi_k(&f, k, 2 * base).unwrap();
            let e = psi_k(&f, k, 4 * base).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 && (b - e).abs() <= 1e-12, "k={} {} {} {}", k, a, b, e);
        }
    }
}
