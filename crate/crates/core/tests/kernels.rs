use std::collections::BTreeMap;

use mpradon::kernels::{Factor, SeparableTerm};
use mpradon::{BumpSpec, DilationScheme, DyadicKernel, ParamLattice, Rational, Shape, UniformGrid};
use proptest::prelude::*;

fn r(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// A scheme with fractional exponents so `powf` is exercised too.
fn mixed_scheme() -> DilationScheme {
    DilationScheme::new(2, vec![vec![r(1, 1), r(0, 1)], vec![r(1, 2), r(2, 1)], vec![r(0, 1), r(3, 2)]]).unwrap()
}

proptest! {
    #[test]
    fn dilation_composes(d1 in 0.05f64..1.0, d2 in 0.05f64..1.0, e1 in 0.05f64..1.0, e2 in 0.05f64..1.0,
                         t in prop::collection::vec(-3.0f64..3.0, 3)) {
        let s = mixed_scheme();
        let inner = s.scale_point(&[e1, e2], &t).unwrap();
        let lhs = s.scale_point(&[d1, d2], &inner).unwrap();
        let rhs = s.scale_point(&[d1 * e1, d2 * e2], &t).unwrap();
        for (a, b) in lhs.iter().zip(&rhs) {
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE), "{a} vs {b}");
        }
    }

    #[test]
    fn dilation_preserves_mass(j in 0u32..6, radius in 0.1f64..0.5) {
        let s = DilationScheme::isotropic(1);
        let b = BumpSpec::product(&[Shape::Poly(2)], radius).unwrap();
        let d = b.dilate(&s, &[j]).unwrap();
        let h = d.support_box()[0];
        let n = 4000;
        let dx = 2.0 * h / n as f64;
        // Midpoint rule on a smooth compactly supported function.
        let mass: f64 = (0..n).map(|k| d.eval(&[-h + (k as f64 + 0.5) * dx]) * dx).sum();
        prop_assert!((mass - b.integral()).abs() <= 1e-9 * b.integral().abs());
    }
}

#[test]
fn flag_enumeration_matches_brute_force() {
    let got = ParamLattice::flag(3).enumerate(2);
    let mut want = Vec::new();
    for a in 0..=2u32 {
        for b in 0..=2 {
            for c in 0..=2 {
                if a <= b && b <= c {
                    want.push(vec![a, b, c]);
                }
            }
        }
    }
    assert_eq!(want.len(), 10);
    assert_eq!(got, want);
}

#[test]
fn dilation_shrinks_support_and_raises_sup() {
    let a = 0.5;
    let s = DilationScheme::isotropic(1);
    let b = BumpSpec::product(&[Shape::Mollifier], a).unwrap();
    let d = b.dilate(&s, &[3]).unwrap();
    let n = 4096;
    let xs: Vec<f64> = (0..n).map(|k| -a + 2.0 * a * k as f64 / (n - 1) as f64).collect();
    let sup = |f: &dyn Fn(f64) -> f64| xs.iter().map(|&x| f(x).abs()).fold(0.0, f64::max);
    let reach = xs.iter().filter(|&&x| d.eval(&[x]) != 0.0).map(|x| x.abs()).fold(0.0, f64::max);
    assert!(reach <= a / 8.0, "support reaches {reach}");
    assert!(reach > 0.9 * a / 8.0);
    // x = 0 is not on the grid, so compare sups at the grid resolution.
    let ratio = sup(&|x| d.eval(&[x])) / sup(&|x| b.eval(&[x]));
    assert!((ratio - 8.0).abs() < 8.0 * 1e-3, "ratio {ratio}");
}

#[test]
fn missing_cancellation_is_reported() {
    let s = DilationScheme::isotropic(1);
    let lat = ParamLattice::product(1);
    let good = BumpSpec::product(&[Shape::Deriv(1)], 0.5).unwrap();
    let bad = BumpSpec::product(&[Shape::Mollifier], 0.5).unwrap();
    let mut family: BTreeMap<Vec<u32>, BumpSpec> = (0..=4).map(|j| (vec![j], good.clone())).collect();
    let k = DyadicKernel::new(s.clone(), lat.clone(), family.clone(), 1.0).unwrap();
    assert!(k.check_cancellation(1e-10).unwrap().pass);

    family.insert(vec![3], bad.clone());
    let rep = DyadicKernel::new(s, lat, family, 1.0).unwrap().check_cancellation(1e-10).unwrap();
    assert!(!rep.pass);
    // Independent midpoint quadrature of the offending bump.
    let n = 20000;
    let mass: f64 = (0..n).map(|k| bad.eval(&[-0.5 + (k as f64 + 0.5) / n as f64]) / n as f64).sum();
    assert!(mass > 0.1);
    let worst = rep.entries.iter().find(|e| !e.pass).unwrap();
    assert_eq!(worst.j, vec![3]);
    assert!((rep.max_residual - mass).abs() < 1e-8, "{} vs {mass}", rep.max_residual);
}

#[test]
fn pairings_decay_geometrically() {
    let s = DilationScheme::isotropic(1);
    let bump = BumpSpec::product(&[Shape::Deriv(1)], 0.5).unwrap();
    let k = DyadicKernel::uniform(s, ParamLattice::product(1), bump, 6).unwrap();
    let f = |x: &[f64]| (-(x[0] - 0.3).powi(2)).exp();
    let p = k.pairings(6, f, 12).unwrap();
    assert_eq!(p.len(), 7);
    // Least squares on log2 |<sigma_j, f>| against j.
    let pts: Vec<(f64, f64)> = p.iter().map(|(j, v)| (f64::from(j[0]), v.abs().log2())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    assert!(slope < -0.5, "slope {slope}");
    assert!(r2 >= 0.95, "R^2 {r2}");
    // The increments sum: partial sums form a Cauchy sequence.
    let tail: f64 = p[4..].iter().map(|(_, v)| v.abs()).sum();
    assert!(tail < 0.2 * p[0].1.abs());
}

#[test]
fn product_kernel_size_bound_is_stable() {
    let s = DilationScheme::product(2);
    let bump = BumpSpec::product(&[Shape::Deriv(1), Shape::Deriv(1)], 0.5).unwrap();
    let grid = UniformGrid::cube(2, -0.6, 0.6, 41);
    let c = |bound| {
        DyadicKernel::uniform(s.clone(), ParamLattice::product(2), bump.clone(), bound)
            .unwrap()
            .product_decay_constant(bound, &grid, 0.02)
            .unwrap()
    };
    let (c4, c8) = (c(4), c(8));
    assert!(c4 > 0.0 && c4.is_finite());
    assert!((c8 / c4 - 1.0).abs() < 0.25, "C4 {c4}, C8 {c8}");
}

#[test]
fn separable_terms_sum() {
    let phi = Factor::new(Shape::Mollifier, 0.5).unwrap();
    let dphi = Factor::new(Shape::Deriv(1), 0.5).unwrap();
    let terms = vec![
        SeparableTerm { coef: 2.0, factors: vec![phi.clone(), dphi.clone()] },
        SeparableTerm { coef: -1.0, factors: vec![dphi.clone(), phi.clone()] },
    ];
    assert!(BumpSpec::new(2, terms.clone(), 0.5).is_err());
    let b = BumpSpec::new(2, terms, 0.5 * 2f64.sqrt()).unwrap();
    for t in [[0.1, -0.2], [0.3, 0.05], [-0.25, 0.4]] {
        let want = 2.0 * phi.eval(t[0]) * dphi.eval(t[1]) - dphi.eval(t[0]) * phi.eval(t[1]);
        assert!((b.eval(&t) - want).abs() < 1e-15);
    }
    assert!(b.integral().abs() < 1e-14);
}
