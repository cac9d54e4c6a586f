use mpradon::decide::heisenberg::HeisPoint;
use mpradon::decide::{newton_verdict, reference_corpus, Classification, NewtonMode, NewtonOptions, Q};
use mpradon::PolySurface;
use proptest::prelude::*;

fn q() -> impl Strategy<Value = Q> {
    (-20i64..20, 1i64..7).prop_map(|(n, d)| Q::new(n, d))
}

fn point() -> impl Strategy<Value = HeisPoint<Q>> {
    (q(), q(), q()).prop_map(|(x, y, t)| HeisPoint::new(x, y, t))
}

/// Random polynomial with both pure powers present, so a and b are finite.
fn poly() -> impl Strategy<Value = PolySurface> {
    (1u32..7, 1u32..7, prop::collection::vec((0u32..6, 0u32..6, -5i64..6), 0..5)).prop_map(|(a, b, extra)| {
        let mut terms = vec![((a, 0), Q::from(1)), ((0, b), Q::from(1))];
        terms.extend(extra.into_iter().filter(|&(e, f, c)| e + f > 0 && c != 0).map(|(e, f, c)| ((e, f), Q::from(c))));
        terms.sort_by_key(|t| t.0);
        terms.dedup_by_key(|t| t.0);
        PolySurface::new(terms).unwrap()
    })
}

proptest! {
    #[test]
    fn group_laws(g in point(), h in point(), k in point()) {
        let e = HeisPoint::<Q>::identity();
        prop_assert_eq!(g.mul(&h).mul(&k), g.mul(&h.mul(&k)));
        prop_assert_eq!(g.mul(&e), g);
        prop_assert_eq!(e.mul(&g), g);
        prop_assert_eq!(g.mul(&g.inverse()), e);
        prop_assert_eq!(g.inverse().mul(&g), e);
    }

    #[test]
    fn dilations_are_automorphisms(g in point(), h in point(), d1 in q(), d2 in q()) {
        prop_assert_eq!(g.mul(&h).dilate(d1, d2), g.dilate(d1, d2).mul(&h.dilate(d1, d2)));
    }

    #[test]
    fn product_verdict_is_swap_invariant(p in poly()) {
        let v = newton_verdict(&p, NewtonMode::Product, NewtonOptions::default()).unwrap();
        let w = newton_verdict(&p.swapped(), NewtonMode::Product, NewtonOptions::default()).unwrap();
        prop_assert_eq!(v.classification, w.classification);
        let mut swapped: Vec<(u32, u32)> = v.witnesses.iter().map(|&(e, f)| (f, e)).collect();
        swapped.sort();
        prop_assert_eq!(swapped, w.witnesses);
    }

    #[test]
    fn verdict_ignores_coefficient_scaling(p in poly(), n in 1i64..9, d in 1i64..9) {
        for mode in [NewtonMode::Product, NewtonMode::Flag] {
            let opts = NewtonOptions { swap_roles: true, ..Default::default() };
            let v = newton_verdict(&p, mode, opts).unwrap();
            let w = newton_verdict(&p.scaled_s(Q::new(n, d)).unwrap(), mode, opts).unwrap();
            prop_assert_eq!(v.classification, w.classification);
            prop_assert_eq!(v.witnesses, w.witnesses);
        }
    }

    #[test]
    fn flag_bounded_whenever_product_bounded(p in poly()) {
        let opts = NewtonOptions { swap_roles: true, ..Default::default() };
        let prod = newton_verdict(&p, NewtonMode::Product, opts).unwrap();
        let flag = newton_verdict(&p, NewtonMode::Flag, opts).unwrap();
        if prod.classification == Classification::Bounded {
            prop_assert_eq!(flag.classification, Classification::Bounded);
        }
        // Flag witnesses are product witnesses too.
        let prod_w: Vec<(u32, u32)> = if flag.swapped { prod.witnesses.iter().map(|&(e, f)| (f, e)).collect() } else { prod.witnesses.clone() };
        for w in &flag.witnesses {
            prop_assert!(prod_w.contains(w), "{:?} not in {:?}", w, prod_w);
        }
    }
}

/// Brute-force line test straight from the definition, in floating point with
/// exact denominators.
fn product_oracle(monos: &[(u32, u32)]) -> Classification {
    let a = monos.iter().filter(|m| m.1 == 0).map(|m| m.0).min();
    let b = monos.iter().filter(|m| m.0 == 0).map(|m| m.1).min();
    let inv = |x: Option<u32>| x.map_or(0.0, |v| 1.0 / f64::from(v));
    let below = monos.iter().any(|&(e, f)| f64::from(e) * inv(a) + f64::from(f) * inv(b) < 1.0 - 1e-12);
    match (below, a.is_some() && b.is_some()) {
        (false, _) => Classification::Bounded,
        (true, true) => Classification::Unbounded,
        (true, false) => Classification::UnboundedExtended,
    }
}

#[test]
fn reference_corpus_agrees_with_brute_force() {
    for (label, monos, prod, flag) in reference_corpus() {
        let p = PolySurface::monomials(&monos).unwrap();
        assert_eq!(product_oracle(&monos), prod, "{label}");
        assert_eq!(newton_verdict(&p, NewtonMode::Product, NewtonOptions::default()).unwrap().classification, prod, "{label}");
        if let Some(f) = flag {
            assert_eq!(newton_verdict(&p, NewtonMode::Flag, NewtonOptions::default()).unwrap().classification, f, "{label}");
        }
    }
}
