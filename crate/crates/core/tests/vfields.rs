use mpradon::vfields::{generate_list, lists_equivalent, Coef, SamplingPlan};
use mpradon::{DegreeVector, DegreedField, ParamLattice, VField};
use proptest::prelude::*;

/// A random polynomial in x1, x2 as a source string.
fn poly_src() -> impl Strategy<Value = String> {
    prop::collection::vec((-3i32..4, 0u32..3, 0u32..3), 1..4).prop_map(|terms| {
        terms.iter().map(|(c, i, j)| format!("({c})*x1^{i}*x2^{j}")).collect::<Vec<_>>().join(" + ")
    })
}

fn field() -> impl Strategy<Value = VField> {
    (poly_src(), poly_src()).prop_map(|(a, b)| VField::parse(&[&a, &b], 0).unwrap())
}

/// `[X, Y](p) = DY(p) X(p) - DX(p) Y(p)` by central differences.
fn numeric_bracket(x: &VField, y: &VField, p: &[f64]) -> Vec<f64> {
    let h = 1e-5;
    let jac = |f: &VField| -> Vec<Vec<f64>> {
        (0..2)
            .map(|l| {
                let (mut a, mut b) = (p.to_vec(), p.to_vec());
                a[l] += h;
                b[l] -= h;
                let (fa, fb) = (f.eval(&a, &[]), f.eval(&b, &[]));
                fa.iter().zip(&fb).map(|(u, v)| (u - v) / (2.0 * h)).collect()
            })
            .collect()
    };
    let (jx, jy) = (jac(x), jac(y));
    let (vx, vy) = (x.eval(p, &[]), y.eval(p, &[]));
    (0..2).map(|i| (0..2).map(|l| vx[l] * jy[l][i] - vy[l] * jx[l][i]).sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_matches_finite_differences(x in field(), y in field(), p in prop::collection::vec(-1.0f64..1.0, 2)) {
        let b = x.bracket(&y).unwrap().eval(&p, &[]);
        let n = numeric_bracket(&x, &y, &p);
        for (u, v) in b.iter().zip(&n) {
            prop_assert!((u - v).abs() <= 1e-6 * (1.0 + v.abs()), "{b:?} vs {n:?}");
        }
    }

    #[test]
    fn bracket_is_antisymmetric_and_jacobi(x in field(), y in field(), z in field()) {
        prop_assert_eq!(x.bracket(&y).unwrap(), y.bracket(&x).unwrap().scale(Coef::from_integer(-1)));
        let j = x.bracket(&y.bracket(&z).unwrap()).unwrap()
            .add(&y.bracket(&z.bracket(&x).unwrap()).unwrap())
            .add(&z.bracket(&x.bracket(&y).unwrap()).unwrap());
        prop_assert!(j.is_zero(), "{:?}", j.to_strings());
    }
}

fn df(c: &[&str], d: &[i64]) -> DegreedField {
    DegreedField::new(VField::parse(c, 0).unwrap(), DegreeVector::from_ints(d)).unwrap()
}

#[test]
fn heisenberg_list_closes_after_one_bracket() {
    let seeds = [df(&["1", "0", "2*x2"], &[1, 0]), df(&["0", "1", "-2*x1"], &[0, 1])];
    for m in [2, 3, 4] {
        let l = generate_list(&seeds, m).unwrap();
        assert_eq!(l.len(), 3, "M = {m}");
        assert!(l.closure.closed);
        // By hand: [X, Y] = -4 d/dt with degree (1, 1).
        assert_eq!(l.fields[2].field.to_strings(), vec!["0", "0", "-4"]);
        assert_eq!(l.fields[2].degree, DegreeVector::from_ints(&[1, 1]));
    }
}

#[test]
fn heisenberg_lists_are_equivalent() {
    let x = df(&["1", "0", "2*x2"], &[1, 0]);
    let y = df(&["0", "1", "-2*x1"], &[0, 1]);
    let a = vec![x.clone(), y.clone(), df(&["0", "0", "-4"], &[1, 1])];
    let b = vec![x, y, df(&["0", "0", "1"], &[1, 1])];
    let plan = SamplingPlan::standard(2, vec![vec![0.2, -0.1, 0.3]], 0);
    assert!(lists_equivalent(&a, &b, &ParamLattice::product(2), &plan, 1e-8, 10.0).unwrap());
    // Dropping the bracket loses control of d/dt.
    let c = a[..2].to_vec();
    assert!(!lists_equivalent(&c, &b, &ParamLattice::product(2), &plan, 1e-8, 10.0).unwrap());
}
