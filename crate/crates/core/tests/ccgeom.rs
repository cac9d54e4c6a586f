use mpradon::ccgeom::{chart_verify, flow_endpoint, scaling_chart, ChartOptions, ScaledFields, SubunitPath, VerifyOptions};
use mpradon::{DegreeVector, DegreedField, VField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grushin() -> Vec<DegreedField> {
    vec![
        DegreedField::new(VField::parse(&["1", "0"], 0).unwrap(), DegreeVector::from_ints(&[1])).unwrap(),
        DegreedField::new(VField::parse(&["0", "x1"], 0).unwrap(), DegreeVector::from_ints(&[1])).unwrap(),
    ]
}

/// Classical fixed-step RK4 for `y' = a1 e1 + a2 x1 e2` over time `dt`.
fn rk4_grushin(y: [f64; 2], a: [f64; 2], dt: f64, steps: usize) -> [f64; 2] {
    let f = |y: [f64; 2]| [a[0], a[1] * y[0]];
    let h = dt / steps as f64;
    let mut y = y;
    for _ in 0..steps {
        let k1 = f(y);
        let k2 = f([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = f([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = f([y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[test]
fn two_segment_path_matches_rk4() {
    let fields = ScaledFields::unscaled(grushin().into_iter().map(|d| d.field).collect());
    let segs = vec![vec![0.6, 0.3], vec![-0.2, 0.7]];
    let y = flow_endpoint(&fields, &SubunitPath::new(segs.clone()).unwrap(), &[0.0, 0.0], 1e-12).unwrap();
    let mut want = [0.0, 0.0];
    for s in &segs {
        want = rk4_grushin(want, [s[0], s[1]], 0.5, 2000);
    }
    for i in 0..2 {
        assert!((y[i] - want[i]).abs() <= 1e-8, "{y:?} vs {want:?}");
    }
}

#[test]
fn grushin_chart_is_the_flow_and_well_conditioned() {
    let c = scaling_chart(&grushin(), &[1.0, 0.0], &[1.0], ChartOptions::default()).unwrap();
    assert_eq!(c.n0, 2);
    assert_eq!(c.j0, vec![0, 1]);
    // Minor by hand: det [[1, 0], [0, x1]] at x1 = 1.
    assert!((c.j0_minor - 1.0).abs() < 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let u = [rng.random_range(-0.17..0.17), rng.random_range(-0.17..0.17)];
        let p = c.phi(&u).unwrap();
        let want = rk4_grushin([1.0, 0.0], u, 1.0, 1000);
        assert!((p[0] - want[0]).abs() < 1e-10 && (p[1] - want[1]).abs() < 1e-10, "{u:?}");
    }
    let r = chart_verify(&c, &VerifyOptions { samples: 200, paths: 50, probe_radius: 0.01, det_bound: 4.0, seed: 3 }).unwrap();
    assert!(r.phi0_exact);
    assert!(r.det_ratio <= 4.0, "{}", r.det_ratio);
    // Dense sampling of det Y over the eta1 ball, checked independently.
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for a in 0..40 {
        for b in 0..40 {
            let u = [-0.25 + 0.5 * a as f64 / 39.0, -0.25 + 0.5 * b as f64 / 39.0];
            if u[0].hypot(u[1]) < 0.25 {
                let d = c.det_y(&u).unwrap().abs();
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
    }
    assert!(hi / lo <= 4.0, "{hi} / {lo}");
}
