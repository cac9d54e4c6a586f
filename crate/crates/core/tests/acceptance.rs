//! Acceptance run: one PASS/FAIL line per criterion, with measured values.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported honestly as FAIL and do not
//! abort the run; every other criterion must pass.

use std::time::{Duration, Instant};

use mpradon::ccgeom::{chart_verify, scaling_chart, ChartOptions, VerifyOptions};
use mpradon::decide::heisenberg::HeisDemo;
use mpradon::decide::{
    counterexample_pieces, newton_verdict, Classification, CounterexampleSetup, NewtonMode, NewtonOptions, PolySurface,
};
use mpradon::kernels::{delta0_family, Axis, BumpSpec, Cutoff, Shape, UniformGrid};
use mpradon::opnorm::transport::{cell_volume, l1delta_seminorm, transport_density, TauBox};
use mpradon::opnorm::{
    ao_decay_fit, convolution_oracle, discretize_piece, fit_decay, Cutoffs, DiscretizedOp, GridSpec, LinOp, POWER_TOL,
};
use mpradon::quad::Rule;
use mpradon::surfaces::catalog::wspec_catalog;
use mpradon::surfaces::curvature::{curvature_check, CurvatureMode, CurvatureOptions};
use mpradon::surfaces::{gamma_from_w, omega, structure_residuals, w_from_gamma, SurfaceMap, DEFAULT_FD_STEP};
use mpradon::util::seeded_rng;
use mpradon::vfields::control::log_axis;
use mpradon::vfields::{check_control, ControlStatus, DegreedField, SamplingPlan, VField};
use mpradon::{DegreeVector, DilationScheme, ParamLattice};
use num_complex::Complex64;
use rand::Rng;

/// Criteria that are not attainable as stated; see the README.
const KNOWN_FAILURES: &[u32] = &[3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn df(c: &[&str], d: &[i64]) -> DegreedField {
    DegreedField::new(VField::parse(c, 0).unwrap(), DegreeVector::from_ints(d)).unwrap()
}

fn c1_telescoping() -> Outcome {
    let cases = [
        ("N=1", DilationScheme::product(1)),
        ("N=2", DilationScheme::product(2)),
        ("N=3 heis", DilationScheme::heisenberg()),
    ];
    let mut worst = 0.0f64;
    for (_, scheme) in &cases {
        let n = scheme.dim();
        let r = 0.25;
        let eta = BumpSpec::product(&vec![Shape::Mollifier; n], r).unwrap().normalized_to(1.0).unwrap();
        let lattice = ParamLattice::product(scheme.nu());
        let family = delta0_family(&eta, scheme, &lattice, 3).unwrap();
        for m in 0..=3u32 {
            let target = eta.dilate(scheme, &vec![m; scheme.nu()]).unwrap();
            // 64 points per axis across the support of the dilated bump.
            let axes = target.support_box().iter().map(|h| Axis { lo: -h, hi: *h, n: 64 }).collect();
            let grid = UniformGrid { axes };
            let partial = family.synthesize_partial(m, &grid).unwrap();
            let exact: Vec<f64> = grid.points().map(|p| target.eval(&p)).collect();
            let scale = exact.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            worst = worst.max(max_diff(&partial, &exact) / scale);
        }
    }
    Outcome { pass: worst <= 1e-12, detail: format!("max relative error {worst:.2e} over N=1,2,3, m<=3") }
}

fn c2_newton() -> Outcome {
    use Classification::*;
    // Hand-derived: product admits (e, f) iff e/a + f/b >= 1; flag iff e + f >= b (b <= a).
    let table: [(&[(u32, u32)], Classification, Option<Classification>); 12] = [
        (&[(1, 0), (0, 1)], Bounded, Some(Bounded)),
        (&[(3, 0), (0, 3), (1, 1)], Unbounded, Some(Unbounded)),
        (&[(4, 0), (0, 2), (1, 1)], Unbounded, Some(Bounded)),
        (&[(1, 1)], UnboundedExtended, Some(UnboundedExtended)),
        (&[(2, 0), (0, 2), (1, 1)], Bounded, Some(Bounded)),
        (&[(1, 0), (0, 1), (1, 1)], Bounded, Some(Bounded)),
        (&[(2, 0), (0, 3), (1, 1)], Unbounded, None),
        (&[(2, 0), (0, 3), (1, 2)], Bounded, None),
        (&[(2, 0), (0, 2), (1, 0)], Bounded, None),
        (&[(3, 0), (0, 1), (1, 1)], Bounded, Some(Bounded)),
        (&[(6, 0), (0, 6), (2, 2), (3, 1)], Unbounded, Some(Unbounded)),
        (&[(4, 0), (0, 4), (2, 2)], Bounded, Some(Bounded)),
    ];
    let mut mismatches = Vec::new();
    for (k, (exps, product, flag)) in table.iter().enumerate() {
        let p = PolySurface::monomials(exps).unwrap();
        let got = newton_verdict(&p, NewtonMode::Product, NewtonOptions::default()).unwrap().classification;
        if got != *product {
            mismatches.push(format!("#{k} product {got:?}"));
        }
        if let Some(flag) = flag {
            let got = newton_verdict(&p, NewtonMode::Flag, NewtonOptions::default()).unwrap().classification;
            if got != *flag {
                mismatches.push(format!("#{k} flag {got:?}"));
            }
        }
    }
    Outcome { pass: mismatches.is_empty(), detail: format!("12 polynomials, mismatches {mismatches:?}") }
}

fn partial_sums(setup: &CounterexampleSetup, ms: &[u32]) -> Vec<f64> {
    let pieces = counterexample_pieces(setup, *ms.iter().max().unwrap());
    ms.iter()
        .map(|&m| pieces.iter().filter(|p| p.j <= m).map(|p| p.value()).sum::<Complex64>().norm())
        .collect()
}

fn c3_counterexample() -> Outcome {
    let tau = 2f64.powi(20);
    let sig = BumpSpec::product(&[Shape::Deriv(1)], 0.25).unwrap();
    let p = PolySurface::monomials(&[(3, 0), (0, 3), (1, 1)]).unwrap();
    let setup = CounterexampleSetup::new(&p, &sig, tau, None).unwrap();
    let m = partial_sums(&setup, &[4, 8, 16]);
    let (r1, r2) = (m[1] / m[0], m[2] / m[1]);
    let growth = (1.6..=2.4).contains(&r1) && (1.6..=2.4).contains(&r2);
    // Bounded control: p = s^2 + t^2 + st has every exponent on the line; force witness (1, 1).
    let q = PolySurface::monomials(&[(2, 0), (0, 2), (1, 1)]).unwrap();
    let control = CounterexampleSetup::new(&q, &sig, tau, Some((1, 1))).unwrap();
    let c = partial_sums(&control, &[4, 8, 16]);
    let bounded = c.windows(2).all(|w| (0.8..=1.25).contains(&(w[1] / w[0])));
    Outcome {
        pass: growth && bounded,
        detail: format!(
            "|m(8)|/|m(4)| = {r1:.3}, |m(16)|/|m(8)| = {r2:.3} (need [1.6, 2.4]); control |m| = {:.3e}, {:.3e}, {:.3e}",
            c[0], c[1], c[2]
        ),
    }
}

fn sample_point<R: Rng>(rng: &mut R, nt: usize, x0: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let t = (0..nt).map(|_| rng.random_range(-0.4..0.4)).collect();
    let x = x0.iter().map(|c| c + rng.random_range(-0.3..0.3)).collect();
    (t, x)
}

fn c4_round_trip() -> Outcome {
    let mut rng = seeded_rng(4);
    let (mut w_err, mut gamma_err, mut semi_err) = (0.0f64, 0.0f64, 0.0f64);
    for e in wspec_catalog() {
        let s = e.surface();
        for _ in 0..200 {
            let (t, x) = sample_point(&mut rng, e.w.big_n(), &e.x0);
            // W -> gamma -> W.
            let w = w_from_gamma(&s, &t, &x, DEFAULT_FD_STEP).unwrap();
            w_err = w_err.max(max_diff(&w, &e.w.eval(&t, &x)));
            if let Some(cf) = &e.closed_form {
                let g = gamma_from_w(&e.w, &t, &x, 1e-10).unwrap();
                gamma_err = gamma_err.max(max_diff(&g, &cf.gamma(&t, &x).unwrap()));
            }
        }
        for _ in 0..20 {
            let (t, x) = sample_point(&mut rng, e.w.big_n(), &e.x0);
            let (eps0, eps) = (0.6, 0.7);
            let lhs = omega(&e.w, eps0 * eps, &t, &x, 1e-12).unwrap().end;
            let t0: Vec<f64> = t.iter().map(|v| eps0 * v).collect();
            let rhs = omega(&e.w, eps, &t0, &x, 1e-12).unwrap().end;
            semi_err = semi_err.max(max_diff(&lhs, &rhs));
        }
    }
    Outcome {
        pass: w_err <= 1e-6 && gamma_err <= 1e-6 && semi_err <= 1e-8,
        detail: format!("W round trip {w_err:.2e}, gamma vs closed form {gamma_err:.2e}, semigroup {semi_err:.2e}"),
    }
}

fn c5_structure() -> Outcome {
    let mut rng = seeded_rng(5);
    let (mut ws, mut integ) = (0.0f64, 0.0f64);
    for e in wspec_catalog() {
        let s = e.surface();
        for _ in 0..5 {
            let (t, x) = sample_point(&mut rng, e.w.big_n(), &e.x0);
            let r = structure_residuals(&s, &t, &x, DEFAULT_FD_STEP).unwrap();
            ws = ws.max(r.w_sum);
            integ = integ.max(r.integrability);
        }
    }
    Outcome { pass: ws <= 1e-6 && integ <= 1e-5, detail: format!("W-sum residual {ws:.2e}, integrability {integ:.2e}") }
}

fn c6_curvature() -> Outcome {
    let o = CurvatureOptions::default();
    let mut bad = Vec::new();
    let mut n = 0;
    for e in wspec_catalog() {
        let s = e.surface();
        let cz = curvature_check(&s, &e.x0, CurvatureMode::CZ, e.cz_order.0, e.cz_order.1, &o).unwrap();
        let cj = curvature_check(&s, &e.x0, CurvatureMode::CJ, e.cj_order, 0, &o).unwrap();
        n += 1;
        if cz.verdict != cj.verdict || cz.holds != e.curved {
            bad.push(format!("{}: CZ {:?} CJ {:?}", e.name, cz.verdict, cj.verdict));
        }
    }
    Outcome { pass: bad.is_empty(), detail: format!("{n} catalog surfaces, disagreements {bad:?}") }
}

fn c7_almost_orthogonality() -> Outcome {
    let surf = SurfaceMap::closed_form("conv", 1, 1, &["x1 - t1"]).unwrap();
    let scheme = DilationScheme::product(1);
    let grid = GridSpec { x: UniformGrid::cube(1, -2.0, 2.0, 512), t_panels: 32, t_order: 8 };
    let cut = Cutoffs::inner_half(2.0);
    let js: Vec<i64> = (0..7).collect();
    let fit_for = |bump: &BumpSpec| {
        let ops: Vec<DiscretizedOp> =
            js.iter().map(|&j| discretize_piece(&surf, bump, &scheme, &[j as f64], &cut, &grid).unwrap()).collect();
        let refs: Vec<(i64, &dyn LinOp)> = js.iter().zip(&ops).map(|(j, o)| (*j, o as &dyn LinOp)).collect();
        ao_decay_fit(&refs, POWER_TOL).unwrap()
    };
    let model = BumpSpec::product(&[Shape::Poly(1)], 0.5).unwrap();
    let fit = fit_for(&model);
    let h = grid.x.axes[0].step();
    let oracle = fit_decay(convolution_oracle(&model, &js, std::f64::consts::PI / h, 4000)).unwrap();
    let gap = (fit.fit.slope / oracle.fit.slope - 1.0).abs();
    let control = fit_for(&BumpSpec::product(&[Shape::Mollifier], 0.5).unwrap());
    Outcome {
        pass: fit.fit.slope <= -0.9 && fit.fit.r2 >= 0.9 && gap <= 0.05 && control.fit.slope >= -0.1,
        detail: format!(
            "slope {:.4}, R^2 {:.4}, oracle slope {:.4} (gap {:.2}%), control slope {:.4}",
            fit.fit.slope,
            fit.fit.r2,
            oracle.fit.slope,
            100.0 * gap,
            control.fit.slope
        ),
    }
}

fn c8_charts() -> Outcome {
    let cases: Vec<(&str, Vec<DegreedField>, Vec<f64>, Vec<f64>)> = vec![
        ("constant", vec![df(&["1", "0"], &[1]), df(&["0", "1"], &[1])], vec![0.3, 0.2], vec![1.0]),
        ("grushin", vec![df(&["1", "0"], &[1]), df(&["0", "x1"], &[1])], vec![1.0, 0.0], vec![1.0]),
        (
            "heisenberg",
            vec![df(&["1", "0", "2*x2"], &[1, 0]), df(&["0", "1", "-2*x1"], &[0, 1]), df(&["0", "0", "-4"], &[1, 1])],
            vec![0.0, 0.0, 0.0],
            vec![0.5, 0.25],
        ),
    ];
    let opts = VerifyOptions { samples: 200, paths: 500, probe_radius: 0.25 / 8.0, det_bound: 4.0, seed: 1 };
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, list, x0, delta) in cases {
        let chart = scaling_chart(&list, &x0, &delta, ChartOptions::default()).unwrap();
        let r = chart_verify(&chart, &opts).unwrap();
        pass &= r.pass && r.phi0_exact && r.injectivity_violations == 0 && r.inclusion_failures == 0;
        parts.push(format!("{name} ratio {:.3}", r.det_ratio));
    }
    Outcome { pass, detail: parts.join(", ") }
}

fn c9_control() -> Outcome {
    let product = ParamLattice::product(2);
    // Heisenberg: d/dt = -1/4 [X, Y].
    let heis = vec![df(&["1", "0", "2*x2"], &[1, 0]), df(&["0", "1", "-2*x1"], &[0, 1]), df(&["0", "0", "-4"], &[1, 1])];
    let target = df(&["0", "0", "1"], &[1, 1]);
    let plan = SamplingPlan::standard(2, vec![vec![0.2, -0.1, 0.3]], 9);
    let h = check_control(&heis, &target, &product, &plan, 1e-8, 10.0).unwrap();
    let exact = h.constant_coefficients.clone().unwrap_or_default();
    let heis_ok = h.status == ControlStatus::Pass && exact == ["0", "0", "-1/4"];
    // A flat coefficient: [d/dx, flat(x1) d/dy] is not controlled across the delta_2 sweep.
    let list = vec![df(&["1", "0"], &[1, 0]), df(&["0", "flat(x1)"], &[0, 1]), df(&["0", "1"], &[0, 2])];
    let bracket = DegreedField::new(list[0].field.bracket(&list[1].field).unwrap(), &list[0].degree + &list[1].degree).unwrap();
    let mut plan = SamplingPlan::standard(2, vec![vec![0.25, 0.0]], 5);
    plan.delta_axes = vec![vec![1.0], log_axis(8, 1e-4)];
    let f = check_control(&list, &bracket, &product, &plan, 1e-8, 10.0).unwrap();
    let flat_ok = f.status == ControlStatus::Fail && f.blowup >= 1e3;
    // Pure list, target of degree (2, 0): controlled only when delta_1 <= delta_2.
    let pure = vec![df(&["1", "0"], &[1, 0]), df(&["0", "1"], &[0, 1])];
    let target = df(&["0", "flat(x1)"], &[2, 0]);
    let plan = SamplingPlan::standard(2, vec![vec![0.5, 0.0]], 5);
    let flag = ParamLattice::custom(2, vec![(vec![-1, 1], 0)], 8).unwrap();
    let on_flag = check_control(&pure, &target, &flag, &plan, 1e-8, 10.0).unwrap();
    let on_product = check_control(&pure, &target, &product, &plan, 1e-8, 10.0).unwrap();
    let lattice_ok = on_flag.status == ControlStatus::Pass && on_product.status == ControlStatus::Fail;
    Outcome {
        pass: heis_ok && flat_ok && lattice_ok,
        detail: format!(
            "heisenberg {:?} {exact:?}; flat bracket {:?} blowup {:.2e}; pure list flag {:?}, product {:?}",
            h.status, f.status, f.blowup, on_flag.status, on_product.status
        ),
    }
}

fn c10_heisenberg() -> Outcome {
    let phi = BumpSpec::product(&[Shape::Mollifier], 1.0 / 16.0).unwrap().normalized_to(1.0).unwrap();
    let psi = BumpSpec::product(&[Shape::Deriv(2)], 1.0).unwrap().scaled(-1.0);
    let demo = |m: u32| HeisDemo {
        phi: phi.to_config(),
        psi: psi.to_config(),
        m,
        n: 32,
        half_width: 4.0,
        cutoff: Cutoff::new(2.0, 3.0).unwrap(),
        twist: true,
    };
    let mut euclid = 0.0f64;
    for m in 0..=4 {
        euclid = euclid.max(demo(m).euclidean_side().unwrap().rel_err);
    }
    let report = demo(4).divergence_check(1e-8).unwrap();
    let at = |m: u32| report.max_by_m.iter().find(|e| e.0 == m).unwrap().1;
    let ratio = at(4) / at(2);
    Outcome {
        pass: euclid <= 0.01 && (0.5..=2.0).contains(&ratio),
        detail: format!(
            "euclidean rel err {euclid:.1e}; group max M=2 {:.4}, M=4 {:.4}, ratio {ratio:.3}",
            at(2),
            at(4)
        ),
    }
}

fn c11_l1delta() -> Outcome {
    let b = BumpSpec::product(&[Shape::Mollifier], 1.0).unwrap();
    let g = UniformGrid::cube(1, -2.5, 2.5, 501);
    let w1 = |t: &[f64]| b.eval(t);
    let id = |t: &[f64]| vec![t[0]];
    let d = transport_density(&id, &w1, &TauBox::cube(1, -1.0, 1.0, 200, 8), &g).unwrap();
    let exact: Vec<f64> = g.points().map(|y| b.eval(&y)).collect();
    let mass = exact.iter().sum::<f64>() * cell_volume(&g);
    let id_err = d.l1_distance(&exact, &g) / mass;
    // tau_1 + tau_2 pushes psi x psi to psi * psi.
    let sum = |t: &[f64]| vec![t[0] + t[1]];
    let w2 = |t: &[f64]| b.eval(&t[..1]) * b.eval(&t[1..]);
    let d2 = transport_density(&sum, &w2, &TauBox::cube(2, -1.0, 1.0, 100, 8), &g).unwrap();
    let rule = Rule::composite(-1.0, 1.0, 64, 16);
    let conv: Vec<f64> = g
        .points()
        .map(|y| rule.nodes.iter().zip(&rule.weights).map(|(s, ws)| ws * b.eval(&[*s]) * b.eval(&[y[0] - s])).sum())
        .collect();
    let m2 = conv.iter().sum::<f64>() * cell_volume(&g);
    let conv_err = d2.l1_distance(&conv, &g) / m2;
    let gt = UniformGrid::cube(1, -2.0, 2.0, 801);
    let tent: Vec<f64> = gt.points().map(|y| (1.0 - y[0].abs()).max(0.0)).collect();
    let zs: Vec<Vec<f64>> = [0.01, 0.02, 0.05, 0.1].iter().map(|z| vec![*z]).collect();
    let tent_norm = l1delta_seminorm(&tent, &gt, 1.0, &zs);
    let sq = |t: &[f64]| vec![t[0] * t[0]];
    let gs = UniformGrid::cube(1, -0.5, 1.5, 801);
    let d3 = transport_density(&sq, &w1, &TauBox::cube(1, -1.0, 1.0, 400, 8), &gs).unwrap();
    let zs: Vec<Vec<f64>> = (1..=8).map(|k| vec![0.005 * 1.6f64.powi(k)]).collect();
    let sq_norm = l1delta_seminorm(&d3.density, &gs, 0.4, &zs);
    Outcome {
        pass: id_err <= 0.02
            && conv_err <= 0.02
            && (tent_norm - 2.0).abs() <= 0.06
            && sq_norm.is_finite()
            && d3.probe.pass,
        detail: format!(
            "identity L1 {id_err:.1e}, convolution L1 {conv_err:.1e}, tent {tent_norm:.4}, tau^2 at delta 0.4 {sq_norm:.3}"
        ),
    }
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 11] = [
        (1, "delta_0 telescoping", 10, c1_telescoping),
        (2, "Newton decider corpus", 1, c2_newton),
        (3, "counterexample divergence", 120, c3_counterexample),
        (4, "gamma <-> W bijection", 30, c4_round_trip),
        (5, "structure identities", 30, c5_structure),
        (6, "curvature equivalence", 60, c6_curvature),
        (7, "almost orthogonality", 120, c7_almost_orthogonality),
        (8, "CC chart verification", 60, c8_charts),
        (9, "control fixtures", 60, c9_control),
        (10, "Heisenberg case study", 300, c10_heisenberg),
        (11, "L1_delta diagnostics", 30, c11_l1delta),
    ];
    let mut unexpected = Vec::new();
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = out.pass && in_time;
        println!(
            "criterion {id:>2} {name}: {} ({}; {:.1} s of {budget} s)",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
        if !pass && !KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
