use mpradon::opnorm::{
    convolution_oracle, cotlar_bound, discretize_piece, spectral_norm, Cutoffs, GridSpec, NormEntry, Product, Transposed,
};
use mpradon::{BumpSpec, Cutoff, DilationScheme, LinOp, Shape, SurfaceMap, UniformGrid};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(seed: u64, r: usize, c: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn svd_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

#[test]
fn power_iteration_matches_dense_svd() {
    let a = random_matrix(42, 100, 100);
    let got = spectral_norm(&a, 1e-13, 100_000).unwrap();
    let want = svd_norm(&a);
    assert!((got - want).abs() <= 1e-6 * want, "{got} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norm_identities(seed in 0u64..10_000, r in 2usize..30, c in 2usize..30, k in 2usize..20) {
        let a = random_matrix(seed, r, c);
        let b = random_matrix(seed + 1, c, k);
        let na = spectral_norm(&a, 1e-12, 100_000).unwrap();
        let nt = spectral_norm(&Transposed(&a), 1e-12, 100_000).unwrap();
        let want = svd_norm(&a);
        prop_assert!((na - want).abs() <= 1e-6 * want);
        prop_assert!((nt - want).abs() <= 1e-6 * want);
        prop_assert!(na <= a.norm() * (1.0 + 1e-12));
        let nb = spectral_norm(&b, 1e-12, 100_000).unwrap();
        let nab = spectral_norm(&Product(&a, &b), 1e-12, 100_000).unwrap();
        prop_assert!(nab <= na * nb * (1.0 + 1e-6));
        prop_assert!((nab - svd_norm(&(&a * &b))).abs() <= 1e-6 * nab.max(1e-300));
    }
}

fn translation() -> SurfaceMap {
    SurfaceMap::closed_form("shift", 1, 1, &["x1 - t1"]).unwrap()
}

#[test]
fn piece_applied_to_constants() {
    let cut = Cutoffs { psi1: Cutoff::new(1.0, 1.5).unwrap(), psi2: Cutoff::one(), kappa: Cutoff::one() };
    let s = DilationScheme::isotropic(1);
    let n = 257;
    let grid = GridSpec { x: UniformGrid::cube(1, -2.0, 2.0, n), t_panels: 16, t_order: 8 };
    let one = vec![1.0; n];
    let mut y = vec![0.0; n];
    // Cancellative bump: A 1 vanishes up to quadrature error.
    let sig = BumpSpec::product(&[Shape::Deriv(1)], 0.5).unwrap();
    for j in [0.0, 2.0, 4.0] {
        let a = discretize_piece(&translation(), &sig, &s, &[j], &cut, &grid).unwrap();
        a.apply(&one, &mut y);
        let m = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(m <= 1e-10, "j={j}: {m}");
    }
    // With mass, A 1 = psi1 * int sigma.
    let bump = BumpSpec::product(&[Shape::Mollifier], 0.5).unwrap();
    let mass = bump.integral();
    let a = discretize_piece(&translation(), &bump, &s, &[1.0], &cut, &grid).unwrap();
    a.apply(&one, &mut y);
    for (i, v) in y.iter().enumerate() {
        let x = grid.x.axes[0].point(i);
        assert!((v - cut.psi1.eval1(x) * mass).abs() <= 1e-9, "x={x}");
    }
}

#[test]
fn geometric_table_sums_in_closed_form() {
    for jn in [3i64, 6, 9] {
        let table: Vec<NormEntry> = (0..jn)
            .flat_map(|j| (0..jn).map(move |k| (j, k)))
            .map(|(j, k)| {
                let v = 0.25f64.powi((j - k).abs() as i32);
                NormEntry { j, k, star_left: v, star_right: v }
            })
            .collect();
        // Middle row: 1 + 2 sum_{d>=1} 2^{-d}, truncated at both ends.
        let mid = (jn - 1) / 2;
        let row = |j: i64| (0..jn).map(|k| 0.5f64.powi((j - k).abs() as i32)).sum::<f64>();
        assert!((cotlar_bound(&table) - row(mid)).abs() < 1e-14);
        assert!(cotlar_bound(&table) < 3.0);
    }
}

#[test]
fn convolution_bound_converges() {
    // First-moment cancellation: entries decay like 2^{-|j-k|}, so the square
    // roots in the Cotlar sum decay like r = 2^{-1/2} and the middle row tends
    // to sqrt(v00) (1 + r) / (1 - r).
    let bump = BumpSpec::product(&[Shape::Deriv(1)], 0.5).unwrap();
    let bound = |n: i64| {
        let js: Vec<i64> = (0..n).collect();
        cotlar_bound(&convolution_oracle(&bump, &js, 512.0, 4096))
    };
    let b: Vec<f64> = (4..=9).map(bound).collect();
    let v00 = convolution_oracle(&bump, &[0], 512.0, 4096)[0].star_left;
    let r = 0.5f64.sqrt();
    let limit = v00.sqrt() * (1.0 + r) / (1.0 - r);
    let inc: Vec<f64> = b.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(inc.iter().all(|d| *d > 0.0), "{b:?}");
    assert!(b.iter().all(|v| *v < limit), "{b:?} vs {limit}");
    // Two more scales add one more term of ratio r on each side.
    for k in 2..inc.len() {
        assert!(inc[k] <= 0.8 * inc[k - 2], "{inc:?}");
    }
}
