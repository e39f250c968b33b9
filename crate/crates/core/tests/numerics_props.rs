use nnspin_core::hamiltonian::{build_vsd, Geometry, SpinCoefficients};
use nnspin_core::numerics::{
    dft, eig_hermitian, expm_general, expm_hermitian, gls_solve, ComplexMatrix, RealMatrix, C64,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// exp(−i s H) by direct series summation, stopping once terms are negligible.
fn taylor_exp(h: &ComplexMatrix, s: f64) -> ComplexMatrix {
    let n = h.rows();
    let gen = h.scale(C64::new(0.0, -s));
    let mut term = ComplexMatrix::identity(n);
    let mut sum = term.clone();
    for k in 1..=60 {
        term = term.matmul(&gen).scale_real(1.0 / k as f64);
        sum.axpy(C64::new(1.0, 0.0), &term);
        if term.max_abs() < 1e-30 {
            break;
        }
    }
    sum
}

fn random_complex(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| {
        C64::new(
            rng.gen_range(-half_width..half_width),
            rng.gen_range(-half_width..half_width),
        )
    })
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> ComplexMatrix {
    let a = random_complex(rng, n, half_width);
    ComplexMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj()))
}

#[test]
fn spin_propagator_matches_taylor_series() {
    let h = build_vsd(&SpinCoefficients::calibrated(), &Geometry::reference());
    let u = expm_hermitian(h.matrix(), 0.30).unwrap();
    assert!(u.max_abs_diff(&taylor_exp(h.matrix(), 0.30)) < 1e-10);
}

#[test]
fn anti_hermitian_paths_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let h = random_hermitian(&mut rng, 6, 1.5);
        // M = −iH is anti-Hermitian and exp(M) = expm_hermitian(H, 1)
        let m = h.scale(C64::new(0.0, -1.0));
        let a = expm_general(&m).unwrap();
        let b = expm_hermitian(&h, 1.0).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10, "{}", a.max_abs_diff(&b));
    }
}

#[test]
fn three_parameter_sinusoid_gls_fit() {
    let n = 80;
    let w = 0.7;
    let d = [0.3, -1.2, 0.45];
    let x = RealMatrix::from_fn(n, 3, |k, c| {
        let t = k as f64 * 0.25;
        [1.0, (w * t).cos(), (w * t).sin()][c]
    });
    let y: Vec<f64> = (0..n).map(|k| (0..3).map(|c| x[(k, c)] * d[c]).sum()).collect();
    let cov = RealMatrix::from_fn(n, n, |a, b| {
        let g = 1.0 + a.min(b) as f64 / n as f64;
        g * (-((a as f64 - b as f64).powi(2)) / 2.0).exp() + if a == b { 1e-6 } else { 0.0 }
    });
    let fit = gls_solve(&x, &y, &cov).unwrap();
    for c in 0..3 {
        assert!((fit[c] - d[c]).abs() < 1e-8, "{fit:?}");
    }
}

#[test]
fn dft_of_bin_cosine_over_512_points() {
    let n = 512;
    let f = 37;
    let x: Vec<C64> = (0..n)
        .map(|k| C64::new((std::f64::consts::TAU * f as f64 * k as f64 / n as f64).cos(), 0.0))
        .collect();
    let s = dft(&x);
    for (j, v) in s.iter().enumerate() {
        if j == f || j == n - f {
            assert!((v.norm() - (n as f64).sqrt() / 2.0).abs() < 1e-9);
        } else {
            assert!(v.norm() < 1e-9, "bin {j}: {}", v.norm());
        }
    }
}

fn seeds() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hermitian_exponential_is_unitary((seed, n) in seeds(), s in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, n, 3.0);
        let u = expm_hermitian(&h, s).unwrap();
        prop_assert!(u.unitarity_error() < 1e-10);
    }

    #[test]
    fn general_exponential_inverse((seed, n) in seeds()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = random_complex(&mut rng, n, 1.0);
        let norm = a.one_norm();
        if norm > 2.0 {
            a = a.scale_real(2.0 / norm);
        }
        let p = expm_general(&a).unwrap();
        let m = expm_general(&a.scale_real(-1.0)).unwrap();
        prop_assert!(p.matmul(&m).max_abs_diff(&ComplexMatrix::identity(n)) < 1e-9);
    }

    #[test]
    fn eigendecomposition_round_trip((seed, n) in seeds()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, n, 2.0);
        let e = eig_hermitian(&h).unwrap();
        prop_assert!(e.reconstruct().max_abs_diff(&h) < 1e-10);
        prop_assert!(e.vectors.unitarity_error() < 1e-10);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }
}
