//! Fast paths against the dense oracles, and spectral properties that need
//! more than one module.

use approx::assert_abs_diff_eq;
use kvdecay::discretization::{assemble, build_mesh, SystemMatrices};
use kvdecay::evolution::{make_initial_data, simulate, InitialKind};
use kvdecay::model::DampingProfile;
use kvdecay::oracle::{dense_eigenvalues, dense_expm_state, dense_sigma_min};
use kvdecay::resolvent::sigma_min;
use kvdecay::spectral::{compute_spectrum, pencil_residual};
use num_complex::Complex64;
use proptest::prelude::*;

fn system(n: usize, alpha: f64) -> SystemMatrices {
    assemble(&build_mesh(n, 1.0).unwrap(), &DampingProfile::new(alpha).unwrap())
}

fn nearest(set: &[Complex64], z: Complex64) -> f64 {
    set.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sigma_min_matches_dense_svd(alpha in 0.0f64..0.95, omega in 0.0f64..3.2, half in 4usize..16) {
        let m = system(2 * half, alpha);
        let fast = sigma_min(&m, omega).unwrap();
        let slow = dense_sigma_min(&m, omega).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-6 * slow, "{fast} vs {slow}");
    }

    #[test]
    fn sigma_min_bounded_by_distance_to_spectrum(alpha in 0.0f64..0.95, omega in 0.0f64..3.0) {
        // For a dissipative generator ||R(i omega)|| >= 1/dist(i omega, spectrum).
        let m = system(16, alpha);
        let s = compute_spectrum(&m).unwrap();
        let dist = nearest(&s.eigenvalues, Complex64::new(0.0, omega));
        prop_assert!(sigma_min(&m, omega).unwrap() <= dist * (1.0 + 1e-9));
    }
}

#[test]
fn spectrum_matches_dense_generator() {
    for alpha in [0.0, 0.5, 0.9] {
        let m = system(24, alpha);
        let fast = compute_spectrum(&m).unwrap();
        let slow = dense_eigenvalues(&m).unwrap();
        assert_eq!(fast.eigenvalues.len(), slow.len());
        for &z in &slow {
            assert!(nearest(&fast.eigenvalues, z) <= 1e-9 * z.norm().max(1.0), "{z}");
        }
    }
}

#[test]
fn random_pencils_certified_by_residual() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let n = 12;
        let mut diag_k = vec![0.0; n];
        let mut off_k = vec![0.0; n - 1];
        for i in 0..n {
            diag_k[i] = 3.0 + rng.random::<f64>();
        }
        for v in off_k.iter_mut() {
            *v = -rng.random::<f64>();
        }
        let d: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let m = SystemMatrices::from_parts(
            kvdecay::tridiag::SymTridiag::new(vec![1.0; n], vec![0.1; n - 1]).unwrap(),
            kvdecay::tridiag::SymTridiag::new(diag_k, off_k).unwrap(),
            kvdecay::tridiag::SymTridiag::new(d, vec![0.0; n - 1]).unwrap(),
        )
        .unwrap();
        let s = compute_spectrum(&m).unwrap();
        let oracle = dense_eigenvalues(&m).unwrap();
        for &z in &s.eigenvalues {
            assert!(nearest(&oracle, z) <= 1e-10 * z.norm().max(1.0));
            assert!(pencil_residual(&m, z).unwrap().0 <= 1e-8);
        }
    }
}

#[test]
fn midpoint_trajectory_matches_exponential() {
    let mesh = build_mesh(32, 1.0).unwrap();
    let m = assemble(&mesh, &DampingProfile::new(0.5).unwrap());
    let u0 = make_initial_data(&mesh, &m, InitialKind::GraphNormalized).unwrap();
    let exact = dense_expm_state(&m, &u0, 1.0).unwrap();
    let mut errors = Vec::new();
    for dt in [4e-3, 2e-3, 1e-3] {
        let trace = simulate(&m, &u0, 1.0, dt, 1000).unwrap();
        let err: f64 = trace
            .final_state
            .u
            .iter()
            .zip(&exact.u)
            .chain(trace.final_state.v.iter().zip(&exact.v))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    // Second order: halving dt divides the error by about four.
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.8 && order < 2.2, "{errors:?}");
    }
}

#[test]
fn spectrum_conjugate_symmetric_and_dissipative() {
    for (n, alpha) in [(32, 0.0), (64, 0.25), (128, 0.9)] {
        let s = compute_spectrum(&system(n, alpha)).unwrap();
        let scale = s.max_modulus();
        assert!(s.abscissa <= 1e-10 * scale);
        assert!(s.axis_gap > 0.0);
        for &z in &s.eigenvalues {
            if z.im != 0.0 {
                assert!(nearest(&s.eigenvalues, z.conj()) <= 1e-10 * scale.max(1.0));
            }
        }
    }
}

#[test]
fn undamped_limit_is_monotone() {
    let m = system(64, 0.5);
    let reference = compute_spectrum(&m.undamped()).unwrap().upper_half();
    let mut errors = Vec::new();
    for eps in [1e-2, 1e-4] {
        let s = compute_spectrum(&m.with_damping_scale(eps)).unwrap().upper_half();
        let err = reference
            .iter()
            .take(10)
            .map(|&z| nearest(&s, z))
            .fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors[1] < errors[0], "{errors:?}");
    // First-order perturbation: the error scales with eps.
    assert!(errors[1] <= 0.02 * errors[0], "{errors:?}");
}

#[test]
fn low_modes_stable_under_refinement() {
    for alpha in [0.0, 0.5] {
        let low = |n: usize| -> Vec<Complex64> {
            compute_spectrum(&system(n, alpha))
                .unwrap()
                .upper_half()
                .into_iter()
                .filter(|z| z.re.abs() < z.im)
                .take(5)
                .collect()
        };
        let coarse = low(128);
        let fine = low(256);
        for &z in &coarse {
            let rel = nearest(&fine, z) / z.norm();
            assert!(rel <= 0.01, "alpha={alpha}: {z} moves by {rel}");
        }
    }
}

#[test]
fn scalar_resolvent_norm() {
    // K = 4, M = 1, D = 0: sigma_min(i omega - A) = |omega| - 2 distance.
    let m = kvdecay::spectral::scalar_system(1.0, 0.0, 4.0).unwrap();
    for omega in [0.0, 1.0, 3.5] {
        let expected = (omega - 2.0f64).abs().min((omega + 2.0f64).abs());
        assert_abs_diff_eq!(sigma_min(&m, omega).unwrap(), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(dense_sigma_min(&m, omega).unwrap(), expected, epsilon = 1e-12);
    }
}
