use aqka::numerics::{psd_project, solve_spd, sym_eig, SymMatrix};
use aqka::rng::seeded;
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::Rng as _;

fn random_sym(n: usize, seed: u64) -> SymMatrix {
    let mut rng = seeded(seed);
    SymMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn random_spd(n: usize, seed: u64) -> SymMatrix {
    let mut rng = seeded(seed);
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    SymMatrix::from_fn(n, |i, j| {
        (0..n).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 }
    })
}

#[test]
fn eig_of_identity_and_diagonal() {
    let e = sym_eig(&SymMatrix::identity(3)).unwrap();
    assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    let e = sym_eig(&SymMatrix::from_diag(&[2.0, -1.0])).unwrap();
    assert_relative_eq!(e.values[0], -1.0, epsilon = 1e-14);
    assert_relative_eq!(e.values[1], 2.0, epsilon = 1e-14);
}

#[test]
fn eig_reconstructs_random_symmetric() {
    let m = random_sym(8, 11);
    let e = sym_eig(&m).unwrap();
    let back = e.reconstruct_with(|w| w);
    assert!(back.sub(&m).max_abs() < 1e-10);
    let vtv = e.vectors.transpose() * &e.vectors;
    let id = nalgebra::DMatrix::<f64>::identity(8, 8);
    assert!((vtv - id).norm() < 1e-10);
}

#[test]
fn solve_examples() {
    let x = solve_spd(&SymMatrix::identity(2), &[3.0, -1.0], 0.0).unwrap();
    assert_eq!(x, vec![3.0, -1.0]);
    let x = solve_spd(&SymMatrix::zeros(2), &[1.0, 1.0], 0.5).unwrap();
    assert_relative_eq!(x[0], 2.0, epsilon = 1e-14);
    assert_relative_eq!(x[1], 2.0, epsilon = 1e-14);
}

#[test]
fn solve_rejects_indefinite() {
    let m = SymMatrix::from_diag(&[1.0, -1.0]);
    assert!(matches!(
        solve_spd(&m, &[1.0, 1.0], 0.0),
        Err(aqka::AqkaError::NotPositiveDefinite(_))
    ));
}

#[test]
fn projection_examples() {
    let id = SymMatrix::identity(4);
    assert_eq!(psd_project(&id, 1e-6).unwrap(), id);
    let p = psd_project(&SymMatrix::from_diag(&[1.0, -0.5]), 1e-6).unwrap();
    assert_relative_eq!(p.get(0, 0), 1.0, epsilon = 1e-14);
    assert_relative_eq!(p.get(1, 1), 1e-6, epsilon = 1e-14);
    assert!(p.get(0, 1).abs() < 1e-14);
}

#[test]
fn projection_of_indefinite_within_twice_negative_part() {
    let m = random_sym(12, 5);
    let e = sym_eig(&m).unwrap();
    assert!(e.values[0] < 0.0);
    let neg = e.reconstruct_with(|w| w.min(0.0)).op_norm().unwrap();
    let p = psd_project(&m, 1e-6).unwrap();
    assert!(p.sub(&m).op_norm().unwrap() <= 2.0 * neg + 1e-12);
    assert!(p.min_eigenvalue().unwrap() >= 1e-6 - 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_idempotent(n in 1usize..12, seed in any::<u64>()) {
        let m = random_sym(n, seed);
        let p = psd_project(&m, 1e-6).unwrap();
        let pp = psd_project(&p, 1e-6).unwrap();
        prop_assert!(pp.sub(&p).max_abs() <= 1e-12);
    }

    #[test]
    fn solve_residual_small(n in 1usize..50, seed in any::<u64>(), ridge in 0.0f64..1.0) {
        let m = random_spd(n, seed);
        let mut rng = seeded(seed ^ 0x5555);
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = solve_spd(&m, &rhs, ridge).unwrap();
        let back = m.add_diag(ridge).matvec(&x);
        let res: f64 = back.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nr: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(res / nr < 1e-10);
    }

    #[test]
    fn eigenvectors_orthonormal(n in 1usize..30, seed in any::<u64>()) {
        let e = sym_eig(&random_sym(n, seed)).unwrap();
        let vtv = e.vectors.transpose() * &e.vectors;
        let id = nalgebra::DMatrix::<f64>::identity(n, n);
        prop_assert!((vtv - id).norm() < 1e-10);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }
}
