mod common;

use cpwl_geometry::linalg::{random_orthonormal, rng, svd, Matrix};
use proptest::prelude::*;

use common::{gram_t, jacobi_eigenvalues};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut r = rng::seeded(seed);
    Matrix::from_vec(rows, cols, rng::normal_vec(&mut r, rows * cols)).unwrap()
}

#[test]
fn singular_values_match_jacobi_eigenvalues_of_gram() {
    for (seed, (rows, cols)) in [(3, 3), (7, 4), (4, 7), (64, 6), (1, 5), (12, 12)].into_iter().enumerate() {
        let m = random_matrix(rows, cols, seed as u64);
        let sigma = svd(&m).unwrap().singular_values;
        let ev = jacobi_eigenvalues(gram_t(rows, cols, m.as_slice()));
        for (k, s) in sigma.iter().enumerate() {
            let expect = ev[k].max(0.0).sqrt();
            assert!((s - expect).abs() <= 1e-9 * (1.0 + expect), "{rows}x{cols} σ{k}: {s} vs {expect}");
        }
    }
}

#[test]
fn rank_deficient_matrix_has_zero_tail() {
    let u = random_matrix(6, 1, 1);
    let v = random_matrix(1, 4, 2);
    let sigma = svd(&u.matmul(&v).unwrap()).unwrap().singular_values;
    assert!(sigma[0] > 0.1);
    assert!(sigma[1..].iter().all(|s| s.abs() < 1e-10 * sigma[0]), "{sigma:?}");
}

proptest! {
    #[test]
    fn svd_reconstructs_and_orders(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
        let m = random_matrix(rows, cols, seed);
        let s = svd(&m).unwrap();
        prop_assert!(s.reconstruct().max_abs_diff(&m) < 1e-10);
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.singular_values.iter().all(|&v| v >= 0.0));
        let k = rows.min(cols);
        prop_assert!(s.u.transpose().matmul(&s.u).unwrap().max_abs_diff(&Matrix::identity(k)) < 1e-10);
        prop_assert!(s.v.transpose().matmul(&s.v).unwrap().max_abs_diff(&Matrix::identity(k)) < 1e-10);
    }

    #[test]
    fn random_frames_are_orthonormal(cols in 1usize..12, extra in 0usize..12, seed in any::<u64>()) {
        let rows = 1 + extra % cols;
        let f = random_orthonormal::<f64>(rows, cols, seed).unwrap();
        prop_assert!(f.row_orthonormality_error() < 1e-12);
    }
}
