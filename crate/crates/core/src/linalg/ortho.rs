use super::matrix::{dot, Matrix};
use super::rng;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Orthonormalizes the rows of `m` in place by modified Gram–Schmidt with one
/// re-orthogonalization pass. Returns `false` if a row became numerically dependent.
pub fn orthonormalize_rows<T: Scalar>(m: &mut Matrix<T>) -> bool {
    let tol = T::lit(1e-10);
    for i in 0..m.rows() {
        let original = super::matrix::norm(m.row(i));
        for _pass in 0..2 {
            for j in 0..i {
                let d = dot(m.row(i), m.row(j));
                let rj = m.row(j).to_vec();
                for (x, y) in m.row_mut(i).iter_mut().zip(&rj) {
                    *x = *x - d * *y;
                }
            }
        }
        let n = super::matrix::norm(m.row(i));
        if n <= tol * original.max(T::one()) {
            return false;
        }
        for x in m.row_mut(i) {
            *x = *x / n;
        }
    }
    true
}

/// Random matrix with orthonormal rows, drawn by orthonormalizing a Gaussian matrix.
pub fn random_orthonormal<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Result<Matrix<T>> {
    if rows > cols {
        return Err(Error::InvalidInput(format!(
            "cannot have {rows} orthonormal rows in dimension {cols}"
        )));
    }
    let mut rng = rng::seeded(seed);
    loop {
        let mut m = Matrix::from_fn(rows, cols, |_, _| rng::normal::<T>(&mut rng));
        if orthonormalize_rows(&mut m) {
            return Ok(m);
        }
    }
}
