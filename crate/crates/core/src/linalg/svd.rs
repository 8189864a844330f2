//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 80;
const MAX_ENTRIES: usize = 1_000_000;

/// `m = U · diag(σ) · Vᵀ` with `U: rows×k`, `V: cols×k`, `k = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdResult<T> {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<T>,
    pub u: Matrix<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> SvdResult<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let k = self.singular_values.len();
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for j in 0..k {
                us[(i, j)] = us[(i, j)] * self.singular_values[j];
            }
        }
        us.matmul(&self.v.transpose()).expect("svd factor shapes chain")
    }
}

pub fn svd<T: Scalar>(m: &Matrix<T>) -> Result<SvdResult<T>> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("svd of non-finite matrix".into()));
    }
    if m.rows() * m.cols() > MAX_ENTRIES {
        return Err(Error::InvalidInput(format!(
            "svd input {}x{} exceeds {} entries",
            m.rows(),
            m.cols(),
            MAX_ENTRIES
        )));
    }
    if m.rows() >= m.cols() {
        Ok(svd_tall(m))
    } else {
        let t = svd_tall(&m.transpose());
        Ok(SvdResult {
            singular_values: t.singular_values,
            u: t.v,
            v: t.u,
        })
    }
}

/// Singular values only; same algorithm, skips nothing but the sort bookkeeping.
pub fn singular_values<T: Scalar>(m: &Matrix<T>) -> Result<Vec<T>> {
    svd(m).map(|s| s.singular_values)
}

fn svd_tall<T: Scalar>(a: &Matrix<T>) -> SvdResult<T> {
    let (m, n) = a.shape();
    // Work column-major: cols[j] is column j of the rotated matrix.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::lit(2.0);
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the result deterministic for ties.
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let sigma_max = order.first().map_or(T::zero(), |&i| norms[i]);
    let tiny = sigma_max * T::epsilon() * T::lit(m.max(n) as f64);
    let mut singular_values = Vec::with_capacity(n);
    let mut u_cols: Vec<Option<Vec<T>>> = Vec::with_capacity(n);
    let mut v_out = Matrix::zeros(n, n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        singular_values.push(s);
        if s > tiny && s > T::zero() {
            u_cols.push(Some(cols[j].iter().map(|&x| x / s).collect()));
        } else {
            u_cols.push(None);
        }
        for i in 0..n {
            v_out[(i, k)] = v[j][i];
        }
    }
    let u_cols = complete_basis(m, u_cols);
    let u = Matrix::from_fn(m, n, |i, j| u_cols[j][i]);
    SvdResult {
        singular_values,
        u,
        v: v_out,
    }
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills missing left singular vectors (zero singular values) with unit vectors
/// orthogonal to all others, by Gram–Schmidt over the standard basis.
fn complete_basis<T: Scalar>(m: usize, cols: Vec<Option<Vec<T>>>) -> Vec<Vec<T>> {
    if cols.iter().all(Option::is_some) {
        return cols.into_iter().map(Option::unwrap).collect();
    }
    let mut basis: Vec<Vec<T>> = cols.iter().flatten().cloned().collect();
    let mut candidates = 0..m;
    let mut out = Vec::with_capacity(cols.len());
    for c in cols {
        match c {
            Some(c) => out.push(c),
            None => loop {
                let e = candidates.next().expect("enough standard basis vectors");
                let mut w: Vec<T> = (0..m).map(|i| if i == e { T::one() } else { T::zero() }).collect();
                for _ in 0..2 {
                    for b in &basis {
                        let d = dot(&w, b);
                        for (wi, &bi) in w.iter_mut().zip(b) {
                            *wi = *wi - d * bi;
                        }
                    }
                }
                let nw = dot(&w, &w).sqrt();
                if nw > T::lit(1e-3) {
                    let w: Vec<T> = w.iter().map(|&x| x / nw).collect();
                    basis.push(w.clone());
                    out.push(w);
                    break;
                }
            },
        }
    }
    out
}
