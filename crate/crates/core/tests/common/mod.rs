#![allow(dead_code)]

use cpwl_geometry::net::{mlp, Activation, CpwlNetwork, Init, MlpSpec};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// `MᵀM` for a row-major `rows × cols` matrix.
pub fn gram_t(rows: usize, cols: usize, m: &[f64]) -> Vec<Vec<f64>> {
    (0..cols)
        .map(|i| (0..cols).map(|j| (0..rows).map(|k| m[k * cols + i] * m[k * cols + j]).sum()).collect())
        .collect()
}

pub fn relu_net(input: usize, hidden: &[usize], output: usize, seed: u64) -> CpwlNetwork<f64> {
    mlp(
        &MlpSpec {
            input_dim: input,
            hidden: hidden.to_vec(),
            output_dim: output,
            activation: Activation::Relu,
            init: Init::He { bias_std: 0.5 },
        },
        seed,
    )
    .unwrap()
}
