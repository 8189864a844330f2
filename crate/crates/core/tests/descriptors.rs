mod common;

use cpwl_geometry::descriptors::{
    descriptors_at, local_complexity, rank_from_singular_values, scaling_from_slope, ComplexityConfig,
};
use cpwl_geometry::linalg::{rng, singular_values, Matrix};
use cpwl_geometry::net::{affine_at, CpwlNetwork};
use proptest::prelude::*;

use common::{gram_t, jacobi_eigenvalues, relu_net};

#[test]
fn scaling_of_diagonal_map() {
    let psi = scaling_from_slope(&Matrix::from_diag(&[2.0, 3.0])).unwrap().psi;
    assert!((psi - 6f64.ln()).abs() < 1e-12);
}

#[test]
fn rank_of_identity_is_its_dimension() {
    for k in 1..=8 {
        let nu = rank_from_singular_values(&vec![1.0; k], k, k).unwrap().nu;
        assert!((nu - k as f64).abs() < 1e-9, "k = {k}: {nu}");
    }
}

#[test]
fn linear_network_has_no_knots() {
    let w = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![4.0, 0.0]]).unwrap();
    let net = CpwlNetwork::linear(w, vec![0.1, 0.2, 0.3]).unwrap();
    let cfg = ComplexityConfig::full(2, 10.0).unwrap();
    assert_eq!(local_complexity(&net, &[0.3, -0.7], &cfg).unwrap(), 0);
}

#[test]
fn scaling_equals_half_log_gram_determinant() {
    let mut r = rng::seeded(2);
    for seed in 0..20 {
        let net = relu_net(3, &[24, 24], 5, seed);
        let z = rng::normal_vec::<f64>(&mut r, 3);
        let slope = affine_at(&net, &z).unwrap().slope;
        let ev = jacobi_eigenvalues(gram_t(5, 3, slope.as_slice()));
        if ev[2] < 1e-8 * ev[0] {
            continue;
        }
        let oracle = 0.5 * ev.iter().map(|v| v.ln()).sum::<f64>();
        let psi = scaling_from_slope(&slope).unwrap().psi;
        assert!((psi - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "{psi} vs {oracle}");
    }
}

#[test]
fn f32_and_f64_descriptors_agree() {
    let net = relu_net(2, &[20, 20, 20], 3, 9);
    let net32 = net.cast::<f32>();
    let cfg = ComplexityConfig::<f64>::full(2, 0.05).unwrap();
    let cfg32 = ComplexityConfig::<f32>::full(2, 0.05).unwrap();
    let mut r = rng::seeded(4);
    for _ in 0..50 {
        let z: Vec<f64> = rng::normal_vec(&mut r, 2);
        let z32: Vec<f32> = z.iter().map(|&v| v as f32).collect();
        let (a, b) = (descriptors_at(&net, &z, &cfg).unwrap(), descriptors_at(&net32, &z32, &cfg32).unwrap());
        assert!((a.psi - b.psi as f64).abs() < 1e-3, "{} vs {}", a.psi, b.psi);
        assert!((a.nu - b.nu as f64).abs() < 1e-3);
    }
}

proptest! {
    #[test]
    fn rank_lies_between_one_and_min_dimension(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let m = Matrix::<f64>::from_vec(rows, cols, rng::normal_vec(&mut r, rows * cols)).unwrap();
        let sigma = singular_values(&m).unwrap();
        let nu = rank_from_singular_values(&sigma, rows, cols).unwrap().nu;
        prop_assert!(nu >= 1.0 - 1e-12 && nu <= rows.min(cols) as f64 + 1e-12, "{}", nu);
    }

    #[test]
    fn scaling_is_additive_under_uniform_rescale(seed in any::<u64>(), c in 0.1f64..10.0) {
        let mut r = rng::seeded(seed);
        let m = Matrix::<f64>::from_vec(4, 3, rng::normal_vec(&mut r, 12)).unwrap();
        let a = scaling_from_slope(&m).unwrap().psi;
        let b = scaling_from_slope(&m.scale(c)).unwrap().psi;
        prop_assert!((b - a - 3.0 * c.ln()).abs() < 1e-9 * (1.0 + a.abs()));
    }

    // One hidden layer: pre-activations are affine along each probe ray, so a
    // neuron that flips at radius r stays flipped at any larger radius.
    #[test]
    fn complexity_grows_with_radius_for_one_hidden_layer(
        seed in any::<u64>(),
        z in prop::collection::vec(-2.0f64..2.0, 3),
        r1 in 0.01f64..1.0,
        grow in 1.0f64..5.0,
    ) {
        let net = relu_net(3, &[32], 2, seed);
        let small = ComplexityConfig::full(3, r1).unwrap();
        let large = small.with_radius(r1 * grow).unwrap();
        prop_assert!(local_complexity(&net, &z, &small).unwrap() <= local_complexity(&net, &z, &large).unwrap());
    }
}
