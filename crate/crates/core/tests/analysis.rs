mod common;

use cpwl_geometry::analysis::stats::spearman;
use cpwl_geometry::analysis::{auroc, density_scaling_correlation, kde_density, rank_sum, vendi_score, KdeEstimate, LatentBox};
use cpwl_geometry::linalg::Matrix;
use cpwl_geometry::net::{Activation, CpwlNetwork, Layer};
use cpwl_geometry::linalg::rng;
use proptest::prelude::*;

use common::jacobi_eigenvalues;

fn brute_force_auroc(neg: &[f64], pos: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in pos {
        for n in neg {
            s += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    s / (neg.len() * pos.len()) as f64
}

#[test]
fn vendi_matches_eigenvalues_of_cosine_gram() {
    let mut r = rng::seeded(8);
    let x: Vec<Vec<f64>> = (0..50).map(|_| rng::normal_vec(&mut r, 8)).collect();
    let unit: Vec<Vec<f64>> = x
        .iter()
        .map(|v| {
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter().map(|a| a / n).collect()
        })
        .collect();
    let k: Vec<Vec<f64>> = unit
        .iter()
        .map(|a| unit.iter().map(|b| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / 50.0).collect())
        .collect();
    let h: f64 = jacobi_eigenvalues(k).into_iter().filter(|&l| l > 1e-15).map(|l| -l * l.ln()).sum();
    let vs = vendi_score(&x).unwrap();
    assert!((vs - h.exp()).abs() < 1e-8 * vs, "{vs} vs {}", h.exp());
}

#[test]
fn vendi_extremes() {
    assert!((vendi_score(&vec![vec![1.0, 2.0]; 10]).unwrap() - 1.0).abs() < 1e-9);
    let basis: Vec<Vec<f64>> = (0..6).map(|i| (0..6).map(|j| f64::from(i == j)).collect()).collect();
    assert!((vendi_score(&basis).unwrap() - 6.0).abs() < 1e-9);
}

#[test]
fn rank_sum_detects_shift_in_both_directions() {
    let mut r = rng::seeded(1);
    let a: Vec<f64> = rng::normal_vec(&mut r, 200);
    let b: Vec<f64> = rng::normal_vec::<f64>(&mut r, 200).into_iter().map(|v| v + 0.5).collect();
    let ab = rank_sum(&a, &b).unwrap();
    let ba = rank_sum(&b, &a).unwrap();
    assert!(ab.p_greater < 1e-2, "{}", ab.p_greater);
    assert!(ba.p_less < 1e-2);
    assert!((ab.u - brute_force_auroc(&a, &b) * 200.0 * 200.0).abs() < 1e-6);
    assert!((ab.p_greater - ba.p_less).abs() < 1e-12);
}

proptest! {
    #[test]
    fn auroc_matches_pair_counting(
        neg in prop::collection::vec(-5i32..5, 1..30),
        pos in prop::collection::vec(-5i32..5, 1..30),
    ) {
        let (neg, pos): (Vec<f64>, Vec<f64>) = (neg.into_iter().map(f64::from).collect(), pos.into_iter().map(f64::from).collect());
        prop_assume!(neg.iter().chain(&pos).any(|&v| v != neg[0]));
        prop_assert!((auroc(&neg, &pos).unwrap() - brute_force_auroc(&neg, &pos)).abs() < 1e-12);
    }

    #[test]
    fn auroc_is_invariant_under_monotone_transforms(
        neg in prop::collection::vec(-3.0f64..3.0, 2..40),
        pos in prop::collection::vec(-3.0f64..3.0, 2..40),
    ) {
        let f = |v: &f64| (2.0 * v).exp() + v.powi(3);
        let a = auroc(&neg, &pos).unwrap();
        let b = auroc(&neg.iter().map(f).collect::<Vec<_>>(), &pos.iter().map(f).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn vendi_is_bounded_and_permutation_invariant(seed in any::<u64>(), n in 1usize..25, d in 1usize..6) {
        let mut r = rng::seeded(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| rng::normal_vec(&mut r, d)).collect();
        let vs = vendi_score(&x).unwrap();
        prop_assert!((1.0..=n as f64).contains(&vs));
        let mut y = x.clone();
        y.reverse();
        y.rotate_left(n / 3);
        prop_assert!((vendi_score(&y).unwrap() - vs).abs() < 1e-9 * vs);
    }
}

fn two_region_net() -> CpwlNetwork<f64> {
    // (z₀ + 2·relu(z₀), z₁): slope diag(1,1) for z₀ < 0 and diag(3,1) for z₀ > 0.
    let hidden = Layer::new(
        Matrix::from_vec(4, 2, vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]).unwrap(),
        vec![0.0; 4],
        Activation::Relu,
    )
    .unwrap();
    let out = Layer::new(
        Matrix::from_vec(2, 4, vec![3.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]).unwrap(),
        vec![0.0; 2],
        Activation::Identity,
    )
    .unwrap();
    CpwlNetwork::new(vec![hidden, out]).unwrap()
}

fn uniform_latents(n: usize, dim: usize, half: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    (0..n).map(|_| (0..dim).map(|_| rng::uniform(&mut r, -half, half)).collect()).collect()
}

#[test]
fn gaussian_kde_matches_closed_form_density_at_origin() {
    let mut r = rng::seeded(21);
    let s: Vec<Vec<f64>> = (0..10_000).map(|_| rng::normal_vec(&mut r, 2)).collect();
    let d = kde_density(&s, &[0.0, 0.0], None).unwrap();
    let truth = 1.0 / (2.0 * std::f64::consts::PI);
    assert!((d / truth - 1.0).abs() < 0.1, "{d} vs {truth}");
}

#[test]
fn reflected_uniform_kde_is_flat_up_to_the_edges() {
    let b = LatentBox::square(2, 1.0);
    let s = uniform_latents(20_000, 2, 1.0, 5);
    let h = 0.1;
    let plain = KdeEstimate::new(s.clone(), Some(h)).unwrap();
    let mut all = s.clone();
    for z in &s {
        let m = b.mirrors(z);
        assert_eq!(m.len(), 8);
        all.extend(m);
    }
    let reflected = KdeEstimate::new(all, Some(h)).unwrap();
    // Mirrors carry mass that belongs to the domain, so counts are per original sample.
    let scale = 9.0;
    for q in [[0.99, 0.0], [0.99, 0.99], [-0.98, 0.5]] {
        let p = reflected.density(&q).unwrap() * scale;
        assert!((p / 0.25 - 1.0).abs() < 0.1, "{q:?}: {p}");
    }
    assert!(plain.density(&[0.99, 0.99]).unwrap() < 0.4 * 0.25);
}

#[test]
fn mirrors_are_face_reflections() {
    let b = LatentBox { lower: vec![0.0], upper: vec![2.0] };
    assert_eq!(b.mirrors(&[0.5]), vec![vec![-0.5], vec![3.5]]);
}

#[test]
fn two_region_net_correlation_tracks_analytic_density() {
    let net = two_region_net();
    let z = uniform_latents(2000, 2, 1.0, 9);
    let b = LatentBox::square(2, 1.0);
    // Analytic output density is 1/4 on the left image and 1/12 on the right; with
    // ψ two-valued the attainable Spearman is capped by ties.
    let neg_psi: Vec<f64> = z.iter().map(|p| if p[0] > 0.0 { -(3f64).ln() } else { 0.0 }).collect();
    let tie_broken: Vec<f64> = neg_psi.iter().zip(&z).map(|(v, p)| v - 1e-9 * p[0]).collect();
    let cap = spearman(&neg_psi, &tie_broken).unwrap();
    for scale in [0.5, 1.0, 2.0] {
        let c = density_scaling_correlation(&net, &z, scale, Some(&b), 1).unwrap();
        assert!(c.spearman > 0.85 * cap, "scale {scale}: {} vs cap {cap}", c.spearman);
        let plain = density_scaling_correlation(&net, &z, scale, None, 1).unwrap();
        assert!(plain.spearman > 0.0, "scale {scale}: {}", plain.spearman);
    }
}

#[test]
fn linear_net_has_constant_psi_and_no_correlation() {
    let net = CpwlNetwork::linear(Matrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap(), vec![0.0; 2]).unwrap();
    let z = uniform_latents(200, 2, 1.0, 1);
    assert!(density_scaling_correlation(&net, &z, 1.0, None, 1).is_err());
}

#[test]
fn density_correlation_is_independent_of_workers() {
    let net = two_region_net();
    let z = uniform_latents(300, 2, 1.0, 2);
    let b = LatentBox::square(2, 1.0);
    let a = density_scaling_correlation(&net, &z, 1.0, Some(&b), 1).unwrap();
    let c = density_scaling_correlation(&net, &z, 1.0, Some(&b), 8).unwrap();
    assert_eq!(a.spearman.to_bits(), c.spearman.to_bits());
    assert_eq!(a.pearson.to_bits(), c.pearson.to_bits());
}
