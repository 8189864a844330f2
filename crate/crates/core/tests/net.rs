mod common;

use cpwl_geometry::linalg::rng;
use cpwl_geometry::net::{affine_at, CpwlNetwork, PiecewiseAffine};
use proptest::prelude::*;

use common::relu_net;

/// Central differences of `net` at `z`, one column per input.
fn fd_jacobian(net: &CpwlNetwork<f64>, z: &[f64], h: f64) -> Vec<Vec<f64>> {
    (0..z.len())
        .map(|j| {
            let (mut a, mut b) = (z.to_vec(), z.to_vec());
            a[j] += h;
            b[j] -= h;
            let (fa, fb) = (net.eval(&a).unwrap(), net.eval(&b).unwrap());
            fa.iter().zip(&fb).map(|(x, y)| (x - y) / (2.0 * h)).collect()
        })
        .collect()
}

#[test]
fn slope_matches_central_differences_away_from_knots() {
    let mut r = rng::seeded(5);
    let mut checked = 0;
    for seed in 0..40u64 {
        let net = relu_net(3, &[16, 16], 4, seed);
        for _ in 0..5 {
            let z = rng::normal_vec::<f64>(&mut r, 3);
            if net.local_affine(&z).unwrap().margin < 1e-3 {
                continue;
            }
            let slope = affine_at(&net, &z).unwrap().slope;
            let fd = fd_jacobian(&net, &z, 1e-6);
            for (j, col) in fd.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    let s = slope[(i, j)];
                    assert!((s - v).abs() <= 1e-5 * (1.0 + s.abs()), "seed {seed}: ({i},{j}) {s} vs {v}");
                }
            }
            checked += 1;
        }
    }
    assert!(checked > 150);
}

proptest! {
    #[test]
    fn affine_map_reproduces_forward(seed in any::<u64>(), z in prop::collection::vec(-3.0f64..3.0, 4)) {
        let net = relu_net(4, &[12, 8], 3, seed);
        let m = affine_at(&net, &z).unwrap();
        let direct = net.eval(&z).unwrap();
        for (a, b) in m.apply(&z).unwrap().iter().zip(&direct) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn equal_patterns_give_identical_maps(seed in any::<u64>(), z in prop::collection::vec(-3.0f64..3.0, 2)) {
        let net = relu_net(2, &[10, 10], 3, seed);
        let local = net.local_affine(&z).unwrap();
        let from_pattern = net.affine_for_pattern(&local.pattern).unwrap();
        prop_assert_eq!(from_pattern, local.map);
    }
}
