mod common;

use common::*;
use common::checks;
use hsic_core::hsic::nhsic;
use hsic_core::kernels::gaussian_gram;
use hsic_core::{KernelParams, Matrix};
use rand::Rng;

fn kernel(sigma: f64, eps: f64) -> KernelParams {
    KernelParams::new(sigma, eps).unwrap()
}

#[test]
fn gram_matches_explicit_differences() {
    let mut r = rng(11);
    for _ in 0..10 {
        let m = r.random_range(2..30);
        let d = r.random_range(1..12);
        let sigma = r.random_range(0.3..4.0);
        let z = uniform(m, d, -2.0, 2.0, &mut r);
        let fast = gaussian_gram(&z, &kernel(sigma, 1e-5)).unwrap();
        let slow = gram(&z, sigma);
        for i in 0..m {
            for j in 0..m {
                assert!((fast[(i, j)] - slow[i][j]).abs() < 1e-13);
            }
        }
    }
}

#[test]
fn biased_hsic_matches_elementwise_sum() {
    let worst = checks::hsic_vs_elementwise(50, 64, 1);
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn components_sum_to_scaled_estimate() {
    let worst = checks::components_vs_scaled(20, 64, 2);
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn two_sample_closed_forms() {
    let worst = checks::two_point_closed_forms();
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn nhsic_matches_explicit_inverse() {
    let mut r = rng(3);
    for _ in 0..15 {
        let m = r.random_range(3..=24);
        let eps = [1e-5, 1e-3, 1e-1][r.random_range(0..3)];
        let sigma = r.random_range(0.5..3.0);
        let zx = uniform(m, 4, -1.0, 1.0, &mut r);
        let zy = uniform(m, 2, -1.0, 1.0, &mut r);
        let want = nhsic_oracle(&zx, &zy, sigma, eps);
        let (got, _, _) = nhsic(&zx, &zy, &kernel(sigma, eps)).unwrap();
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{got} vs {want}");
    }
}

fn nhsic_oracle(zx: &Matrix, zy: &Matrix, sigma: f64, eps: f64) -> f64 {
    common::nhsic(zx, zy, sigma, eps)
}

#[test]
fn self_dependence_three_ways_agree() {
    let worst = checks::self_hsic_forms(20, 32, 4);
    assert!(worst <= 1e-8, "{worst:e}");
}
