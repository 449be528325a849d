mod common;

use common::checks;
use hsic_core::data::independent_pair;
use hsic_core::eval::onehotness;
use rand::Rng;

const M: usize = 512;
const SEED: u64 = 0;

/// Measured at the default training bandwidth (sigma 5). Small bandwidths
/// inflate the independent score: about 0.08 of the dependent one at sigma 1.
#[test]
fn independent_pair_scores_far_below_dependent_pair() {
    let (indep, dep) = checks::independence_scores();
    println!("independent {indep:.6}, dependent {dep:.6}");
    assert!(indep < 0.05 * dep);
}

#[test]
fn independent_pair_is_uncorrelated() {
    let (a, b) = independent_pair(M, 1, SEED);
    let (x, y) = (a.column(0), b.column(0));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&x), mean(&y));
    let cov: f64 = x.iter().zip(&y).map(|(p, q)| (p - mx) * (q - my)).sum();
    let sx = x.iter().map(|p| (p - mx).powi(2)).sum::<f64>().sqrt();
    let sy = y.iter().map(|q| (q - my).powi(2)).sum::<f64>().sqrt();
    assert!((cov / (sx * sy)).abs() < 0.1);
}

#[test]
fn random_activations_are_not_one_hot() {
    let mut r = common::rng(SEED);
    let n = 1000;
    let z = independent_pair(n, 10, SEED).0;
    let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..10)).collect();
    let score = onehotness(&z, &labels).unwrap();
    println!("onehotness of gaussian noise: {score:.4}");
    assert!(score < 0.5);
}
