//! Randomized comparisons of the library against the oracles in the parent
//! module. Each returns the worst discrepancy it saw so the module suites and
//! the acceptance run can apply their own thresholds and report.

use super::*;
use hsic_core::eval::infer_permutation;
use hsic_core::hsic::{
    bottleneck, hsic_biased, hsic_components, nhsic as lib_nhsic, nhsic_grad_z, self_hsic_diagnostics, NhsicCache,
};
use hsic_core::kernels::gaussian_gram;
use hsic_core::nn::{backprop_grads, layer_local_grads, softmax_cross_entropy, Block, BlockGrads};
use hsic_core::{Activation, Architecture, DenseLayer, KernelParams, Mode, Network};

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;
/// Regularizer used by the gradient checks. At the default 1e-5 the resolvent
/// of a batch of 16 or fewer points has a condition number near 1e5, and
/// roundoff in the differenced objective exceeds the tolerance.
pub const FD_EPSILON: f64 = 1e-3;
/// Below this gradient norm errors are absolute.
const FD_FLOOR: f64 = 1e-9;

fn kernel(sigma: f64, eps: f64) -> KernelParams {
    KernelParams::new(sigma, eps).unwrap()
}

fn one_hot(labels: &[usize], c: usize) -> Matrix {
    hsic_core::data::one_hot(labels, c).unwrap()
}

/// Largest relative gap between `hsic_biased` and the entrywise quadruple
/// sum, over `instances` random pairs with `m <= max_m`.
pub fn hsic_vs_elementwise(instances: usize, max_m: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = r.random_range(2..=max_m);
        let zx = uniform(m, r.random_range(1..8), -1.0, 1.0, &mut r);
        let zy = uniform(m, r.random_range(1..8), -1.0, 1.0, &mut r);
        let sigma = r.random_range(0.2..2.0);
        let (gx, gy) = (gram(&zx, sigma), gram(&zy, sigma));
        let want = hsic_elementwise(&gx, &gy);
        let got = hsic_biased(&Matrix::from_rows(&gx).unwrap(), &Matrix::from_rows(&gy).unwrap()).unwrap();
        worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
    }
    worst
}

/// Largest gap between the summed components and `(m-1)²·hsic_biased`,
/// relative to the latter.
pub fn components_vs_scaled(instances: usize, max_m: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = r.random_range(2..=max_m);
        let p = kernel(r.random_range(0.3..3.0), 1e-5);
        let kx = gaussian_gram(&uniform(m, 3, 0.0, 1.0, &mut r), &p).unwrap();
        let ky = gaussian_gram(&uniform(m, 2, 0.0, 1.0, &mut r), &p).unwrap();
        let sum: f64 = hsic_components(&kx, &ky).unwrap().iter().sum();
        let scaled = ((m - 1) as f64).powi(2) * hsic_biased(&kx, &ky).unwrap();
        worst = worst.max((sum - scaled).abs() / scaled.abs().max(1.0));
    }
    worst
}

/// Largest absolute error of both two-point closed forms. With points `u`
/// apart, `K = [[1, a], [a, 1]]`, `a = exp(-u²/2)` and `K̄ = (1 - a)H`, where
/// `H` is a rank-one projector. Hence `HSIC = (1 - a)(1 - b)` and each
/// normalized Gram is `(1 - a)/(1 - a + 2ε)·H`.
pub fn two_point_closed_forms() -> f64 {
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for (u, v) in [(0.5, 1.0), (0.1, 2.0), (1.5, 0.3), (2f64.sqrt(), 2f64.sqrt()), (3.0, 0.05)] {
        let zx = Matrix::column_vector(&[0.0, u]);
        let zy = Matrix::column_vector(&[0.0, v]);
        let (a, b) = ((-u * u / 2.0f64).exp(), (-v * v / 2.0f64).exp());
        let p = kernel(1.0, eps);
        let h = hsic_biased(&gaussian_gram(&zx, &p).unwrap(), &gaussian_gram(&zy, &p).unwrap()).unwrap();
        worst = worst.max((h - (1.0 - a) * (1.0 - b)).abs());
        let want = (1.0 - a) / (1.0 - a + 2.0 * eps) * (1.0 - b) / (1.0 - b + 2.0 * eps);
        let (n, _, _) = lib_nhsic(&zx, &zy, &p).unwrap();
        worst = worst.max((n - want).abs());
    }
    worst
}

/// Largest relative spread among the trace, Frobenius and eigenvalue forms
/// of self-dependence, and the entrywise oracle.
pub fn self_hsic_forms(instances: usize, max_m: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let m = r.random_range(2..=max_m);
        let z = uniform(m, r.random_range(1..6), -1.0, 1.0, &mut r);
        let sigma = r.random_range(0.3..2.0);
        let s = self_hsic_diagnostics(&z, &kernel(sigma, 1e-5)).unwrap();
        let g = gram(&z, sigma);
        let scale = s.trace_form.abs().max(f64::MIN_POSITIVE);
        for other in [s.frobenius_form, s.eig_sum_sq, hsic_elementwise(&g, &g)] {
            worst = worst.max((s.trace_form - other).abs() / scale);
        }
    }
    worst
}

/// Sample size and bandwidth of the independence comparison.
pub const INDEPENDENCE_M: usize = 512;
pub const INDEPENDENCE_SIGMA: f64 = 5.0;

/// nHSIC of an independent standard-normal pair and of a dependent pair
/// (`Z`, `Z` plus 0.1 noise), both two-dimensional with a fixed seed. Each is
/// checked against the explicit-inverse oracle.
pub fn independence_scores() -> (f64, f64) {
    let p = kernel(INDEPENDENCE_SIGMA, hsic_core::kernels::DEFAULT_EPSILON);
    let (a, b) = hsic_core::data::independent_pair(INDEPENDENCE_M, 2, 0);
    let (z, w) = hsic_core::data::dependent_pair(INDEPENDENCE_M, 2, 0.1, 0);
    let score = |x: &Matrix, y: &Matrix| {
        let got = lib_nhsic(x, y, &p).unwrap().0;
        let want = nhsic(x, y, p.sigma, p.epsilon);
        assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{got} vs oracle {want}");
        got
    };
    (score(&a, &b), score(&z, &w))
}

fn activation(seed: u64) -> Activation {
    [Activation::Tanh, Activation::Identity, Activation::Relu][(seed % 3) as usize]
}

/// Random nonzero biases. Zero biases put ReLU pre-activations exactly on the
/// kink for rows zeroed by the previous layer, where the derivative is one-sided.
fn jitter_biases(net: &mut Network, r: &mut impl Rng) {
    for b in net.blocks_mut() {
        for v in b.dense.b.iter_mut() {
            *v = r.random_range(-0.5..0.5);
        }
    }
}

/// Flattened parameters of a block, in the order of [`grads_flat`].
fn params_flat(b: &Block) -> Vec<f64> {
    let mut v = b.dense.w.as_slice().to_vec();
    v.extend(&b.dense.b);
    if let Some(bn) = &b.bn {
        v.extend(&bn.gamma);
        v.extend(&bn.beta);
    }
    v
}

fn set_params(b: &mut Block, flat: &[f64]) {
    let nw = b.dense.w.as_slice().len();
    let nb = b.dense.b.len();
    b.dense.w.as_mut_slice().copy_from_slice(&flat[..nw]);
    b.dense.b.copy_from_slice(&flat[nw..nw + nb]);
    if let Some(bn) = &mut b.bn {
        let d = bn.gamma.len();
        bn.gamma.copy_from_slice(&flat[nw + nb..nw + nb + d]);
        bn.beta.copy_from_slice(&flat[nw + nb + d..nw + nb + 2 * d]);
    }
}

fn grads_flat(g: &BlockGrads) -> Vec<f64> {
    let mut v = g.w.as_slice().to_vec();
    v.extend(&g.b);
    if let (Some(gm), Some(bt)) = (&g.gamma, &g.beta) {
        v.extend(gm);
        v.extend(bt);
    }
    v
}

/// Worst relative FD error of `nhsic_grad_z` over `seeds` instances, with
/// the seed it occurred at.
pub fn fd_nhsic(seeds: u64) -> (f64, u64) {
    worst_over(seeds, |seed| {
        let mut r = rng(seed);
        let m = r.random_range(4..=16);
        let d = r.random_range(1..=5);
        let p = kernel(r.random_range(0.5..2.0), FD_EPSILON);
        let zx = uniform(m, d, -1.0, 1.0, &mut r);
        let zy = uniform(m, r.random_range(1..=4), -1.0, 1.0, &mut r);
        let (_, cx, cy) = lib_nhsic(&zx, &zy, &p).unwrap();
        let g = nhsic_grad_z(&zx, &cx, &cy, &p).unwrap();
        let fd = central_diff(zx.as_slice(), FD_STEP, |v| {
            let z = Matrix::from_vec(m, d, v.to_vec()).unwrap();
            lib_nhsic(&z, &zy, &p).unwrap().0
        });
        rel_err(g.as_slice(), &fd, FD_FLOOR)
    })
}

/// Worst relative FD error of the bottleneck objective's gradient in `Z`.
pub fn fd_bottleneck(seeds: u64) -> (f64, u64) {
    worst_over(seeds, |seed| {
        let mut r = rng(100 + seed);
        let m = r.random_range(4..=16);
        let p = kernel(r.random_range(0.5..3.0), FD_EPSILON);
        let beta = [0.0, 1.0, 500.0][(seed % 3) as usize];
        let x = uniform(m, 6, 0.0, 1.0, &mut r);
        let labels: Vec<usize> = (0..m).map(|i| i % 3).collect();
        let cx = NhsicCache::new(&x, &p).unwrap();
        let cy = NhsicCache::new(&one_hot(&labels, 3), &p).unwrap();
        let z = uniform(m, 3, -1.0, 1.0, &mut r);
        let eval = bottleneck(&z, &cx, &cy, beta, &p).unwrap();
        let fd = central_diff(z.as_slice(), FD_STEP, |v| {
            let z = Matrix::from_vec(m, 3, v.to_vec()).unwrap();
            bottleneck(&z, &cx, &cy, beta, &p).unwrap().objective
        });
        rel_err(eval.grad.as_slice(), &fd, FD_FLOOR)
    })
}

/// Worst relative FD error of one block's parameter gradients under the
/// bottleneck objective, with the block input held fixed.
pub fn fd_layer_local(seeds: u64) -> (f64, u64) {
    worst_over(seeds, |seed| {
        let mut r = rng(200 + seed);
        let m = r.random_range(4..=16);
        let arch = Architecture::new(vec![5, 4, 3], activation(seed), seed % 2 == 0).unwrap();
        let mut net = Network::new(&arch, seed);
        jitter_biases(&mut net, &mut r);
        let p = kernel(1.0, FD_EPSILON);
        let x = uniform(m, 5, 0.0, 1.0, &mut r);
        let labels: Vec<usize> = (0..m).map(|i| i % 3).collect();
        let cx = NhsicCache::new(&x, &p).unwrap();
        let cy = NhsicCache::new(&one_hot(&labels, 3), &p).unwrap();
        let z_prev = net.blocks()[0].forward(&x, Mode::Train).unwrap();
        let block = net.blocks()[1].clone();
        let objective = |b: &Block| {
            let z = b.forward(&z_prev, Mode::Train).unwrap();
            bottleneck(&z, &cx, &cy, 2.0, &p).unwrap()
        };
        let eval = objective(&block);
        let g = layer_local_grads(&block, &z_prev, &eval.grad, Mode::Train).unwrap();
        let mut probe = block.clone();
        let fd = central_diff(&params_flat(&block), FD_STEP, |v| {
            set_params(&mut probe, v);
            objective(&probe).objective
        });
        rel_err(&grads_flat(&g), &fd, FD_FLOOR)
    })
}

/// Worst relative FD error of the end-to-end cross-entropy gradients, over
/// networks of one to three blocks plus a head.
pub fn fd_backprop(seeds: u64) -> (f64, u64) {
    worst_over(seeds, |seed| {
        let mut r = rng(300 + seed);
        let m = r.random_range(4..=16);
        let depth = r.random_range(1..=3);
        let mut dims = vec![4];
        dims.extend((0..depth).map(|_| r.random_range(2..=5)));
        let arch = Architecture::new(dims, activation(seed), seed % 2 == 1).unwrap();
        let mut net = Network::new(&arch, seed);
        jitter_biases(&mut net, &mut r);
        let head = DenseLayer::seeded(net.output_dim(), 3, seed + 7);
        let x = uniform(m, 4, -1.0, 1.0, &mut r);
        let labels: Vec<usize> = (0..m).map(|_| r.random_range(0..3)).collect();
        let y = one_hot(&labels, 3);
        let g = backprop_grads(&net, &head, &x, &y).unwrap();
        let loss = |net: &Network, head: &DenseLayer| {
            let z = net.output(&x, Mode::Train).unwrap();
            softmax_cross_entropy(&head.forward(&z).unwrap(), &y).unwrap().0
        };
        assert!((g.loss - loss(&net, &head)).abs() < 1e-12);

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for (i, bg) in g.blocks.iter().enumerate() {
            let mut probe = net.clone();
            numeric.extend(central_diff(&params_flat(&net.blocks()[i]), FD_STEP, |v| {
                set_params(&mut probe.blocks_mut()[i], v);
                loss(&probe, &head)
            }));
            analytic.extend(grads_flat(bg));
        }
        let mut theta = head.w.as_slice().to_vec();
        theta.extend(&head.b);
        let nw = head.w.as_slice().len();
        let mut probe = head.clone();
        numeric.extend(central_diff(&theta, FD_STEP, |v| {
            probe.w.as_mut_slice().copy_from_slice(&v[..nw]);
            probe.b.copy_from_slice(&v[nw..]);
            loss(&net, &probe)
        }));
        analytic.extend(g.head.w.as_slice());
        analytic.extend(&g.head.b);
        rel_err(&analytic, &numeric, FD_FLOOR)
    })
}

fn worst_over(seeds: u64, mut f: impl FnMut(u64) -> f64) -> (f64, u64) {
    (0..seeds).map(|s| (f(s), s)).fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a })
}

/// Compares `infer_permutation` with exhaustive search on random class-mean
/// matrices of up to six classes. Returns the number of instances whose
/// assignment differs from the oracle's and whether every result was a
/// bijection. Half the instances are noisy one-hot patterns, the other half
/// uniform noise, where argmax collisions are common.
pub fn permutation_vs_exhaustive(instances: usize, seed: u64) -> (usize, bool) {
    let mut r = rng(seed);
    let mut mismatches = 0;
    let mut bijective = true;
    for k in 0..instances {
        let c = r.random_range(2..=6);
        let mut means = vec![vec![0.0; c]; c];
        let mut target: Vec<usize> = (0..c).collect();
        for i in (1..c).rev() {
            target.swap(i, r.random_range(0..=i));
        }
        for (i, row) in means.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = r.random_range(0.0..1.0);
                if k % 2 == 0 && j == target[i] {
                    *v += 0.5;
                }
            }
        }
        // one sample per class whose activation is its class mean
        let z = Matrix::from_rows(&means).unwrap();
        let labels: Vec<usize> = (0..c).collect();
        let got = infer_permutation(&z, &labels).unwrap();
        let mut seen = vec![false; c];
        for &o in got.class_to_output() {
            bijective &= !std::mem::replace(&mut seen[o], true);
        }
        let (want, _) = best_assignment(&means);
        if got.class_to_output() != want.as_slice() {
            mismatches += 1;
        }
    }
    (mismatches, bijective)
}
