//! Empirical HSIC estimators and the gradient of the normalized estimator
//! with respect to a representation matrix.
//!
//! * [`hsic_biased`]: `(m-1)⁻² tr(K_X H K_Y H)`.
//! * [`hsic_components`]: the per-sample terms `⟨(K_X H)ᵢ., (K_Y H).ᵢ⟩` of
//!   that trace.
//! * [`nhsic`]: `tr(K̃_X K̃_Y)` with `K̃ = K̄(K̄ + εmI)⁻¹` and `K̄ = HKH`.
//!
//! # Gradient
//!
//! With `c = εm` and `R = (K̄ + cI)⁻¹` we have `K̃ = I - cR`, so for a fixed
//! symmetric `W`
//!
//! ```text
//! ∂ tr(K̃ W) / ∂K̄ = c·R·W·R
//! ```
//!
//! This is pulled back through `K̄ = HKH` by centering, then through the
//! Gaussian entries `K_ij = exp(-‖zᵢ - zⱼ‖² / 2s)` to the rows of `Z`:
//!
//! ```text
//! ∂f/∂zᵢ = -(1/s) Σⱼ Sᵢⱼ (zᵢ - zⱼ),   S = (G + Gᵀ) ∘ K
//! ```

use crate::error::{Error, Result};
use crate::kernels::{center, center_unchecked, gaussian_gram, KernelParams};
use crate::linalg::{eigvals_sym, solve_spd, Matrix};

fn check_pair(op: &'static str, kx: &Matrix, ky: &Matrix) -> Result<usize> {
    if !kx.is_square() || !ky.is_square() || kx.rows() != ky.rows() {
        return Err(Error::dim(
            op,
            "two square matrices of equal size",
            format!("{}x{} and {}x{}", kx.rows(), kx.cols(), ky.rows(), ky.cols()),
        ));
    }
    let m = kx.rows();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "{op}: estimator needs at least 2 samples, got {m}"
        )));
    }
    Ok(m)
}

/// `K·H`, i.e. `K` with each row's mean removed.
fn right_center(k: &Matrix) -> Matrix {
    let m = k.cols() as f64;
    let mut out = k.clone();
    for i in 0..k.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / m;
        for v in row {
            *v -= mean;
        }
    }
    out
}

/// Per-sample components of `tr(K_X H K_Y H)`; the `i`-th is the inner
/// product of row `i` of `K_X H` with column `i` of `K_Y H`.
pub fn hsic_components(kx: &Matrix, ky: &Matrix) -> Result<Vec<f64>> {
    let m = check_pair("hsic_components", kx, ky)?;
    let a = right_center(kx);
    let b = right_center(ky);
    Ok((0..m)
        .map(|i| {
            let ai = a.row(i);
            (0..m).map(|j| ai[j] * b[(j, i)]).sum()
        })
        .collect())
}

/// Biased empirical HSIC, `(m-1)⁻² tr(K_X H K_Y H)`.
pub fn hsic_biased(kx: &Matrix, ky: &Matrix) -> Result<f64> {
    let comps = hsic_components(kx, ky)?;
    let m = comps.len() as f64;
    Ok(comps.iter().sum::<f64>() / ((m - 1.0) * (m - 1.0)))
}

/// Kernel matrices of one side of an nHSIC evaluation, kept for gradients.
#[derive(Debug, Clone)]
pub struct NhsicCache {
    /// Raw Gram matrix `K`.
    pub gram: Matrix,
    /// `K̄ = HKH`.
    pub centered: Matrix,
    /// `K̃ = K̄(K̄ + εmI)⁻¹`.
    pub normalized: Matrix,
    /// `(K̄ + εmI)⁻¹`.
    pub resolvent: Matrix,
    pub m: usize,
    /// Feature dimension of the rows the Gram matrix was built from.
    pub dim: usize,
}

impl NhsicCache {
    pub fn new(z: &Matrix, params: &KernelParams) -> Result<Self> {
        let m = z.rows();
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "nhsic needs at least 2 samples, got {m}"
            )));
        }
        let gram = gaussian_gram(z, params)?;
        let centered = center_unchecked(&gram);
        let ridge = params.epsilon * m as f64;
        let resolvent = solve_spd(&centered, &Matrix::identity(m), ridge)?.symmetrized();
        let normalized = centered.dot(&resolvent).symmetrized();
        Ok(NhsicCache {
            gram,
            centered,
            normalized,
            resolvent,
            m,
            dim: z.cols(),
        })
    }
}

/// `tr(K̃_a K̃_b)` from two caches over the same batch.
pub fn nhsic_from_caches(a: &NhsicCache, b: &NhsicCache) -> Result<f64> {
    if a.m != b.m {
        return Err(Error::dim("nhsic", format!("{} samples", a.m), b.m));
    }
    // both are symmetric, so the trace of the product is the elementwise dot
    Ok(a
        .normalized
        .as_slice()
        .iter()
        .zip(b.normalized.as_slice())
        .map(|(x, y)| x * y)
        .sum())
}

/// Normalized HSIC between the rows of `zx` and `zy`, with the caches of
/// both sides.
pub fn nhsic(
    zx: &Matrix,
    zy: &Matrix,
    params: &KernelParams,
) -> Result<(f64, NhsicCache, NhsicCache)> {
    if zx.rows() != zy.rows() {
        return Err(Error::dim("nhsic", format!("{} rows", zx.rows()), zy.rows()));
    }
    let cx = NhsicCache::new(zx, params)?;
    let cy = NhsicCache::new(zy, params)?;
    let value = nhsic_from_caches(&cx, &cy)?;
    Ok((value, cx, cy))
}

fn check_cache(z: &Matrix, cache: &NhsicCache, op: &'static str) -> Result<()> {
    if cache.m != z.rows() || cache.dim != z.cols() {
        return Err(Error::dim(
            op,
            format!("cache built from a {}x{} matrix", z.rows(), z.cols()),
            format!("{}x{}", cache.m, cache.dim),
        ));
    }
    Ok(())
}

/// Gradient of `tr(K̃_Z W)` with respect to `z`, for symmetric `w`.
fn trace_grad(z: &Matrix, cache: &NhsicCache, w: &Matrix, params: &KernelParams) -> Matrix {
    let m = cache.m;
    let c = params.epsilon * m as f64;
    let r = &cache.resolvent;
    let g = r.dot(w).dot(r).scale(c);
    let gk = center_unchecked(&g);
    let k = &cache.gram;
    let mut s = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            s[(i, j)] = (gk[(i, j)] + gk[(j, i)]) * k[(i, j)];
        }
    }
    let inv_s = 1.0 / params.bandwidth_sq(z.cols());
    let d = z.cols();
    let mut grad = Matrix::zeros(m, d);
    for i in 0..m {
        let zi = z.row(i);
        let mut acc = vec![0.0; d];
        for j in 0..m {
            let sij = s[(i, j)];
            if sij == 0.0 || i == j {
                continue;
            }
            for ((a, &x), &y) in acc.iter_mut().zip(zi).zip(z.row(j)) {
                *a += sij * (x - y);
            }
        }
        for (g, a) in grad.row_mut(i).iter_mut().zip(acc) {
            *g = -inv_s * a;
        }
    }
    grad
}

/// Gradient of `nhsic(zx, zy)` with respect to the entries of `zx`, holding
/// `zy` fixed. `cache_x` must come from `zx`.
pub fn nhsic_grad_z(
    zx: &Matrix,
    cache_x: &NhsicCache,
    cache_y: &NhsicCache,
    params: &KernelParams,
) -> Result<Matrix> {
    check_cache(zx, cache_x, "nhsic_grad_z")?;
    if cache_y.m != cache_x.m {
        return Err(Error::dim("nhsic_grad_z", format!("{} samples", cache_x.m), cache_y.m));
    }
    Ok(trace_grad(zx, cache_x, &cache_y.normalized, params))
}

/// Value and gradient of the per-layer bottleneck objective.
#[derive(Debug, Clone)]
pub struct BottleneckEval {
    /// `nhsic_zx - beta * nhsic_zy`
    pub objective: f64,
    pub nhsic_zx: f64,
    pub nhsic_zy: f64,
    /// d objective / d z
    pub grad: Matrix,
}

/// Evaluates `nHSIC(Z, X) - β·nHSIC(Z, Y)` and its gradient in `z`, given
/// caches for the input and label batches.
pub fn bottleneck(
    z: &Matrix,
    cache_x: &NhsicCache,
    cache_y: &NhsicCache,
    beta: f64,
    params: &KernelParams,
) -> Result<BottleneckEval> {
    let cache_z = NhsicCache::new(z, params)?;
    let nhsic_zx = nhsic_from_caches(&cache_z, cache_x)?;
    let nhsic_zy = nhsic_from_caches(&cache_z, cache_y)?;
    let objective = nhsic_zx - beta * nhsic_zy;
    if !objective.is_finite() {
        return Err(Error::NonFinite {
            context: format!(
                "bottleneck objective (sigma={}, beta={beta}, nhsic_zx={nhsic_zx}, nhsic_zy={nhsic_zy})",
                params.sigma
            ),
        });
    }
    let mut w = cache_x.normalized.clone();
    w.axpy(-beta, &cache_y.normalized);
    let grad = trace_grad(z, &cache_z, &w, params);
    Ok(BottleneckEval {
        objective,
        nhsic_zx,
        nhsic_zy,
        grad,
    })
}

/// Three routes to the self-dependence `HSIC(Z, Z)`, all scaled by
/// `(m-1)⁻²` and computed from `K̄ = HKH`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfHsic {
    /// `tr(K̄ K̄)`
    pub trace_form: f64,
    /// `‖K̄‖²_F`
    pub frobenius_form: f64,
    /// `Σ λₖ(K̄)²`
    pub eig_sum_sq: f64,
}

pub fn self_hsic_diagnostics(z: &Matrix, params: &KernelParams) -> Result<SelfHsic> {
    let m = z.rows();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "self_hsic_diagnostics needs at least 2 samples, got {m}"
        )));
    }
    let k = gaussian_gram(z, params)?;
    let kc = center(&k)?.symmetrized();
    let norm = 1.0 / ((m - 1) as f64).powi(2);
    let trace_form = kc.dot(&kc).trace() * norm;
    let frobenius_form = kc.frobenius_sq() * norm;
    let eig_sum_sq = eigvals_sym(&kc)?.iter().map(|l| l * l).sum::<f64>() * norm;
    Ok(SelfHsic {
        trace_form,
        frobenius_form,
        eig_sum_sq,
    })
}
