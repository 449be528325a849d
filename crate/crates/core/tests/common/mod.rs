//! Independent reference implementations used as test oracles. Nothing in
//! this file calls into the library's numerics; `checks` compares the two.
#![allow(dead_code)]

pub mod checks;

use hsic_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn to_vecs(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
}

/// `exp(-‖x - y‖² / (2σ²d))` from explicit differences.
pub fn gram(z: &Matrix, sigma: f64) -> Vec<Vec<f64>> {
    let rows = to_vecs(z);
    let s = 2.0 * sigma * sigma * z.cols() as f64;
    rows.iter()
        .map(|a| {
            rows.iter()
                .map(|b| {
                    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                    (-d2 / s).exp()
                })
                .collect()
        })
        .collect()
}

pub fn centering(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 } - 1.0 / m as f64).collect())
        .collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b[0].len();
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().enumerate().map(|(k, v)| v * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// `(m-1)⁻² Σ_{ijkl} Kx_ij H_jk Ky_kl H_li`, summed entry by entry with
/// compensation so the oracle's own rounding stays far below the library's.
pub fn hsic_elementwise(kx: &[Vec<f64>], ky: &[Vec<f64>]) -> f64 {
    let m = kx.len();
    let h = centering(m);
    let mut total = Neumaier::default();
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                let a = kx[i][j] * h[j][k];
                for l in 0..m {
                    total.add(a * ky[k][l] * h[l][i]);
                }
            }
        }
    }
    total.value() / ((m - 1) as f64).powi(2)
}

/// Compensated running sum.
#[derive(Default)]
pub struct Neumaier {
    sum: f64,
    carry: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, p);
        let d = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        aug[r][c] -= f * aug[col][c];
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `K̄(K̄ + εmI)⁻¹` with `K̄ = HKH`, all by explicit products.
pub fn normalized_gram(z: &Matrix, sigma: f64, eps: f64) -> Vec<Vec<f64>> {
    let m = z.rows();
    let h = centering(m);
    let kc = matmul(&matmul(&h, &gram(z, sigma)), &h);
    let mut reg = kc.clone();
    for (i, row) in reg.iter_mut().enumerate() {
        row[i] += eps * m as f64;
    }
    matmul(&kc, &inverse(&reg))
}

pub fn nhsic(zx: &Matrix, zy: &Matrix, sigma: f64, eps: f64) -> f64 {
    let a = normalized_gram(zx, sigma, eps);
    let b = normalized_gram(zy, sigma, eps);
    let p = matmul(&a, &b);
    (0..p.len()).map(|i| p[i][i]).sum()
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are
/// below `floor`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < floor {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Maximum-mass class-to-output assignment by exhaustive search; the first
/// maximizer in lexicographic order wins ties.
pub fn best_assignment(means: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for p in all_permutations(means.len()) {
        let mass: f64 = p.iter().enumerate().map(|(c, &o)| means[c][o]).sum();
        if mass > best.1 {
            best = (p, mass);
        }
    }
    best
}
