#![allow(dead_code)]

use mlrpca_core::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform on `[-1, 1]`.
pub fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0))
}

pub fn rel_err(a: &DenseMatrix, truth: &DenseMatrix) -> f64 {
    a.sub(truth).frobenius_norm() / truth.frobenius_norm()
}

/// Singular values by one-sided Jacobi rotations, independent of the
/// crate's SVD. Meant for small matrices.
#[allow(clippy::needless_range_loop)]
pub fn oracle_sigma(x: &DenseMatrix) -> Vec<f64> {
    let a = if x.rows() >= x.cols() { x.clone() } else { x.transpose() };
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.col(j).to_vec()).collect();
    for _ in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a * b).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (xp, xq) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * xp - s * xq;
                    cols[q][i] = s * xp + c * xq;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut s: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn oracle_nuclear(x: &DenseMatrix) -> f64 {
    oracle_sigma(x).iter().sum()
}

pub fn oracle_rank(x: &DenseMatrix) -> usize {
    let s = oracle_sigma(x);
    let tol = s.first().copied().unwrap_or(0.0) * f64::EPSILON * x.rows().max(x.cols()) as f64;
    s.iter().filter(|&&v| v > tol).count()
}

/// Plain triple-loop product.
pub fn naive_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
    })
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.sub(b).max_abs()
}

/// Minimizer of `τ|z| + ½(z − x)²` by ternary search.
pub fn scalar_prox_oracle(x: f64, tau: f64) -> f64 {
    let f = |z: f64| tau * z.abs() + 0.5 * (z - x) * (z - x);
    let (mut lo, mut hi) = (-x.abs() - 1.0, x.abs() + 1.0);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) <= f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// `τ‖Z‖_* + ½‖Z − X‖_F²` with an independent SVD.
pub fn svt_objective(z: &DenseMatrix, x: &DenseMatrix, tau: f64) -> f64 {
    tau * oracle_nuclear(z) + 0.5 * z.sub(x).frobenius_norm_sq()
}

/// Thresholding through nalgebra's SVD.
pub fn oracle_svt(x: &DenseMatrix, tau: f64) -> DenseMatrix {
    let m = nalgebra::DMatrix::from_column_slice(x.rows(), x.cols(), x.as_slice());
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut out = nalgebra::DMatrix::zeros(x.rows(), x.cols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let w = (s - tau).max(0.0);
        if w > 0.0 {
            out += u.column(k) * vt.row(k) * w;
        }
    }
    DenseMatrix::from_col_major(x.rows(), x.cols(), out.as_slice().to_vec()).unwrap()
}

/// Derivative-free descent on the SVT objective started at `z`: pattern
/// search over coordinate and random directions with shrinking steps.
/// Returns how much it managed to lower the objective.
pub fn svt_refinement_gain(x: &DenseMatrix, tau: f64, z: &DenseMatrix, rng: &mut impl Rng) -> f64 {
    let start = svt_objective(z, x, tau);
    let mut best = z.clone();
    let mut best_val = start;
    let mut step = 0.1;
    while step > 1e-7 {
        let mut improved = false;
        let mut dirs: Vec<DenseMatrix> = (0..x.len())
            .map(|k| DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| if i + j * x.rows() == k { 1.0 } else { 0.0 }))
            .collect();
        for _ in 0..8 {
            let r = uniform(rng, x.rows(), x.cols());
            let n = r.frobenius_norm();
            dirs.push(r.scale(1.0 / n));
        }
        for dir in &dirs {
            for sign in [1.0, -1.0] {
                let mut cand = best.clone();
                cand.axpy(sign * step, dir);
                let v = svt_objective(&cand, x, tau);
                if v < best_val {
                    best_val = v;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.1;
        }
    }
    start - best_val
}
