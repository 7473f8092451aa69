//! Singular value decompositions.
//!
//! Small problems (`min(m, n) <= DENSE_LIMIT`) go through a dense
//! Golub–Kahan bidiagonalization with implicit QR sweeps (nalgebra). Larger
//! truncated problems use a Golub–Kahan–Lanczos bidiagonalization with full
//! reorthogonalization. Leading-triplet requests on thin matrices
//! (`min(m, n) <= GRAM_LIMIT`) diagonalize the small Gram matrix instead.
//!
//! Singular vectors are sign-normalized: the largest-magnitude entry of each
//! left singular vector is positive (first occurrence wins on ties), and the
//! matching right vector is flipped with it.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, norm2, DenseMatrix};

/// Largest `min(m, n)` handled by the dense path of [`svd_truncated`].
pub const DENSE_LIMIT: usize = 256;

/// Largest `min(m, n)` for which [`leading_triplet`] uses the Gram matrix.
pub const GRAM_LIMIT: usize = 64;

const LANCZOS_TOL: f64 = 1e-13;
const START_SEED: u64 = 0x5eed_1a9c_2b0f_77e1;

/// Thin SVD factors `X ≈ U diag(σ) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `m × k`, orthonormal columns.
    pub u: DenseMatrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// `n × k`, orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(weights) Vᵀ`, using only columns whose weight is nonzero.
    pub fn reconstruct_with(&self, weights: &[f64]) -> DenseMatrix {
        assert_eq!(weights.len(), self.sigma.len());
        let mut out = DenseMatrix::zeros(self.u.rows(), self.v.rows());
        for (k, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                out.rank_one_update(w, self.u.col(k), self.v.col(k));
            }
        }
        out
    }

    /// Keeps the leading `r` triplets (no-op when `r >= rank`).
    pub fn truncate(&mut self, r: usize) {
        if r < self.sigma.len() {
            self.u = self.u.leading_columns(r);
            self.v = self.v.leading_columns(r);
            self.sigma.truncate(r);
        }
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(&self.sigma.clone())
    }
}

fn to_nalgebra(x: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(x.rows(), x.cols(), x.as_slice())
}

fn max_sweeps(rows: usize, cols: usize) -> usize {
    100 * rows.max(cols).max(10)
}

/// Full thin SVD with `k = min(m, n)`.
pub fn svd_full(x: &DenseMatrix) -> Result<SvdFactors> {
    let (m, n) = x.shape();
    let iterations = max_sweeps(m, n);
    let svd = nalgebra::linalg::SVD::try_new(to_nalgebra(x), true, true, f64::EPSILON, iterations).ok_or(
        Error::NumericalFailure {
            what: "dense SVD",
            iterations,
        },
    )?;
    let u = svd.u.as_ref().expect("requested U");
    let v = svd.v_t.as_ref().expect("requested Vᵀ").transpose();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let k = order.len();
    let mut uu = DenseMatrix::zeros(m, k);
    let mut vv = DenseMatrix::zeros(n, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        uu.col_mut(dst).copy_from_slice(u.column(src).as_slice());
        vv.col_mut(dst).copy_from_slice(v.column(src).as_slice());
        sigma.push(svd.singular_values[src].max(0.0));
    }
    let mut f = SvdFactors { u: uu, sigma, v: vv };
    fix_signs(&mut f);
    Ok(f)
}

/// Singular values only, non-increasing.
pub fn singular_values(x: &DenseMatrix) -> Result<Vec<f64>> {
    let (m, n) = x.shape();
    let iterations = max_sweeps(m, n);
    let svd = nalgebra::linalg::SVD::try_new(to_nalgebra(x), false, false, f64::EPSILON, iterations).ok_or(
        Error::NumericalFailure {
            what: "dense SVD",
            iterations,
        },
    )?;
    let mut s: Vec<f64> = svd.singular_values.iter().map(|v| v.max(0.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Leading `r` singular triplets.
pub fn svd_truncated(x: &DenseMatrix, r: usize) -> Result<SvdFactors> {
    let kmax = x.rows().min(x.cols());
    if r == 0 || r > kmax {
        return Err(Error::invalid(format!("truncated SVD rank {r} outside 1..={kmax}")));
    }
    if kmax <= DENSE_LIMIT {
        let full = svd_full(x)?;
        return Ok(truncate(full, r));
    }
    lanczos(x, r)
}

/// Leading singular triplet `(u₁, σ₁, v₁)`.
pub fn leading_triplet(x: &DenseMatrix) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    if x.rows().min(x.cols()) <= GRAM_LIMIT {
        return leading_from_gram(x);
    }
    let f = lanczos(x, 1)?;
    Ok((f.u.col(0).to_vec(), f.sigma[0], f.v.col(0).to_vec()))
}

/// Top eigenpair of `XᵀX` (or `XXᵀ` when wide): eigenvalues by symmetric QR,
/// the eigenvector by inverse iteration just above the top eigenvalue, then
/// the other singular vector by one product.
fn leading_from_gram(x: &DenseMatrix) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let (m, n) = x.shape();
    let tall = m >= n;
    let gram = to_nalgebra(&if tall { x.gram_tn() } else { x.transpose().gram_tn() });
    let k = gram.nrows();
    let top = gram.symmetric_eigenvalues().max().max(0.0);
    let sigma = top.sqrt();
    if sigma == 0.0 {
        let mut u = vec![0.0; m];
        let mut v = vec![0.0; n];
        u[0] = 1.0;
        v[0] = 1.0;
        return Ok((u, 0.0, v));
    }
    let shift = top * (1.0 + 1e-10) + f64::MIN_POSITIVE;
    let shifted = DMatrix::from_diagonal_element(k, k, shift) - &gram;
    let chol = shifted.cholesky().ok_or(Error::NumericalFailure {
        what: "inverse iteration",
        iterations: 0,
    })?;
    // start from the heaviest Gram column, which leans towards the top direction
    let start = (0..k)
        .max_by(|&a, &b| gram[(a, a)].total_cmp(&gram[(b, b)]))
        .expect("k >= 1");
    let mut w = gram.column(start).clone_owned();
    w[start] += top;
    for _ in 0..3 {
        w = chol.solve(&w);
        let nw = w.norm();
        w /= nw;
    }
    let small: Vec<f64> = w.iter().copied().collect();
    let (mut u, mut v) = if tall {
        let mut u = x.mul_vec(&small);
        let nu = norm2(&u);
        u.iter_mut().for_each(|e| *e /= nu);
        (u, small)
    } else {
        let mut v = x.tr_mul_vec(&small);
        let nv = norm2(&v);
        v.iter_mut().for_each(|e| *e /= nv);
        (small, v)
    };
    let mut best = 0;
    for (i, e) in u.iter().enumerate() {
        if e.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.iter_mut().for_each(|e| *e = -*e);
        v.iter_mut().for_each(|e| *e = -*e);
    }
    Ok((u, sigma, v))
}

fn truncate(f: SvdFactors, r: usize) -> SvdFactors {
    SvdFactors {
        u: f.u.leading_columns(r),
        sigma: f.sigma[..r].to_vec(),
        v: f.v.leading_columns(r),
    }
}

fn fix_signs(f: &mut SvdFactors) {
    for k in 0..f.sigma.len() {
        let col = f.u.col(k);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            f.u.col_mut(k).iter_mut().for_each(|v| *v = -*v);
            f.v.col_mut(k).iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Orthogonalizes `w` against `basis` (two classical Gram–Schmidt passes).
fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            axpy(-c, b, w);
        }
    }
}

/// Unit vector orthogonal to `basis`, drawn from the seeded stream.
fn fresh_direction(len: usize, basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        reorthogonalize(&mut w, basis);
        let nw = norm2(&w);
        if nw > 1e-8 {
            w.iter_mut().for_each(|v| *v /= nw);
            return w;
        }
    }
    // basis spans (numerically) everything; unreachable while basis.len() < len
    vec![0.0; len]
}

fn lanczos(a: &DenseMatrix, r: usize) -> Result<SvdFactors> {
    let (m, n) = a.shape();
    let kmax = m.min(n);
    assert!(r >= 1 && r <= kmax);
    let anorm = a.frobenius_norm();
    if anorm == 0.0 {
        return Ok(zero_factors(m, n, r));
    }
    let breakdown = f64::EPSILON * anorm * 16.0;
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);

    let mut ps: Vec<Vec<f64>> = Vec::new();
    let mut qs: Vec<Vec<f64>> = vec![fresh_direction(n, &[], &mut rng)];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut p = vec![0.0; m];
    let mut q = vec![0.0; n];
    // convergence checks cost a small dense SVD each, so space them out
    let mut next_check = kmax.min(2 * r + 8);

    loop {
        let j = alpha.len();
        // p_j = A q_j − β_{j−1} p_{j−1}
        a.mul_vec_into(&qs[j], &mut p);
        if j > 0 {
            axpy(-beta[j - 1], &ps[j - 1], &mut p);
        }
        reorthogonalize(&mut p, &ps);
        let mut aj = norm2(&p);
        if aj <= breakdown {
            aj = 0.0;
            p = fresh_direction(m, &ps, &mut rng);
        } else {
            p.iter_mut().for_each(|v| *v /= aj);
        }
        ps.push(p.clone());
        alpha.push(aj);

        // q_{j+1} = Aᵀ p_j − α_j q_j
        a.tr_mul_vec_into(&ps[j], &mut q);
        axpy(-aj, &qs[j], &mut q);
        reorthogonalize(&mut q, &qs);
        let mut bj = norm2(&q);
        let k = j + 1;
        if k == kmax {
            beta.push(bj);
            break;
        }
        if bj <= breakdown {
            bj = 0.0;
        }
        beta.push(bj);

        if k >= next_check {
            next_check = k + (k / 8).max(1);
            let (ub, sb, _) = bidiagonal_svd(&alpha, &beta[..k - 1])?;
            let scale = sb[0].max(breakdown);
            let converged = (0..r).all(|i| bj * ub[(k - 1, i)].abs() <= LANCZOS_TOL * scale);
            if converged {
                break;
            }
        }
        if bj == 0.0 {
            qs.push(fresh_direction(n, &qs, &mut rng));
        } else {
            q.iter_mut().for_each(|v| *v /= bj);
            qs.push(q.clone());
        }
    }

    let k = alpha.len();
    let (ub, sb, vb) = bidiagonal_svd(&alpha, &beta[..k - 1])?;
    let mut u = DenseMatrix::zeros(m, r);
    let mut v = DenseMatrix::zeros(n, r);
    for i in 0..r {
        let ucol = u.col_mut(i);
        for (t, pt) in ps.iter().enumerate() {
            axpy(ub[(t, i)], pt, ucol);
        }
        let vcol = v.col_mut(i);
        for (t, qt) in qs.iter().take(k).enumerate() {
            axpy(vb[(t, i)], qt, vcol);
        }
    }
    let mut f = SvdFactors {
        u,
        sigma: sb[..r].to_vec(),
        v,
    };
    fix_signs(&mut f);
    Ok(f)
}

/// SVD of the upper bidiagonal matrix with the given diagonal and superdiagonal.
fn bidiagonal_svd(diag: &[f64], superdiag: &[f64]) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let k = diag.len();
    let b = DenseMatrix::from_fn(k, k, |i, j| {
        if i == j {
            diag[i]
        } else if j == i + 1 {
            superdiag[i]
        } else {
            0.0
        }
    });
    let f = svd_full(&b)?;
    Ok((f.u, f.sigma, f.v))
}

fn zero_factors(m: usize, n: usize, r: usize) -> SvdFactors {
    SvdFactors {
        u: DenseMatrix::from_fn(m, r, |i, j| if i == j { 1.0 } else { 0.0 }),
        sigma: vec![0.0; r],
        v: DenseMatrix::from_fn(n, r, |i, j| if i == j { 1.0 } else { 0.0 }),
    }
}
