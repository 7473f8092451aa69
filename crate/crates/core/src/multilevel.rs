//! Interpolation restriction operators and multilevel chains.
//!
//! A level factor maps `k` fine columns to `⌈k/2⌉` coarse columns. Its rows
//! are the linear-interpolation stencil: every coarse column injects with
//! weight 1 into its aligned fine rows and with weight ½ into the fine row it
//! shares with its neighbour, so each row sums to 1 and the constant vector
//! is preserved. For odd `k` the last coarse column injects with weight 1
//! into the final fine row only.
//!
//! A [`RestrictionChain`] composes factors `R = R_n · R_{⌈n/2⌉} ⋯` down to
//! `n_coarse` columns. It keeps the raw row-stochastic composite and,
//! when normalized, the scale `1/σ₁(R)` so that `‖R‖₂ = 1`.
//! Restriction of a matrix `X` (`m × n`) is `X·R`; prolongation of `X_H`
//! (`m × n_coarse`) is `X_H·Rᵀ`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::svd;

/// Sparse `n_fine × n_coarse` operator stored by fine row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    n_fine: usize,
    n_coarse: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseOperator {
    pub fn identity(n: usize) -> Self {
        SparseOperator {
            n_fine: n,
            n_coarse: n,
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    /// Nonzeros of fine row `i` as `(coarse column, weight)`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(_, w)| w).sum()).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_fine, self.n_coarse);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                d[(i, j)] += w;
            }
        }
        d
    }

    /// `self · other` where `other` maps our coarse space further down.
    pub fn compose(&self, other: &SparseOperator) -> SparseOperator {
        assert_eq!(self.n_coarse, other.n_fine);
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for &(k, w) in row {
                    for &(j, v) in &other.rows[k] {
                        *acc.entry(j).or_insert(0.0) += w * v;
                    }
                }
                acc.into_iter().filter(|&(_, w)| w != 0.0).collect()
            })
            .collect();
        SparseOperator {
            n_fine: self.n_fine,
            n_coarse: other.n_coarse,
            rows,
        }
    }

    /// `scale · X · R`.
    fn right_apply(&self, x: &DenseMatrix, scale: f64) -> DenseMatrix {
        let m = x.rows();
        let mut out = DenseMatrix::zeros(m, self.n_coarse);
        for (i, row) in self.rows.iter().enumerate() {
            let xi = x.col(i);
            for &(j, w) in row {
                let s = scale * w;
                for (o, &v) in out.col_mut(j).iter_mut().zip(xi) {
                    *o += s * v;
                }
            }
        }
        out
    }

    /// `scale · X_H · Rᵀ`.
    fn right_apply_transpose(&self, x_h: &DenseMatrix, scale: f64) -> DenseMatrix {
        let m = x_h.rows();
        let mut out = DenseMatrix::zeros(m, self.n_fine);
        for (i, row) in self.rows.iter().enumerate() {
            let oi = out.col_mut(i);
            for &(j, w) in row {
                let s = scale * w;
                for (o, &v) in oi.iter_mut().zip(x_h.col(j)) {
                    *o += s * v;
                }
            }
        }
        out
    }

    /// `scale · R v` for a coarse vector.
    fn apply_vec(&self, v: &[f64], scale: f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| scale * row.iter().map(|&(j, w)| w * v[j]).sum::<f64>())
            .collect()
    }

    /// Dense Gram matrix `RᵀR`.
    fn gram(&self) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.n_coarse, self.n_coarse);
        for row in &self.rows {
            for &(a, wa) in row {
                for &(b, wb) in row {
                    g[(a, b)] += wa * wb;
                }
            }
        }
        g
    }
}

/// Single interpolation factor for `n` fine columns (`n × ⌈n/2⌉`).
pub fn build_interpolation(n: usize) -> Result<SparseOperator> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "interpolation needs at least 2 fine columns, got {n}"
        )));
    }
    let nc = n.div_ceil(2);
    let rows = (0..n)
        .map(|i| {
            if i < 2 {
                vec![(0, 1.0)]
            } else if i % 2 == 1 {
                vec![(i / 2, 1.0)]
            } else if n % 2 == 1 && i == n - 1 {
                vec![(nc - 1, 1.0)]
            } else {
                vec![(i / 2 - 1, 0.5), (i / 2, 0.5)]
            }
        })
        .collect();
    Ok(SparseOperator {
        n_fine: n,
        n_coarse: nc,
        rows,
    })
}

/// Column counts reachable from `n` by repeated halving, `n` first.
pub fn halving_sequence(n: usize) -> Vec<usize> {
    let mut seq = vec![n];
    let mut k = n;
    while k > 1 {
        k = k.div_ceil(2);
        seq.push(k);
    }
    seq
}

#[derive(Debug, Clone)]
pub struct RestrictionChain {
    levels: Vec<SparseOperator>,
    composite: SparseOperator,
    spectral_norm: f64,
    normalized: bool,
}

impl RestrictionChain {
    /// Composes interpolation factors from `n` columns down to `n_coarse`.
    pub fn build(n: usize, n_coarse: usize, normalize: bool) -> Result<Self> {
        if n == 0 || n_coarse == 0 {
            return Err(Error::invalid(format!(
                "chain sizes must be positive (n = {n}, target = {n_coarse})"
            )));
        }
        let seq = halving_sequence(n);
        if !seq.contains(&n_coarse) {
            let above = seq.iter().copied().filter(|&k| k > n_coarse).min();
            let below = seq.iter().copied().filter(|&k| k < n_coarse).max();
            let near: Vec<String> = [above, below].iter().flatten().map(|k| k.to_string()).collect();
            return Err(Error::invalid(format!(
                "coarse size {n_coarse} is not reachable by halving {n}; closest reachable: {}",
                near.join(", ")
            )));
        }
        let mut levels = Vec::new();
        let mut k = n;
        while k > n_coarse {
            let f = build_interpolation(k)?;
            k = f.n_coarse();
            levels.push(f);
        }
        let composite = levels.iter().fold(SparseOperator::identity(n), |acc, f| acc.compose(f));
        let spectral_norm = if levels.is_empty() {
            1.0
        } else {
            spectral_norm(&composite)
        };
        Ok(RestrictionChain {
            levels,
            composite,
            spectral_norm,
            normalized: normalize,
        })
    }

    /// Chain that leaves matrices unchanged (`n_coarse = n`).
    pub fn identity(n: usize) -> Result<Self> {
        Self::build(n, n, true)
    }

    pub fn n_fine(&self) -> usize {
        self.composite.n_fine()
    }

    pub fn n_coarse(&self) -> usize {
        self.composite.n_coarse()
    }

    pub fn levels(&self) -> &[SparseOperator] {
        &self.levels
    }

    /// The raw row-stochastic composite, before normalization.
    pub fn raw_composite(&self) -> &SparseOperator {
        &self.composite
    }

    /// σ₁ of the raw composite.
    pub fn spectral_norm(&self) -> f64 {
        self.spectral_norm
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Factor applied on top of the raw composite.
    pub fn scale(&self) -> f64 {
        if self.normalized {
            1.0 / self.spectral_norm
        } else {
            1.0
        }
    }

    /// Same levels, without normalization.
    pub fn unnormalized(&self) -> RestrictionChain {
        RestrictionChain {
            normalized: false,
            ..self.clone()
        }
    }

    /// The operator actually applied, as a dense `n × n_coarse` matrix.
    pub fn dense(&self) -> DenseMatrix {
        self.composite.to_dense().scale(self.scale())
    }

    /// `RᵀR` of the applied operator.
    pub fn gram(&self) -> DenseMatrix {
        let s = self.scale();
        self.composite.gram().scale(s * s)
    }

    /// Singular values of the applied operator, non-increasing.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        svd::singular_values(&self.dense())
    }

    /// `X · R`.
    pub fn restrict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.n_fine() {
            return Err(Error::invalid(format!(
                "restrict: matrix has {} columns, chain expects {}",
                x.cols(),
                self.n_fine()
            )));
        }
        Ok(self.composite.right_apply(x, self.scale()))
    }

    /// `X_H · Rᵀ`.
    pub fn prolong(&self, x_h: &DenseMatrix) -> Result<DenseMatrix> {
        if x_h.cols() != self.n_coarse() {
            return Err(Error::invalid(format!(
                "prolong: matrix has {} columns, chain expects {}",
                x_h.cols(),
                self.n_coarse()
            )));
        }
        Ok(self.composite.right_apply_transpose(x_h, self.scale()))
    }

    /// `R v` for a coarse vector `v` of length `n_coarse`.
    pub fn prolong_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_coarse());
        self.composite.apply_vec(v, self.scale())
    }

    /// `(RᵀR)^{-1/2}`. The operator `R·(RᵀR)^{-1/2}` has the range of `R`
    /// and orthonormal columns.
    pub fn orthonormalizer(&self) -> Result<DenseMatrix> {
        let g = self.gram();
        let nc = g.rows();
        let eig = DMatrix::from_column_slice(nc, nc, g.as_slice()).symmetric_eigen();
        let top = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
        if eig
            .eigenvalues
            .iter()
            .any(|&e| e.is_nan() || e <= top * f64::EPSILON * nc as f64)
        {
            return Err(Error::ConstraintViolation(
                "restriction operator is not full column rank".into(),
            ));
        }
        let q = &eig.eigenvectors;
        let w = DenseMatrix::from_fn(nc, nc, |i, j| {
            (0..nc).map(|k| q[(i, k)] * q[(j, k)] / eig.eigenvalues[k].sqrt()).sum()
        });
        Ok(w)
    }

    /// Precomputes `(RᵀR)⁻¹` for [`LeftInverse::apply`].
    pub fn left_inverse(&self) -> Result<LeftInverse<'_>> {
        let g = self.gram();
        let nc = g.rows();
        let chol = DMatrix::from_column_slice(nc, nc, g.as_slice())
            .cholesky()
            .ok_or_else(|| Error::ConstraintViolation("restriction operator is not full column rank".into()))?;
        let inv = chol.inverse();
        let gram_inv = DenseMatrix::from_col_major(nc, nc, inv.as_slice().to_vec())?;
        Ok(LeftInverse { chain: self, gram_inv })
    }
}

/// Applies `X ↦ X · R(RᵀR)⁻¹ = X · (R†)ᵀ`, the coarse coordinates of `X`
/// when its rows lie in the range of `R`.
#[derive(Debug, Clone)]
pub struct LeftInverse<'a> {
    chain: &'a RestrictionChain,
    gram_inv: DenseMatrix,
}

impl LeftInverse<'_> {
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.chain.restrict(x)?.matmul(&self.gram_inv))
    }

    /// Dense `R† = (RᵀR)⁻¹Rᵀ` (`n_coarse × n`).
    /// `(RᵀR)⁻¹`.
    pub fn gram_inverse(&self) -> &DenseMatrix {
        &self.gram_inv
    }

    pub fn pseudo_inverse(&self) -> DenseMatrix {
        self.gram_inv.matmul_nt(&self.chain.dense())
    }
}

/// Power iteration on `RᵀR`, converged to 1e-12 relative.
fn spectral_norm(r: &SparseOperator) -> f64 {
    let g = r.gram();
    let nc = g.rows();
    let mut v = vec![1.0 / (nc as f64).sqrt(); nc];
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w = g.mul_vec(&v);
        let nw = crate::matrix::norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next: Vec<f64> = w.iter().map(|x| x / nw).collect();
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        let done = (nw - lambda).abs() <= 1e-15 * nw && change < 1e-12;
        lambda = nw;
        if done {
            break;
        }
    }
    lambda.sqrt()
}

/// Deepest coarse size reachable by halving `n` with
/// `n_H > max(rank_guess, r_needed)` and `n_H ≤ (m + 1)/2`.
pub fn select_levels(n: usize, rank_guess: usize, r_needed: usize, m: usize) -> Result<usize> {
    if rank_guess == 0 || m == 0 || n == 0 {
        return Err(Error::invalid(format!(
            "select_levels needs n, rank_guess and m ≥ 1 (n = {n}, rank_guess = {rank_guess}, m = {m})"
        )));
    }
    let bound = rank_guess.max(r_needed);
    let seq = halving_sequence(n);
    let above: Vec<usize> = seq.iter().copied().filter(|&k| k > bound).collect();
    if above.is_empty() {
        return Err(Error::ConstraintViolation(format!(
            "Assumption 2: no coarse level with n_H > max(rank, r) = {bound} is reachable from n = {n}"
        )));
    }
    above.iter().copied().filter(|&k| 2 * k <= m + 1).min().ok_or_else(|| {
        Error::ConstraintViolation(format!(
            "Assumption 2: every level with n_H > {bound} violates n_H ≤ (m+1)/2 = {}",
            (m + 1) as f64 / 2.0
        ))
    })
}

/// Checks an explicitly requested coarse size against Assumption 2
/// (`rank_guess ≤ n_H ≤ (m+1)/2`) and reachability.
pub fn validate_explicit_level(n: usize, n_coarse: usize, rank_guess: usize, m: usize) -> Result<()> {
    if n_coarse == 0 || n_coarse < rank_guess {
        return Err(Error::ConstraintViolation(format!(
            "Assumption 2: rank(L*) ≤ n_H ≤ (m+1)/2 fails for n_H = {n_coarse} with rank guess {rank_guess}"
        )));
    }
    if 2 * n_coarse > m + 1 && n_coarse != n {
        return Err(Error::ConstraintViolation(format!(
            "Assumption 2: n_H = {n_coarse} exceeds (m+1)/2 = {}",
            (m + 1) as f64 / 2.0
        )));
    }
    if !halving_sequence(n).contains(&n_coarse) {
        return Err(Error::invalid(format!(
            "coarse size {n_coarse} is not reachable by halving {n}"
        )));
    }
    Ok(())
}

/// `ε = Σ_{k ≤ rank(L_H)} σ_k(L_H)(1 − σ_{n_H−k+1}(R))`, the slack in
/// `‖L_H Rᵀ‖_* ≥ ‖L_H‖_* − ε`. Clamped at zero.
pub fn epsilon_bound(l_h: &DenseMatrix, chain: &RestrictionChain) -> Result<f64> {
    if l_h.cols() != chain.n_coarse() {
        return Err(Error::invalid(format!(
            "epsilon_bound: L_H has {} columns, chain has {}",
            l_h.cols(),
            chain.n_coarse()
        )));
    }
    epsilon_from_spectra(l_h, &chain.singular_values()?)
}

/// [`epsilon_bound`] for an operator given by its singular values
/// (non-increasing, one per coarse column).
pub fn epsilon_from_spectra(l_h: &DenseMatrix, sr: &[f64]) -> Result<f64> {
    if l_h.cols() != sr.len() {
        return Err(Error::invalid(format!(
            "epsilon: L_H has {} columns, operator has {}",
            l_h.cols(),
            sr.len()
        )));
    }
    let sl = svd::singular_values(l_h)?;
    let nh = sr.len();
    let tol = sl.first().copied().unwrap_or(0.0) * f64::EPSILON * l_h.rows().max(nh) as f64;
    let eps: f64 = sl
        .iter()
        .take_while(|&&s| s > tol)
        .enumerate()
        .map(|(k, &s)| s * (1.0 - sr[nh - 1 - k]))
        .sum();
    Ok(eps.max(0.0))
}

/// Monitors of the multilevel approximation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MultilevelDiagnostics {
    pub epsilon: f64,
    pub delta_history: Vec<f64>,
    pub delta_max: f64,
}

impl MultilevelDiagnostics {
    pub fn new(epsilon: f64, delta_history: Vec<f64>) -> Self {
        let delta_max = delta_history.iter().fold(0.0f64, |m, &d| m.max(d));
        MultilevelDiagnostics {
            epsilon,
            delta_history,
            delta_max,
        }
    }
}
