//! Proximal operators of the ℓ1 and nuclear norms.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::svd::{self, SvdFactors};

#[inline]
pub fn shrink(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::invalid(format!(
            "threshold must be a finite non-negative number, got {tau}"
        )));
    }
    Ok(())
}

/// Entrywise soft thresholding `sign(x)·max(|x| − τ, 0)`.
pub fn soft_threshold(x: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    check_tau(tau)?;
    Ok(x.map(|v| shrink(v, tau)))
}

/// Singular value thresholding `U 𝒮_τ[Σ] Vᵀ`.
///
/// Returns the thresholded matrix and the number of singular values strictly
/// above `tau`.
pub fn svt(x: &DenseMatrix, tau: f64) -> Result<(DenseMatrix, usize)> {
    check_tau(tau)?;
    let f = svd::svd_full(x)?;
    let (out, rank, _) = threshold_factors(&f, tau);
    Ok((out, rank))
}

/// Applies `𝒮_τ` to precomputed factors. Also returns the thresholded spectrum.
pub fn threshold_factors(f: &SvdFactors, tau: f64) -> (DenseMatrix, usize, Vec<f64>) {
    let shrunk: Vec<f64> = f.sigma.iter().map(|&s| (s - tau).max(0.0)).collect();
    let rank = f.sigma.iter().filter(|&&s| s > tau).count();
    (f.reconstruct_with(&shrunk), rank, shrunk)
}

/// SVT that only computes as many singular triplets as it needs.
///
/// Starts from `predicted` triplets and grows by 5 until the smallest
/// computed singular value drops to `tau` or below, so the result is the
/// exact thresholding unless `cap` triplets are reached first. Once the
/// request exceeds an eighth of `min(m, n)` a single dense SVD is cheaper
/// than further Lanczos restarts and is used instead.
/// Returns `(matrix, rank, thresholded spectrum)`.
pub fn svt_predicted(
    x: &DenseMatrix,
    tau: f64,
    predicted: usize,
    cap: usize,
) -> Result<(DenseMatrix, usize, Vec<f64>)> {
    check_tau(tau)?;
    let kmax = x.rows().min(x.cols()).min(cap.max(1));
    let full = x.rows().min(x.cols());
    let mut k = predicted.clamp(1, kmax);
    loop {
        if full > svd::DENSE_LIMIT && 8 * k > full {
            let mut f = svd::svd_full(x)?;
            f.truncate(kmax);
            return Ok(threshold_factors(&f, tau));
        }
        let f = svd::svd_truncated(x, k)?;
        let smallest = *f.sigma.last().expect("k >= 1");
        if smallest <= tau || k == kmax {
            let (out, rank, shrunk) = threshold_factors(&f, tau);
            return Ok((out, rank, shrunk));
        }
        k = (k + 5).min(kmax);
    }
}
