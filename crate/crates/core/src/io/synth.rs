//! Seeded synthetic low-rank plus sparse problems.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cpcp::ObservationMask;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::multilevel::RestrictionChain;

#[derive(Debug, Clone)]
pub struct SyntheticProblem {
    /// `P_Q[L + S]` (all of `L + S` when there is no mask).
    pub d: DenseMatrix,
    pub l_truth: DenseMatrix,
    pub s_truth: DenseMatrix,
    pub mask: Option<ObservationMask>,
    pub rank: usize,
    pub eta: f64,
    pub seed: u64,
    /// Set when `L` was built in the row space of a restriction chain.
    pub n_coarse: Option<usize>,
}

impl SyntheticProblem {
    /// The observation mask, full when none was drawn.
    pub fn observation_mask(&self) -> ObservationMask {
        self.mask
            .clone()
            .unwrap_or_else(|| ObservationMask::full(self.d.rows(), self.d.cols()))
    }
}

/// `L = Σ_k (1/k²) u_k v_kᵀ` plus `⌊eta·mn⌋` sparse entries uniform on
/// `[−1, 1]`, optionally observed on `round(observe_fraction·mn)` entries.
pub fn synth_rpca(
    m: usize,
    n: usize,
    rank: usize,
    eta: f64,
    seed: u64,
    observe_fraction: Option<f64>,
) -> Result<SyntheticProblem> {
    check_args(m, n, rank, eta, observe_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal(gaussian(&mut rng, m, rank));
    let v = orthonormal(gaussian(&mut rng, n, rank));
    finish(m, n, rank, eta, seed, observe_fraction, u, v, None, &mut rng)
}

/// Like [`synth_rpca`], but the right singular vectors lie in the range of
/// the normalized restriction chain from `n` down to `n_coarse` columns, so
/// `L = L_H Rᵀ` holds exactly for some `m × n_coarse` matrix `L_H`.
pub fn synth_rpca_coarse(
    m: usize,
    n: usize,
    n_coarse: usize,
    rank: usize,
    eta: f64,
    seed: u64,
    observe_fraction: Option<f64>,
) -> Result<SyntheticProblem> {
    check_args(m, n, rank, eta, observe_fraction)?;
    if rank > n_coarse {
        return Err(Error::invalid(format!("rank {rank} exceeds coarse size {n_coarse}")));
    }
    let chain = RestrictionChain::build(n, n_coarse, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal(gaussian(&mut rng, m, rank));
    let w = gaussian(&mut rng, n_coarse, rank);
    let r = chain.dense();
    let rw = DMatrix::from_column_slice(n, n_coarse, r.as_slice()) * w;
    let v = orthonormal(rw);
    finish(m, n, rank, eta, seed, observe_fraction, u, v, Some(n_coarse), &mut rng)
}

fn check_args(m: usize, n: usize, rank: usize, eta: f64, observe: Option<f64>) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid(format!("dimensions must be positive, got {m}x{n}")));
    }
    if rank > m.min(n) {
        return Err(Error::invalid(format!("rank {rank} exceeds min({m}, {n})")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("eta must lie in [0, 1], got {eta}")));
    }
    if let Some(f) = observe {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::invalid(format!("observe fraction must lie in (0, 1], got {f}")));
        }
    }
    Ok(())
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthonormal(x: DMatrix<f64>) -> DMatrix<f64> {
    if x.ncols() == 0 {
        return x;
    }
    x.qr().q()
}

#[allow(clippy::too_many_arguments)]
fn finish(
    m: usize,
    n: usize,
    rank: usize,
    eta: f64,
    seed: u64,
    observe_fraction: Option<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    n_coarse: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticProblem> {
    let mut l = DenseMatrix::zeros(m, n);
    for k in 0..rank {
        let weight = 1.0 / ((k + 1) * (k + 1)) as f64;
        let uk: Vec<f64> = u.column(k).iter().copied().collect();
        let vk: Vec<f64> = v.column(k).iter().copied().collect();
        l.rank_one_update(weight, &uk, &vk);
    }

    let total = m * n;
    let corrupted = (eta * total as f64).floor() as usize;
    let mut s = DenseMatrix::zeros(m, n);
    let mut positions = index::sample(rng, total, corrupted).into_vec();
    positions.sort_unstable();
    for p in positions {
        s.as_mut_slice()[p] = rng.gen_range(-1.0..=1.0);
    }

    let mask = match observe_fraction {
        None => None,
        Some(f) => {
            let keep = ((f * total as f64).round() as usize).min(total);
            let mut flags = vec![false; total];
            for p in index::sample(rng, total, keep) {
                flags[p] = true;
            }
            Some(ObservationMask::from_flags(m, n, flags)?)
        }
    };

    let mut d = l.add(&s);
    if let Some(mask) = &mask {
        mask.project_in_place(&mut d);
    }

    let gram = u.transpose() * &u;
    let gram_v = v.transpose() * &v;
    let ortho_err = (gram - DMatrix::identity(rank, rank))
        .amax()
        .max((gram_v - DMatrix::identity(rank, rank)).amax());
    if rank > 0 && ortho_err > 1e-10 {
        return Err(Error::Invariant(format!(
            "generated factors lost orthonormality ({ortho_err:e})"
        )));
    }
    if s.count_nonzero() > corrupted {
        return Err(Error::Invariant("sparse part exceeds its support budget".into()));
    }

    Ok(SyntheticProblem {
        d,
        l_truth: l,
        s_truth: s,
        mask,
        rank,
        eta,
        seed,
        n_coarse,
    })
}
