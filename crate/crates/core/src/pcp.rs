//! Principal component pursuit: `min ‖L‖_* + λ‖S‖₁  s.t.  D = L + S`.
//!
//! [`ialm_solve`] is the inexact augmented Lagrangian method: each iteration
//! thresholds the singular values of `M = D − S + Y/μ` at `1/μ`, soft
//! thresholds `D − L + Y/μ` at `λ/μ`, takes a dual ascent step on `Y` and
//! grows `μ` geometrically.
//!
//! [`ml_ialm_solve`] replaces the `L` step with a coarse one: `M` is mapped to
//! an `m × n_H` matrix, thresholded there, and prolonged back with `Rᵀ`. Only
//! the coarse matrix is decomposed.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::multilevel::{self, MultilevelDiagnostics, RestrictionChain};
use crate::prox;
use crate::svd;
use crate::telemetry::{sparsity, IterationRecord, SolveStatus, Stopwatch};

/// How the multilevel `L` step maps `M` to the coarse space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoarseMap {
    /// Runs the coarse step with `P = R(RᵀR)^{-1/2}`: `M_H = M·P`,
    /// `L = L_H·Pᵀ`. `P` spans the same rows as `R` with orthonormal
    /// columns, so the step is the exact `L` minimizer over that subspace
    /// and `‖L‖_* = ‖L_H‖_*`.
    #[default]
    Orthonormal,
    /// `M_H = M · R(RᵀR)⁻¹`, `L = L_H Rᵀ`. Exact coarse coordinates for
    /// matrices whose rows lie in the range of `R`.
    LeftInverse,
    /// `M_H = M · R`. The fixed point then needs `L_H(RᵀR − I) = 0`, which
    /// the interpolation operator does not satisfy in general.
    Transpose,
}

impl CoarseMap {
    pub fn as_str(self) -> &'static str {
        match self {
            CoarseMap::Orthonormal => "orthonormal",
            CoarseMap::LeftInverse => "left-inverse",
            CoarseMap::Transpose => "transpose",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcpOptions {
    /// Sparsity weight; `None` resolves to `1/√max(m, n)`.
    pub lambda: Option<f64>,
    /// Initial penalty; `None` resolves to `1.25/σ₁(D)`.
    pub mu0: Option<f64>,
    pub rho: f64,
    pub tol_feasibility: f64,
    pub max_iters: usize,
    pub rank_guess: usize,
    /// Explicit coarse column count for the multilevel solver.
    pub levels: Option<usize>,
    /// Cap on computed singular triplets in the baseline solver.
    pub svd_budget: Option<usize>,
    pub collect_diagnostics: bool,
    pub time_budget: Option<Duration>,
    pub coarse_map: CoarseMap,
}

impl Default for PcpOptions {
    fn default() -> Self {
        PcpOptions {
            lambda: None,
            mu0: None,
            rho: 1.5,
            tol_feasibility: 1e-7,
            max_iters: 1000,
            rank_guess: 1,
            levels: None,
            svd_budget: None,
            collect_diagnostics: false,
            time_budget: None,
            coarse_map: CoarseMap::default(),
        }
    }
}

pub fn default_lambda(rows: usize, cols: usize) -> f64 {
    1.0 / (rows.max(cols) as f64).sqrt()
}

impl PcpOptions {
    pub fn resolved_lambda(&self, d: &DenseMatrix) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda(d.rows(), d.cols()))
    }

    fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::invalid(format!("lambda must be positive, got {l}")));
            }
        }
        if let Some(mu) = self.mu0 {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::invalid(format!("mu0 must be positive, got {mu}")));
            }
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return Err(Error::invalid(format!("rho must exceed 1, got {}", self.rho)));
        }
        if self.tol_feasibility.is_nan() || self.tol_feasibility <= 0.0 {
            return Err(Error::invalid(format!(
                "tol_feasibility must be positive, got {}",
                self.tol_feasibility
            )));
        }
        if self.rank_guess == 0 {
            return Err(Error::invalid("rank_guess must be at least 1"));
        }
        Ok(())
    }
}

/// Iterate and history of a PCP solve.
#[derive(Debug, Clone)]
pub struct PcpState {
    pub l: DenseMatrix,
    pub s: DenseMatrix,
    pub y: DenseMatrix,
    /// Penalty for the next iteration.
    pub mu: f64,
    pub lambda: f64,
    pub iter: usize,
    pub history: Vec<IterationRecord>,
    /// `μ_k` used at iteration `k`.
    pub mu_trace: Vec<f64>,
    pub status: SolveStatus,
    /// Coarse column count used by the multilevel solver.
    pub n_coarse: Option<usize>,
    pub diagnostics: Option<MultilevelDiagnostics>,
}

/// `‖D − L − S‖_F / ‖D‖_F`.
pub fn feasibility_gap(d: &DenseMatrix, l: &DenseMatrix, s: &DenseMatrix) -> Result<f64> {
    d.check_same_shape(l, "feasibility_gap")?;
    d.check_same_shape(s, "feasibility_gap")?;
    let dn = d.frobenius_norm();
    if dn == 0.0 {
        return Err(Error::DivisionGuard("feasibility gap of a zero data matrix"));
    }
    let r: f64 = d
        .as_slice()
        .iter()
        .zip(l.as_slice())
        .zip(s.as_slice())
        .map(|((&d, &l), &s)| (d - l - s).powi(2))
        .sum();
    Ok(r.sqrt() / dn)
}

struct LStepOutput {
    l: DenseMatrix,
    rank: usize,
    nuclear: f64,
    l_coarse: Option<DenseMatrix>,
}

enum LStep<'a> {
    Full {
        predicted: usize,
        cap: usize,
    },
    Coarse {
        chain: &'a RestrictionChain,
        /// Applied after `·R` on the way down.
        down: Option<DenseMatrix>,
        /// Applied before `·Rᵀ` on the way up.
        up: Option<DenseMatrix>,
    },
}

impl LStep<'_> {
    fn apply(&mut self, m: &DenseMatrix, tau: f64) -> Result<LStepOutput> {
        match self {
            LStep::Full { predicted, cap } => {
                let (l, rank, shrunk) = prox::svt_predicted(m, tau, *predicted, *cap)?;
                *predicted = rank + 1;
                Ok(LStepOutput {
                    l,
                    rank,
                    nuclear: shrunk.iter().sum(),
                    l_coarse: None,
                })
            }
            LStep::Coarse { chain, down, up } => {
                let mut m_h = chain.restrict(m)?;
                if let Some(w) = down {
                    m_h = m_h.matmul(w);
                }
                let f = svd::svd_full(&m_h)?;
                let (l_h, rank, shrunk) = prox::threshold_factors(&f, tau);
                let up = up.as_ref();
                let lift = |x: &DenseMatrix| match up {
                    Some(w) => chain.prolong(&x.matmul(w)),
                    None => chain.prolong(x),
                };
                let l = lift(&l_h)?;
                // ‖L‖_* = ‖diag(s) V_Hᵀ · (lift)‖_* since U_H has orthonormal columns
                let nuclear = if rank == 0 {
                    0.0
                } else {
                    let w = DenseMatrix::from_fn(rank, f.v.rows(), |i, j| shrunk[i] * f.v[(j, i)]);
                    svd::singular_values(&lift(&w)?)?.iter().sum()
                };
                Ok(LStepOutput {
                    l,
                    rank,
                    nuclear,
                    l_coarse: Some(l_h),
                })
            }
        }
    }
}

/// Inexact ALM with truncated SVDs and rank prediction.
pub fn ialm_solve(d: &DenseMatrix, opts: &PcpOptions) -> Result<PcpState> {
    opts.validate()?;
    let kmax = d.rows().min(d.cols());
    let step = LStep::Full {
        predicted: (opts.rank_guess + 1).min(kmax),
        cap: opts.svd_budget.unwrap_or(kmax),
    };
    run(d, opts, step, None)
}

/// Coarse size the multilevel solver would use for `d` under `opts`.
pub fn coarse_size(d: &DenseMatrix, opts: &PcpOptions) -> Result<usize> {
    let (m, n) = d.shape();
    match opts.levels {
        Some(nc) => {
            multilevel::validate_explicit_level(n, nc, opts.rank_guess, m)?;
            Ok(nc)
        }
        None => multilevel::select_levels(n, opts.rank_guess, 1, m),
    }
}

/// Multilevel inexact ALM. The `L` step decomposes only `m × n_H` matrices.
pub fn ml_ialm_solve(d: &DenseMatrix, opts: &PcpOptions) -> Result<PcpState> {
    opts.validate()?;
    let nc = coarse_size(d, opts)?;
    let chain = RestrictionChain::build(d.cols(), nc, true)?;
    let (down, up) = coarse_factors(&chain, opts.coarse_map)?;
    let step = LStep::Coarse {
        chain: &chain,
        down,
        up,
    };
    let mut state = run(d, opts, step, Some(&chain))?;
    state.n_coarse = Some(nc);
    Ok(state)
}

type Factors = (Option<DenseMatrix>, Option<DenseMatrix>);

fn coarse_factors(chain: &RestrictionChain, map: CoarseMap) -> Result<Factors> {
    Ok(match map {
        CoarseMap::Orthonormal => {
            let w = chain.orthonormalizer()?;
            (Some(w.clone()), Some(w))
        }
        CoarseMap::LeftInverse => (Some(chain.left_inverse()?.gram_inverse().clone()), None),
        CoarseMap::Transpose => (None, None),
    })
}

fn run(d: &DenseMatrix, opts: &PcpOptions, mut step: LStep<'_>, chain: Option<&RestrictionChain>) -> Result<PcpState> {
    if !d.all_finite() {
        return Err(Error::invalid("data matrix has non-finite entries"));
    }
    let clock = Stopwatch::start();
    let (m, n) = d.shape();
    let lambda = opts.resolved_lambda(d);
    let dnorm = d.frobenius_norm();
    if dnorm == 0.0 {
        let zero = DenseMatrix::zeros(m, n);
        return Ok(PcpState {
            l: zero.clone(),
            s: zero.clone(),
            y: zero,
            mu: opts.mu0.unwrap_or(1.0),
            lambda,
            iter: 1,
            history: vec![IterationRecord {
                iter: 1,
                feasibility_gap: 0.0,
                objective: 0.0,
                rank_l: 0,
                sparsity_s: 0.0,
                wall_seconds: clock.seconds(),
            }],
            mu_trace: vec![opts.mu0.unwrap_or(1.0)],
            status: SolveStatus::Converged,
            n_coarse: chain.map(|c| c.n_coarse()),
            diagnostics: None,
        });
    }
    let mut mu = match opts.mu0 {
        Some(mu) => mu,
        None => 1.25 / svd::leading_triplet(d)?.1,
    };

    let mut l = DenseMatrix::zeros(m, n);
    let mut s = DenseMatrix::zeros(m, n);
    let mut y = DenseMatrix::zeros(m, n);
    let mut history = Vec::new();
    let mut mu_trace = Vec::new();
    let mut coarse_iterates = Vec::new();
    let mut status = SolveStatus::MaxIterations;

    for k in 1..=opts.max_iters {
        let inv_mu = 1.0 / mu;
        // M = D − S + Y/μ
        let mut mm = d.sub(&s);
        mm.axpy(inv_mu, &y);
        let out = step.apply(&mm, inv_mu)?;
        l = out.l;
        if opts.collect_diagnostics {
            if let Some(l_h) = out.l_coarse {
                coarse_iterates.push(l_h);
            }
        }

        // S = 𝒮_{λ/μ}[D − L + Y/μ], then Y += μ(D − L − S)
        let tau = lambda * inv_mu;
        let mut resid_sq = 0.0;
        let mut l1 = 0.0;
        let mut nnz = 0;
        {
            let (sd, yd) = (s.as_mut_slice(), y.as_mut_slice());
            for (idx, (&dv, &lv)) in d.as_slice().iter().zip(l.as_slice()).enumerate() {
                let z = dv - lv + inv_mu * yd[idx];
                let sv = prox::shrink(z, tau);
                sd[idx] = sv;
                let r = dv - lv - sv;
                yd[idx] += mu * r;
                resid_sq += r * r;
                l1 += sv.abs();
                nnz += (sv != 0.0) as usize;
            }
        }
        let gap = resid_sq.sqrt() / dnorm;
        history.push(IterationRecord {
            iter: k,
            feasibility_gap: gap,
            objective: out.nuclear + lambda * l1,
            rank_l: out.rank,
            sparsity_s: sparsity(nnz, m * n),
            wall_seconds: clock.seconds(),
        });
        mu_trace.push(mu);
        mu *= opts.rho;

        if gap <= opts.tol_feasibility {
            status = SolveStatus::Converged;
            break;
        }
        if let Some(budget) = opts.time_budget {
            if clock.seconds() >= budget.as_secs_f64() {
                status = SolveStatus::TimeBudget;
                break;
            }
        }
    }

    let diagnostics = match (chain, opts.collect_diagnostics) {
        (Some(chain), true) => Some(multilevel_diagnostics(chain, opts.coarse_map, &l, &coarse_iterates)?),
        _ => None,
    };
    Ok(PcpState {
        iter: history.len(),
        l,
        s,
        y,
        mu,
        lambda,
        history,
        mu_trace,
        status,
        n_coarse: chain.map(|c| c.n_coarse()),
        diagnostics,
    })
}

/// `Δ_k = ⟨L_H^k (PᵀP − I), L_H^k − L_H^ref⟩` where `P` is the operator the
/// coarse step prolongs with, and the coarse coordinates of the final `L`
/// stand in for the unknown coarse optimum.
fn multilevel_diagnostics(
    chain: &RestrictionChain,
    map: CoarseMap,
    l_final: &DenseMatrix,
    coarse_iterates: &[DenseMatrix],
) -> Result<MultilevelDiagnostics> {
    let (reference, p) = match map {
        CoarseMap::Orthonormal => {
            let w = chain.orthonormalizer()?;
            (chain.restrict(l_final)?.matmul(&w), chain.dense().matmul(&w))
        }
        CoarseMap::LeftInverse => (chain.left_inverse()?.apply(l_final)?, chain.dense()),
        CoarseMap::Transpose => (chain.restrict(l_final)?, chain.dense()),
    };
    let mut g = p.gram_tn();
    for i in 0..g.rows() {
        g[(i, i)] -= 1.0;
    }
    let deltas = coarse_iterates
        .iter()
        .map(|l_h| l_h.matmul(&g).dot(&l_h.sub(&reference)))
        .collect();
    let epsilon = match coarse_iterates.last() {
        Some(l_h) => multilevel::epsilon_from_spectra(l_h, &svd::singular_values(&p)?)?,
        None => 0.0,
    };
    Ok(MultilevelDiagnostics::new(epsilon, deltas))
}
