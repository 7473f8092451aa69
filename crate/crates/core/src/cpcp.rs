//! Compressive principal component pursuit by Frank-Wolfe thresholding.
//!
//! The penalized problem
//! `min ½‖P_Q[L + S − D]‖_F² + λ_L‖L‖_* + λ_S‖S‖₁`
//! is lifted to its epigraph form over `(L, S, t_L, t_S)` with
//! `‖L‖_* ≤ t_L ≤ U_L` and `‖S‖₁ ≤ t_S ≤ U_S`, a smooth objective over a
//! bounded set. Each iteration of FW-T:
//!
//! 1. evaluates `G = P_Q[L + S − D]` (the gradient in both `L` and `S`);
//! 2. solves the nuclear-ball and ℓ1-ball linear oracles;
//! 3. picks, per block, either the zero corner or the scaled oracle atom;
//! 4. minimizes the objective exactly over the product of the two segments;
//! 5. takes a proximal (soft-threshold) step on `S`;
//! 6. tightens `U_L, U_S` to `f/λ_L, f/λ_S`.
//!
//! ML-FWT differs only in step 2 for `L`: the gradient is restricted to
//! `G·R`, the oracle runs on that `m × n_H` matrix over a ball of radius
//! `1/σ₁(R)`, and the atom is prolonged back with `Rᵀ`.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, norm2, DenseMatrix};
use crate::multilevel::{self, RestrictionChain};
use crate::prox::shrink;
use crate::svd;
use crate::telemetry::{sparsity, IterationRecord, SolveStatus, Stopwatch};

/// Entrywise observation pattern `Q` and its projector `P_Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    rows: usize,
    cols: usize,
    /// Column-major, `None` when every entry is observed.
    observed: Option<Vec<bool>>,
    count: usize,
}

impl ObservationMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        ObservationMask {
            rows,
            cols,
            observed: None,
            count: rows * cols,
        }
    }

    /// Column-major observation flags.
    pub fn from_flags(rows: usize, cols: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "mask of length {} does not match {rows}x{cols}",
                flags.len()
            )));
        }
        let count = flags.iter().filter(|&&b| b).count();
        if count == rows * cols {
            return Ok(Self::full(rows, cols));
        }
        Ok(ObservationMask {
            rows,
            cols,
            observed: Some(flags),
            count,
        })
    }

    /// Nonzero entries of `m` are observed.
    pub fn from_matrix(m: &DenseMatrix) -> Self {
        let flags = m.as_slice().iter().map(|&v| v != 0.0).collect();
        Self::from_flags(m.rows(), m.cols(), flags).expect("shape is consistent")
    }

    /// Observes `round(fraction·rows·cols)` entries drawn uniformly without
    /// replacement from a ChaCha8 stream seeded with `seed`.
    pub fn sample(rows: usize, cols: usize, fraction: f64, seed: u64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "observe fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let total = rows * cols;
        let keep = ((fraction * total as f64).round() as usize).min(total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut flags = vec![false; total];
        for p in rand::seq::index::sample(&mut rng, total, keep) {
            flags[p] = true;
        }
        Self::from_flags(rows, cols, flags)
    }

    /// 0/1 indicator matrix.
    pub fn to_matrix(&self) -> DenseMatrix {
        let mut m = DenseMatrix::filled(self.rows, self.cols, 1.0);
        if let Some(flags) = &self.observed {
            for (v, &f) in m.as_mut_slice().iter_mut().zip(flags) {
                if !f {
                    *v = 0.0;
                }
            }
        }
        m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_full(&self) -> bool {
        self.observed.is_none()
    }

    pub fn observed_count(&self) -> usize {
        self.count
    }

    pub fn fraction(&self) -> f64 {
        self.count as f64 / (self.rows * self.cols) as f64
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed.as_ref().is_none_or(|f| f[i + j * self.rows])
    }

    fn check(&self, x: &DenseMatrix) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::invalid(format!(
                "mask is {}x{}, matrix is {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Zeroes unobserved entries in place.
    pub fn project_in_place(&self, x: &mut DenseMatrix) {
        if let Some(flags) = &self.observed {
            for (v, &f) in x.as_mut_slice().iter_mut().zip(flags) {
                if !f {
                    *v = 0.0;
                }
            }
        }
    }
}

/// `P_Q[X]`: unobserved entries set to zero.
pub fn project_mask(x: &DenseMatrix, mask: &ObservationMask) -> Result<DenseMatrix> {
    mask.check(x)?;
    let mut out = x.clone();
    mask.project_in_place(&mut out);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CpcpOptions {
    /// `None` resolves to `10⁻³·ρ·‖P_Q[D]‖_F` with `ρ` the observed fraction.
    pub lambda_l: Option<f64>,
    /// `None` resolves to `10⁻³·√ρ·‖P_Q[D]‖_F / √max(m, n)`.
    pub lambda_s: Option<f64>,
    /// Stop when the objective decreases by at most this fraction over 5 iterations.
    pub tol: f64,
    pub max_iters: usize,
    pub rank_guess: usize,
    /// Explicit coarse column count for ML-FWT.
    pub levels: Option<usize>,
    pub time_budget: Option<Duration>,
    /// Verify feasibility, monotone descent and oracle feasibility after
    /// every iteration; a violation aborts the solve with [`Error::Invariant`].
    /// Always on in builds with debug assertions.
    pub check_invariants: bool,
}

impl Default for CpcpOptions {
    fn default() -> Self {
        CpcpOptions {
            lambda_l: None,
            lambda_s: None,
            tol: 1e-3,
            max_iters: 1000,
            rank_guess: 1,
            levels: None,
            time_budget: None,
            check_invariants: false,
        }
    }
}

pub const STOP_WINDOW: usize = 5;
const DEFAULT_DELTA: f64 = 1e-3;

/// Default `(λ_L, λ_S)` for data `d` observed on `mask`.
pub fn default_lambdas(d: &DenseMatrix, mask: &ObservationMask) -> (f64, f64) {
    let pd = masked_norm_sq(d, mask).sqrt();
    let rho = mask.fraction();
    let big = d.rows().max(d.cols()) as f64;
    let lambda_l = DEFAULT_DELTA * rho * pd;
    let lambda_s = DEFAULT_DELTA * rho.sqrt() * pd / big.sqrt();
    (lambda_l, lambda_s)
}

fn masked_norm_sq(x: &DenseMatrix, mask: &ObservationMask) -> f64 {
    match &mask.observed {
        None => x.frobenius_norm_sq(),
        Some(flags) => x
            .as_slice()
            .iter()
            .zip(flags)
            .filter(|(_, &f)| f)
            .map(|(v, _)| v * v)
            .sum(),
    }
}

/// Iterate and history of a CPCP solve.
#[derive(Debug, Clone)]
pub struct CpcpState {
    pub l: DenseMatrix,
    pub s: DenseMatrix,
    pub t_l: f64,
    pub t_s: f64,
    pub u_l: f64,
    pub u_s: f64,
    pub iter: usize,
    pub history: Vec<IterationRecord>,
    pub lambda_l: f64,
    pub lambda_s: f64,
    pub status: SolveStatus,
    pub n_coarse: Option<usize>,
}

impl CpcpState {
    /// Origin point with the initial bounds.
    pub fn initial(d: &DenseMatrix, mask: &ObservationMask, lambda_l: f64, lambda_s: f64) -> Self {
        let b = initial_bounds(d, mask, lambda_l, lambda_s);
        CpcpState {
            l: DenseMatrix::zeros(d.rows(), d.cols()),
            s: DenseMatrix::zeros(d.rows(), d.cols()),
            t_l: 0.0,
            t_s: 0.0,
            u_l: b.u_l,
            u_s: b.u_s,
            iter: 0,
            history: Vec::new(),
            lambda_l,
            lambda_s,
            status: SolveStatus::MaxIterations,
            n_coarse: None,
        }
    }
}

/// `½‖P_Q[L + S − D]‖_F² + λ_L t_L + λ_S t_S`.
pub fn cpcp_objective(state: &CpcpState, d: &DenseMatrix, mask: &ObservationMask) -> Result<f64> {
    mask.check(d)?;
    d.check_same_shape(&state.l, "cpcp_objective")?;
    d.check_same_shape(&state.s, "cpcp_objective")?;
    Ok(objective_parts(&state.l, &state.s, d, mask) + state.lambda_l * state.t_l + state.lambda_s * state.t_s)
}

fn objective_parts(l: &DenseMatrix, s: &DenseMatrix, d: &DenseMatrix, mask: &ObservationMask) -> f64 {
    let mut acc = 0.0;
    for (idx, ((&lv, &sv), &dv)) in l.as_slice().iter().zip(s.as_slice()).zip(d.as_slice()).enumerate() {
        if mask.observed.as_ref().is_none_or(|f| f[idx]) {
            let r = lv + sv - dv;
            acc += r * r;
        }
    }
    0.5 * acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub u_l: f64,
    pub u_s: f64,
    /// `√5·√(U_L² + U_S²)`, an upper bound on the feasible-set diameter.
    pub diameter: f64,
}

/// `U_L = ‖P_Q[D]‖²/(2λ_L)`, `U_S = ‖P_Q[D]‖²/(2λ_S)`.
pub fn initial_bounds(d: &DenseMatrix, mask: &ObservationMask, lambda_l: f64, lambda_s: f64) -> Bounds {
    let pd2 = masked_norm_sq(d, mask);
    let u_l = pd2 / (2.0 * lambda_l);
    let u_s = pd2 / (2.0 * lambda_s);
    Bounds {
        u_l,
        u_s,
        diameter: 5f64.sqrt() * (u_l * u_l + u_s * u_s).sqrt(),
    }
}

/// Rank-one atom `weight · u vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneAtom {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub weight: f64,
}

impl RankOneAtom {
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.u.len(), self.v.len());
        m.rank_one_update(self.weight, &self.u, &self.v);
        m
    }

    /// Exact nuclear norm of a rank-one matrix.
    pub fn nuclear_norm(&self) -> f64 {
        self.weight.abs() * norm2(&self.u) * norm2(&self.v)
    }
}

/// Single-entry atom `weight · E_{row,col}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryAtom {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

fn nuclear_lmo_atom(g: &DenseMatrix, radius: f64) -> Result<(RankOneAtom, f64)> {
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::invalid(format!("radius must be non-negative, got {radius}")));
    }
    let (u, sigma, v) = svd::leading_triplet(g)?;
    Ok((RankOneAtom { u, v, weight: -radius }, -radius * sigma))
}

/// Minimizer of `⟨G, M⟩` over `‖M‖_* ≤ radius`: `−radius·u₁v₁ᵀ`, value `−radius·σ₁(G)`.
pub fn nuclear_lmo(g: &DenseMatrix, radius: f64) -> Result<(DenseMatrix, f64)> {
    let (atom, value) = nuclear_lmo_atom(g, radius)?;
    Ok((atom.to_dense(), value))
}

fn l1_lmo_atom(g: &DenseMatrix, radius: f64) -> Result<(EntryAtom, f64)> {
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::invalid(format!("radius must be non-negative, got {radius}")));
    }
    let data = g.as_slice();
    let mut best = 0;
    for (idx, v) in data.iter().enumerate() {
        if v.abs() > data[best].abs() {
            best = idx;
        }
    }
    let gmax = data[best];
    let weight = if gmax > 0.0 {
        -radius
    } else if gmax < 0.0 {
        radius
    } else {
        0.0
    };
    let atom = EntryAtom {
        row: best % g.rows(),
        col: best / g.rows(),
        weight,
    };
    Ok((atom, -radius * gmax.abs()))
}

/// Minimizer of `⟨G, M⟩` over `‖M‖₁ ≤ radius`: the largest-magnitude entry
/// (first in column-major order) gets `−radius·sign(g)`; `G = 0` gives zero.
pub fn l1_lmo(g: &DenseMatrix, radius: f64) -> Result<(DenseMatrix, f64)> {
    let (atom, value) = l1_lmo_atom(g, radius)?;
    let mut m = DenseMatrix::zeros(g.rows(), g.cols());
    m[(atom.row, atom.col)] = atom.weight;
    Ok((m, value))
}

/// Chooses between the zero corner and `u·M`: zero when `λ ≥ −⟨G, M⟩`.
/// Returns the scale applied to `M` (0 or `u`), which is also `V_t`.
pub fn corner_scale(grad_inner: f64, lambda: f64, u: f64) -> f64 {
    if lambda >= -grad_inner {
        0.0
    } else {
        u
    }
}

/// [`corner_scale`] applied to a dense oracle output.
pub fn corner_select(grad_inner: f64, lambda: f64, u: f64, m: &DenseMatrix) -> (DenseMatrix, f64) {
    let c = corner_scale(grad_inner, lambda, u);
    if c == 0.0 {
        (DenseMatrix::zeros(m.rows(), m.cols()), 0.0)
    } else {
        (m.scale(c), c)
    }
}

/// Coefficients of `q(γ_L, γ_S) = g_l γ_L + g_s γ_S + ½(a_ll γ_L² + 2 a_ls γ_L γ_S + a_ss γ_S²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentQuadratic {
    pub a_ll: f64,
    pub a_ls: f64,
    pub a_ss: f64,
    pub g_l: f64,
    pub g_s: f64,
}

impl SegmentQuadratic {
    pub fn eval(&self, gl: f64, gs: f64) -> f64 {
        self.g_l * gl + self.g_s * gs + 0.5 * (self.a_ll * gl * gl + 2.0 * self.a_ls * gl * gs + self.a_ss * gs * gs)
    }

    /// Exact minimizer over `[0, 1]²`.
    ///
    /// Solves the 2×2 stationarity system; if that point leaves the box,
    /// runs coordinate minimization (closed-form 1-D steps) to 1e-12 and
    /// keeps the best of that and the edge/corner candidates.
    pub fn minimize(&self) -> (f64, f64) {
        let det = self.a_ll * self.a_ss - self.a_ls * self.a_ls;
        if det > 1e-14 * (self.a_ll * self.a_ss).max(f64::MIN_POSITIVE) {
            let gl = (-self.g_l * self.a_ss + self.g_s * self.a_ls) / det;
            let gs = (-self.g_s * self.a_ll + self.g_l * self.a_ls) / det;
            if (0.0..=1.0).contains(&gl) && (0.0..=1.0).contains(&gs) {
                return (gl, gs);
            }
        }
        let (mut gl, mut gs) = (0.0, 0.0);
        for _ in 0..10_000 {
            let nl = line_min(self.a_ll, self.g_l + self.a_ls * gs);
            let ns = line_min(self.a_ss, self.g_s + self.a_ls * nl);
            let change = (nl - gl).abs().max((ns - gs).abs());
            gl = nl;
            gs = ns;
            if change <= 1e-12 {
                break;
            }
        }
        let candidates = [
            (gl, gs),
            (0.0, 0.0),
            (1.0, 0.0),
            (0.0, 1.0),
            (1.0, 1.0),
            (line_min(self.a_ll, self.g_l), 0.0),
            (line_min(self.a_ll, self.g_l + self.a_ls), 1.0),
            (0.0, line_min(self.a_ss, self.g_s)),
            (1.0, line_min(self.a_ss, self.g_s + self.a_ls)),
        ];
        let mut best = candidates[0];
        let mut best_val = self.eval(best.0, best.1);
        for &(a, b) in &candidates[1..] {
            let v = self.eval(a, b);
            if v < best_val {
                best = (a, b);
                best_val = v;
            }
        }
        best
    }
}

/// argmin over `[0, 1]` of `½c γ² + g γ`; zero when flat.
fn line_min(c: f64, g: f64) -> f64 {
    if c > 0.0 {
        (-g / c).clamp(0.0, 1.0)
    } else if g < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Output of the segment subproblem.
#[derive(Debug, Clone)]
pub struct SegmentStep {
    pub l: DenseMatrix,
    pub s: DenseMatrix,
    pub t_l: f64,
    pub t_s: f64,
    pub gamma_l: f64,
    pub gamma_s: f64,
}

/// Exact minimization of the epigraph objective over the product of the
/// segments `[(L, t_L), (V_L, V_tL)]` and `[(S, t_S), (V_S, V_tS)]`.
pub fn segment_qp(
    state: &CpcpState,
    v_l: &DenseMatrix,
    v_tl: f64,
    v_s: &DenseMatrix,
    v_ts: f64,
    d: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<SegmentStep> {
    mask.check(d)?;
    for (m, what) in [(&state.l, "L"), (&state.s, "S"), (v_l, "V_L"), (v_s, "V_S")] {
        d.check_same_shape(m, what)?;
    }
    let mut g = state.l.add(&state.s).sub(d);
    mask.project_in_place(&mut g);
    let dir_l = v_l.sub(&state.l);
    let dir_s = v_s.sub(&state.s);
    let q = segment_quadratic(&g, &dir_l, &dir_s, mask, state, v_tl, v_ts);
    let (gamma_l, gamma_s) = q.minimize();
    let mut l = state.l.clone();
    l.axpy(gamma_l, &dir_l);
    let mut s = state.s.clone();
    s.axpy(gamma_s, &dir_s);
    Ok(SegmentStep {
        l,
        s,
        t_l: state.t_l + gamma_l * (v_tl - state.t_l),
        t_s: state.t_s + gamma_s * (v_ts - state.t_s),
        gamma_l,
        gamma_s,
    })
}

fn segment_quadratic(
    g: &DenseMatrix,
    dir_l: &DenseMatrix,
    dir_s: &DenseMatrix,
    mask: &ObservationMask,
    state: &CpcpState,
    v_tl: f64,
    v_ts: f64,
) -> SegmentQuadratic {
    let (mut a_ll, mut a_ls, mut a_ss, mut g_l, mut g_s) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let gd = g.as_slice();
    let (al, as_) = (dir_l.as_slice(), dir_s.as_slice());
    match &mask.observed {
        None => {
            a_ll = dot(al, al);
            a_ls = dot(al, as_);
            a_ss = dot(as_, as_);
            g_l = dot(gd, al);
            g_s = dot(gd, as_);
        }
        Some(flags) => {
            for idx in 0..gd.len() {
                if flags[idx] {
                    a_ll += al[idx] * al[idx];
                    a_ls += al[idx] * as_[idx];
                    a_ss += as_[idx] * as_[idx];
                    g_l += gd[idx] * al[idx];
                    g_s += gd[idx] * as_[idx];
                }
            }
        }
    }
    SegmentQuadratic {
        a_ll,
        a_ls,
        a_ss,
        g_l: g_l + state.lambda_l * (v_tl - state.t_l),
        g_s: g_s + state.lambda_s * (v_ts - state.t_s),
    }
}

/// `S ← 𝒮_{λ_S}[S − P_Q[L + S − D]]`, `t_S ← ‖S‖₁`.
pub fn threshold_step(
    l: &DenseMatrix,
    s_half: &DenseMatrix,
    d: &DenseMatrix,
    mask: &ObservationMask,
    lambda_s: f64,
) -> Result<(DenseMatrix, f64)> {
    mask.check(d)?;
    d.check_same_shape(l, "threshold_step")?;
    d.check_same_shape(s_half, "threshold_step")?;
    let mut s = s_half.clone();
    let t = threshold_in_place(l, &mut s, d, mask, lambda_s);
    Ok((s, t))
}

fn threshold_in_place(
    l: &DenseMatrix,
    s: &mut DenseMatrix,
    d: &DenseMatrix,
    mask: &ObservationMask,
    lambda_s: f64,
) -> f64 {
    let mut t = 0.0;
    let (ld, dd) = (l.as_slice(), d.as_slice());
    for (idx, sv) in s.as_mut_slice().iter_mut().enumerate() {
        let observed = mask.observed.as_ref().is_none_or(|f| f[idx]);
        let grad = if observed { ld[idx] + *sv - dd[idx] } else { 0.0 };
        *sv = shrink(*sv - grad, lambda_s);
        t += sv.abs();
    }
    t
}

/// `U ← min(U_prev, f/λ)` for both blocks.
pub fn update_bounds(u_l: f64, u_s: f64, objective: f64, lambda_l: f64, lambda_s: f64) -> (f64, f64) {
    ((objective / lambda_l).min(u_l), (objective / lambda_s).min(u_s))
}

/// `L = Q_a K Q_bᵀ` with orthonormal bases that grow by at most one
/// direction per iteration, kept alongside the dense iterate so `rank(L)`
/// and `‖L‖_*` come from the small core `K` instead of an `m × n` SVD.
#[derive(Debug, Clone, Default)]
struct LowRankTrack {
    left: Vec<Vec<f64>>,
    right: Vec<Vec<f64>>,
    /// Column-major `left.len() × right.len()` core.
    core: Vec<f64>,
    sigma: Vec<f64>,
    rank_tol_factor: f64,
}

impl LowRankTrack {
    fn new(rows: usize, cols: usize) -> Self {
        LowRankTrack {
            rank_tol_factor: f64::EPSILON * rows.max(cols) as f64,
            ..Default::default()
        }
    }

    /// `L ← c·L + w·u vᵀ`.
    fn update(&mut self, c: f64, w: f64, u: &[f64], v: &[f64]) -> Result<()> {
        if c == 0.0 {
            self.left.clear();
            self.right.clear();
            self.core.clear();
        } else {
            self.core.iter_mut().for_each(|x| *x *= c);
        }
        if w != 0.0 {
            let (old_rows, old_cols) = (self.left.len(), self.right.len());
            let a = extend_basis(&mut self.left, u);
            let b = extend_basis(&mut self.right, v);
            let (ka, kb) = (self.left.len(), self.right.len());
            let mut core = vec![0.0; ka * kb];
            for j in 0..old_cols {
                core[j * ka..j * ka + old_rows].copy_from_slice(&self.core[j * old_rows..(j + 1) * old_rows]);
            }
            for j in 0..kb {
                for i in 0..ka {
                    core[i + j * ka] += w * a[i] * b[j];
                }
            }
            self.core = core;
        }
        self.refresh()
    }

    fn refresh(&mut self) -> Result<()> {
        self.sigma.clear();
        let (ka, kb) = (self.left.len(), self.right.len());
        if ka == 0 || kb == 0 {
            return Ok(());
        }
        let k = DenseMatrix::from_col_major(ka, kb, self.core.clone())
            .map_err(|_| Error::Invariant("low-rank core became non-finite".into()))?;
        let s = svd::singular_values(&k)?;
        let tol = s[0] * self.rank_tol_factor;
        self.sigma = s.into_iter().filter(|&x| x > tol && x > 0.0).collect();
        Ok(())
    }

    fn rank(&self) -> usize {
        self.sigma.len()
    }

    fn nuclear(&self) -> f64 {
        self.sigma.iter().sum()
    }
}

/// Coordinates of `x` in `basis`, appending a new orthonormal direction when
/// `x` has a numerically nonzero component outside it.
fn extend_basis(basis: &mut Vec<Vec<f64>>, x: &[f64]) -> Vec<f64> {
    let mut coords = vec![0.0; basis.len()];
    let mut r = x.to_vec();
    for _ in 0..2 {
        for (c, q) in coords.iter_mut().zip(basis.iter()) {
            let h = dot(q, &r);
            *c += h;
            crate::matrix::axpy(-h, q, &mut r);
        }
    }
    let nr = norm2(&r);
    if nr > 1e-12 * norm2(x) && basis.len() < x.len() {
        r.iter_mut().for_each(|e| *e /= nr);
        basis.push(r);
        coords.push(nr);
    }
    coords
}

/// Which nuclear-ball oracle a solve uses.
#[derive(Debug, Clone)]
pub enum FwVariant {
    Standard,
    Multilevel(RestrictionChain),
}

/// What one FW-T iteration did.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub objective: f64,
    pub gamma_l: f64,
    pub gamma_s: f64,
    /// The unit-radius nuclear oracle output `M_L` (prolonged for ML-FWT).
    pub m_l: RankOneAtom,
    /// Oracle value `⟨G, M_L⟩`.
    pub lmo_value: f64,
}

/// Step-wise FW-T / ML-FWT driver.
pub struct CpcpSolver<'a> {
    d: &'a DenseMatrix,
    mask: &'a ObservationMask,
    opts: CpcpOptions,
    variant: FwVariant,
    radius: f64,
    state: CpcpState,
    track: LowRankTrack,
    pd_norm: f64,
    objective: f64,
    objectives: Vec<f64>,
    clock: Stopwatch,
}

impl<'a> CpcpSolver<'a> {
    pub fn new(d: &'a DenseMatrix, mask: &'a ObservationMask, opts: &CpcpOptions, variant: FwVariant) -> Result<Self> {
        mask.check(d)?;
        if !d.all_finite() {
            return Err(Error::invalid("data matrix has non-finite entries"));
        }
        if opts.tol.is_nan() || opts.tol <= 0.0 {
            return Err(Error::invalid(format!("tol must be positive, got {}", opts.tol)));
        }
        let (dl, ds) = default_lambdas(d, mask);
        let lambda_l = opts.lambda_l.unwrap_or(dl);
        let lambda_s = opts.lambda_s.unwrap_or(ds);
        let pd_norm = masked_norm_sq(d, mask).sqrt();
        // zero data: any positive weights give the same (zero) solution
        let (lambda_l, lambda_s) = if pd_norm == 0.0 && opts.lambda_l.is_none() && opts.lambda_s.is_none() {
            (1.0, 1.0)
        } else {
            (lambda_l, lambda_s)
        };
        for (name, v) in [("lambda_l", lambda_l), ("lambda_s", lambda_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let radius = match &variant {
            FwVariant::Standard => 1.0,
            FwVariant::Multilevel(chain) => {
                if chain.n_fine() != d.cols() {
                    return Err(Error::invalid(format!(
                        "chain expects {} columns, data has {}",
                        chain.n_fine(),
                        d.cols()
                    )));
                }
                1.0 / (chain.spectral_norm() * chain.scale())
            }
        };
        let mut state = CpcpState::initial(d, mask, lambda_l, lambda_s);
        if let FwVariant::Multilevel(chain) = &variant {
            state.n_coarse = Some(chain.n_coarse());
        }
        let objective = 0.5 * pd_norm * pd_norm;
        Ok(CpcpSolver {
            d,
            mask,
            opts: opts.clone(),
            variant,
            radius,
            state,
            track: LowRankTrack::new(d.rows(), d.cols()),
            pd_norm,
            objective,
            objectives: vec![objective],
            clock: Stopwatch::start(),
        })
    }

    pub fn state(&self) -> &CpcpState {
        &self.state
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Radius of the nuclear oracle ball (`1/σ₁(R)` for ML-FWT).
    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn nuclear_oracle(&self, g: &DenseMatrix) -> Result<(RankOneAtom, f64)> {
        match &self.variant {
            FwVariant::Standard => nuclear_lmo_atom(g, self.radius),
            FwVariant::Multilevel(chain) => {
                let g_h = chain.restrict(g)?;
                let (atom_h, value) = nuclear_lmo_atom(&g_h, self.radius)?;
                let v = chain.prolong_vec(&atom_h.v);
                Ok((
                    RankOneAtom {
                        u: atom_h.u,
                        v,
                        weight: atom_h.weight,
                    },
                    value,
                ))
            }
        }
    }

    /// One FW-T iteration.
    pub fn step(&mut self) -> Result<StepReport> {
        let (m, n) = self.d.shape();
        let st = &self.state;
        let (lambda_l, lambda_s) = (st.lambda_l, st.lambda_s);

        let mut g = st.l.add(&st.s).sub(self.d);
        self.mask.project_in_place(&mut g);

        let (m_l, value_l) = self.nuclear_oracle(&g)?;
        let (m_s, value_s) = l1_lmo_atom(&g, 1.0)?;
        let c_l = corner_scale(value_l, lambda_l, st.u_l);
        let c_s = corner_scale(value_s, lambda_s, st.u_s);

        // segment directions V − X
        let mut dir_l = st.l.scale(-1.0);
        if c_l != 0.0 {
            dir_l.rank_one_update(c_l * m_l.weight, &m_l.u, &m_l.v);
        }
        let mut dir_s = st.s.scale(-1.0);
        if c_s != 0.0 {
            dir_s[(m_s.row, m_s.col)] += c_s * m_s.weight;
        }
        let q = segment_quadratic(&g, &dir_l, &dir_s, self.mask, st, c_l, c_s);
        let (gamma_l, gamma_s) = q.minimize();

        let st = &mut self.state;
        st.l.axpy(gamma_l, &dir_l);
        st.s.axpy(gamma_s, &dir_s);
        st.t_l += gamma_l * (c_l - st.t_l);
        st.t_s += gamma_s * (c_s - st.t_s);
        if gamma_l != 0.0 {
            self.track
                .update(1.0 - gamma_l, gamma_l * c_l * m_l.weight, &m_l.u, &m_l.v)?;
        }

        st.t_s = threshold_in_place(&st.l, &mut st.s, self.d, self.mask, lambda_s);

        let fit = objective_parts(&st.l, &st.s, self.d, self.mask);
        let objective = fit + lambda_l * st.t_l + lambda_s * st.t_s;
        let (u_l, u_s) = update_bounds(st.u_l, st.u_s, objective, lambda_l, lambda_s);
        let prev_bounds = (st.u_l, st.u_s);
        st.u_l = u_l;
        st.u_s = u_s;
        st.iter += 1;

        let gap = if self.pd_norm > 0.0 {
            (2.0 * fit).sqrt() / self.pd_norm
        } else {
            0.0
        };
        st.history.push(IterationRecord {
            iter: st.iter,
            feasibility_gap: gap,
            objective,
            rank_l: self.track.rank(),
            sparsity_s: sparsity(st.s.count_nonzero(), m * n),
            wall_seconds: self.clock.seconds(),
        });

        let m_l_unit = RankOneAtom {
            weight: m_l.weight,
            ..m_l
        };
        if self.opts.check_invariants || cfg!(debug_assertions) {
            self.check_invariants(objective, prev_bounds, &m_l_unit)?;
        }
        self.objective = objective;
        self.objectives.push(objective);
        Ok(StepReport {
            objective,
            gamma_l,
            gamma_s,
            m_l: m_l_unit,
            lmo_value: value_l,
        })
    }

    fn check_invariants(&self, objective: f64, prev_bounds: (f64, f64), m_l: &RankOneAtom) -> Result<()> {
        const TOL: f64 = 1e-8;
        let st = &self.state;
        let k = st.iter;
        let fail = |msg: String| Err(Error::Invariant(format!("iteration {k}: {msg}")));
        let nuc = self.track.nuclear();
        if nuc > st.t_l * (1.0 + 1e-10) + TOL {
            return fail(format!("‖L‖_* = {nuc} exceeds t_L = {}", st.t_l));
        }
        if st.t_l > st.u_l + TOL {
            return fail(format!("t_L = {} exceeds U_L = {}", st.t_l, st.u_l));
        }
        let l1 = st.s.l1_norm();
        if l1 > st.t_s + TOL {
            return fail(format!("‖S‖₁ = {l1} exceeds t_S = {}", st.t_s));
        }
        if st.t_s > st.u_s + TOL {
            return fail(format!("t_S = {} exceeds U_S = {}", st.t_s, st.u_s));
        }
        if st.u_l > prev_bounds.0 || st.u_s > prev_bounds.1 {
            return fail("bounds increased".into());
        }
        if objective > self.objective + 1e-12 * self.objective.abs().max(1.0) {
            return fail(format!("objective rose from {} to {objective}", self.objective));
        }
        let lmo_norm = m_l.nuclear_norm();
        if lmo_norm > 1.0 + TOL {
            return fail(format!("oracle atom has nuclear norm {lmo_norm}"));
        }
        Ok(())
    }

    fn stop_reason(&self) -> Option<SolveStatus> {
        let k = self.objectives.len() - 1;
        let f = self.objectives[k];
        if f == 0.0 {
            return Some(SolveStatus::Converged);
        }
        if k >= STOP_WINDOW {
            let prev = self.objectives[k - STOP_WINDOW];
            if (prev - f) <= self.opts.tol * prev.abs() {
                return Some(SolveStatus::Converged);
            }
        }
        if let Some(budget) = self.opts.time_budget {
            if self.clock.seconds() >= budget.as_secs_f64() {
                return Some(SolveStatus::TimeBudget);
            }
        }
        None
    }

    /// Iterates until the stopping rule, the iteration cap or the time budget.
    pub fn run(mut self) -> Result<CpcpState> {
        let mut status = SolveStatus::MaxIterations;
        while self.state.iter < self.opts.max_iters {
            self.step()?;
            if let Some(s) = self.stop_reason() {
                status = s;
                break;
            }
        }
        self.state.status = status;
        Ok(self.state)
    }

    pub fn into_state(self) -> CpcpState {
        self.state
    }
}

/// Frank-Wolfe thresholding.
pub fn fwt_solve(d: &DenseMatrix, mask: &ObservationMask, opts: &CpcpOptions) -> Result<CpcpState> {
    CpcpSolver::new(d, mask, opts, FwVariant::Standard)?.run()
}

/// Coarse column count ML-FWT uses for `d` under `opts`.
pub fn coarse_size(d: &DenseMatrix, opts: &CpcpOptions) -> Result<usize> {
    let (m, n) = d.shape();
    match opts.levels {
        Some(nc) => {
            multilevel::validate_explicit_level(n, nc, opts.rank_guess, m)?;
            Ok(nc)
        }
        None => multilevel::select_levels(n, opts.rank_guess, 1, m),
    }
}

/// Multilevel Frank-Wolfe thresholding with a normalized restriction chain.
pub fn ml_fwt_solve(d: &DenseMatrix, mask: &ObservationMask, opts: &CpcpOptions) -> Result<CpcpState> {
    let nc = coarse_size(d, opts)?;
    let chain = RestrictionChain::build(d.cols(), nc, true)?;
    CpcpSolver::new(d, mask, opts, FwVariant::Multilevel(chain))?.run()
}
