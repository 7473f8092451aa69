//! Load or generate data, solve, write artifacts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mlrpca_core::cpcp::{default_lambdas, fwt_solve, ml_fwt_solve, CpcpOptions, ObservationMask};
use mlrpca_core::io::{
    emit_frames, ingest_frames, load_matrix, matrix_from_csv, save_matrix, synth_rpca, synth_rpca_coarse,
    write_metrics, FrameStack,
};
use mlrpca_core::pcp::{ialm_solve, ml_ialm_solve, PcpOptions};
use mlrpca_core::{DenseMatrix, Error, IterationRecord, SolveStatus};

use crate::config::{Command, MaskSpec, RunConfig, SolverKind, SolverSettings};

pub const SUMMARY_HEADER: &str = "solver,seconds,objective,rank_l,sparsity_s,feasibility_gap";

/// One solver's headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub solver: SolverKind,
    pub seconds: f64,
    pub objective: f64,
    pub rank_l: usize,
    pub sparsity_s: f64,
    pub feasibility_gap: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub n_coarse: Option<usize>,
}

impl Summary {
    fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{},{:?},{:?}",
            self.solver.as_str(),
            self.seconds,
            self.objective,
            self.rank_l,
            self.sparsity_s,
            self.feasibility_gap
        )
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {:.3}, {:.6e}, {}, {:.4}, {:.3e}",
            self.solver.as_str(),
            self.seconds,
            self.objective,
            self.rank_l,
            self.sparsity_s,
            self.feasibility_gap
        )
    }
}

#[derive(Debug)]
pub enum RunError {
    /// The configuration cannot work: bad option values, solver
    /// preconditions. Reported like a usage error.
    Rejected(String),
    /// Reading, writing or computing failed.
    Failed(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Rejected(m) | RunError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::ConstraintViolation(_) => RunError::Rejected(e.to_string()),
            other => RunError::Failed(other.to_string()),
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub summaries: Vec<Summary>,
    pub manifest: PathBuf,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        self.summaries.iter().all(|s| s.status.is_converged())
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    create_dir(&cfg.out)?;
    match cfg.command {
        Command::Synth => synth(cfg),
        _ => solve(cfg),
    }
}

fn create_dir(dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(|e| RunError::Failed(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| RunError::Failed(format!("cannot write {}: {e}", path.display())))
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn synth(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let spec = cfg
        .synth
        .as_ref()
        .ok_or_else(|| RunError::Rejected("synth needs problem dimensions".into()))?;
    let p = match spec.coarse {
        Some(nc) => synth_rpca_coarse(spec.m, spec.n, nc, spec.rank, spec.eta, cfg.seed, spec.observe)?,
        None => synth_rpca(spec.m, spec.n, spec.rank, spec.eta, cfg.seed, spec.observe)?,
    };
    save_matrix(cfg.out.join("d.lrml"), &p.d)?;
    save_matrix(cfg.out.join("l_truth.lrml"), &p.l_truth)?;
    save_matrix(cfg.out.join("s_truth.lrml"), &p.s_truth)?;
    if let Some(mask) = &p.mask {
        save_matrix(cfg.out.join("mask.lrml"), &mask.to_matrix())?;
    }
    let manifest = cfg.out.join("manifest.txt");
    write_text(&manifest, &cfg.to_manifest().to_string())?;
    Ok(Outcome {
        summaries: Vec::new(),
        manifest,
    })
}

fn read_matrix(path: &Path) -> Result<DenseMatrix, RunError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Failed(format!("cannot read {}: {e}", path.display())))?;
        matrix_from_csv(&text).map_err(|e| RunError::Failed(format!("{}: {e}", path.display())))
    } else {
        Ok(load_matrix(path)?)
    }
}

/// Fills every default the library would pick, so the manifest pins them.
fn resolve(settings: &SolverSettings, pcp: bool, d: &DenseMatrix, mask: &ObservationMask) -> SolverSettings {
    let mut r = settings.clone();
    let unbounded = settings.time_seconds.is_some();
    if pcp {
        let def = PcpOptions::default();
        r.lambda = Some(
            PcpOptions {
                lambda: settings.lambda,
                ..def.clone()
            }
            .resolved_lambda(d),
        );
        r.tol.get_or_insert(def.tol_feasibility);
        r.rho.get_or_insert(def.rho);
        r.rank_guess.get_or_insert(def.rank_guess);
        r.coarse_map.get_or_insert(def.coarse_map);
        r.max_iters = Some(if unbounded {
            usize::MAX
        } else {
            settings.max_iters.unwrap_or(def.max_iters)
        });
    } else {
        let def = CpcpOptions::default();
        let (ll, ls) = default_lambdas(d, mask);
        r.lambda_l.get_or_insert(ll);
        r.lambda_s.get_or_insert(ls);
        r.tol.get_or_insert(def.tol);
        r.rank_guess.get_or_insert(def.rank_guess);
        r.max_iters = Some(if unbounded {
            usize::MAX
        } else {
            settings.max_iters.unwrap_or(def.max_iters)
        });
    }
    r
}

fn time_budget(settings: &SolverSettings) -> Option<Duration> {
    settings.time_seconds.map(Duration::from_secs_f64)
}

struct Solved {
    l: DenseMatrix,
    s: DenseMatrix,
    history: Vec<IterationRecord>,
    summary: Summary,
}

fn solve_one(
    solver: SolverKind,
    d: &DenseMatrix,
    mask: &ObservationMask,
    st: &SolverSettings,
) -> Result<Solved, RunError> {
    let start = Instant::now();
    let (l, s, history, status, iterations, n_coarse) = if solver.is_pcp() {
        let opts = PcpOptions {
            lambda: st.lambda,
            mu0: st.mu0,
            rho: st.rho.unwrap_or(1.5),
            tol_feasibility: st.tol.unwrap_or(1e-7),
            max_iters: st.max_iters.unwrap_or(usize::MAX),
            rank_guess: st.rank_guess.unwrap_or(1),
            levels: st.levels,
            time_budget: time_budget(st),
            coarse_map: st.coarse_map.unwrap_or_default(),
            ..Default::default()
        };
        let r = if solver.is_multilevel() {
            ml_ialm_solve(d, &opts)?
        } else {
            ialm_solve(d, &opts)?
        };
        (r.l, r.s, r.history, r.status, r.iter, r.n_coarse)
    } else {
        let opts = CpcpOptions {
            lambda_l: st.lambda_l,
            lambda_s: st.lambda_s,
            tol: st.tol.unwrap_or(1e-3),
            max_iters: st.max_iters.unwrap_or(usize::MAX),
            rank_guess: st.rank_guess.unwrap_or(1),
            levels: st.levels,
            time_budget: time_budget(st),
            check_invariants: false,
        };
        let r = if solver.is_multilevel() {
            ml_fwt_solve(d, mask, &opts)?
        } else {
            fwt_solve(d, mask, &opts)?
        };
        (r.l, r.s, r.history, r.status, r.iter, r.n_coarse)
    };
    let seconds = start.elapsed().as_secs_f64();
    let last = history.last().copied();
    let summary = Summary {
        solver,
        seconds,
        objective: last.map_or(0.0, |h| h.objective),
        rank_l: last.map_or(0, |h| h.rank_l),
        sparsity_s: last.map_or(0.0, |h| h.sparsity_s),
        feasibility_gap: last.map_or(0.0, |h| h.feasibility_gap),
        iterations,
        status,
        n_coarse,
    };
    Ok(Solved { l, s, history, summary })
}

fn solve(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let pcp = cfg.solvers.first().is_some_and(|s| s.is_pcp());
    let (d, stack): (DenseMatrix, Option<FrameStack>) = if cfg.command == Command::Video {
        let stack = ingest_frames(&cfg.inputs)?;
        (stack.matrix.clone(), Some(stack))
    } else {
        let path = cfg
            .inputs
            .first()
            .ok_or_else(|| RunError::Rejected("no input matrix".into()))?;
        (read_matrix(path)?, None)
    };
    let mask = match &cfg.mask {
        MaskSpec::Full => ObservationMask::full(d.rows(), d.cols()),
        MaskSpec::Fraction(f) => ObservationMask::sample(d.rows(), d.cols(), *f, cfg.seed)?,
        MaskSpec::File(p) => {
            let m = read_matrix(p)?;
            if m.shape() != d.shape() {
                return Err(RunError::Rejected(format!(
                    "mask {} is {}x{}, data is {}x{}",
                    p.display(),
                    m.rows(),
                    m.cols(),
                    d.rows(),
                    d.cols()
                )));
            }
            ObservationMask::from_matrix(&m)
        }
    };

    let mut resolved = cfg.clone();
    resolved.settings = resolve(&cfg.settings, pcp, &d, &mask);
    resolved.inputs = cfg.inputs.iter().map(|p| absolute(p)).collect();
    if let MaskSpec::File(p) = &cfg.mask {
        resolved.mask = MaskSpec::File(absolute(p));
    }
    let mut manifest = resolved.to_manifest();
    let manifest_path = cfg.out.join("manifest.txt");
    write_text(&manifest_path, &manifest.to_string())?;
    if !mask.is_full() {
        save_matrix(cfg.out.join("mask.lrml"), &mask.to_matrix())?;
    }

    let compare = cfg.solvers.len() > 1;
    let mut summaries = Vec::new();
    let mut table = format!("{SUMMARY_HEADER}\n");
    for (i, &solver) in cfg.solvers.iter().enumerate() {
        let label = if compare {
            format!("{}-{}", ['a', 'b'][i.min(1)], solver.as_str())
        } else {
            String::new()
        };
        let dir = if compare { cfg.out.join(&label) } else { cfg.out.clone() };
        create_dir(&dir)?;
        let solved = solve_one(solver, &d, &mask, &resolved.settings)?;
        save_matrix(dir.join("l.lrml"), &solved.l)?;
        save_matrix(dir.join("s.lrml"), &solved.s)?;
        write_metrics(&solved.history, dir.join("metrics.csv"))?;
        if let Some(stack) = &stack {
            emit_frames(stack, &solved.l, &solved.s, dir.join("frames"))?;
        }
        let sm = &solved.summary;
        let prefix = if compare {
            format!("result.{label}.")
        } else {
            "result.".to_string()
        };
        manifest.set(&format!("{prefix}status"), sm.status.as_str());
        manifest.set(&format!("{prefix}iterations"), sm.iterations);
        manifest.set(&format!("{prefix}seconds"), format!("{:?}", sm.seconds));
        if let Some(nc) = sm.n_coarse {
            manifest.set(&format!("{prefix}n_coarse"), nc);
        }
        table.push_str(&sm.csv_row());
        table.push('\n');
        summaries.push(solved.summary);
    }
    write_text(&cfg.out.join("summary.csv"), &table)?;
    write_text(&manifest_path, &manifest.to_string())?;
    Ok(Outcome {
        summaries,
        manifest: manifest_path,
    })
}
