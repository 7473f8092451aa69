//! Resolved run configuration and its command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use mlrpca_core::pcp::CoarseMap;

use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    SolvePcp,
    SolveCpcp,
    Video,
    Compare,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::SolvePcp => "solve-pcp",
            Command::SolveCpcp => "solve-cpcp",
            Command::Video => "video",
            Command::Compare => "compare",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Command::Synth,
            Command::SolvePcp,
            Command::SolveCpcp,
            Command::Video,
            Command::Compare,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Ialm,
    MlIalm,
    Fwt,
    MlFwt,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Ialm => "ialm",
            SolverKind::MlIalm => "ml-ialm",
            SolverKind::Fwt => "fwt",
            SolverKind::MlFwt => "ml-fwt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [SolverKind::Ialm, SolverKind::MlIalm, SolverKind::Fwt, SolverKind::MlFwt]
            .into_iter()
            .find(|k| k.as_str() == s)
    }

    /// PCP solvers (as opposed to CPCP).
    pub fn is_pcp(self) -> bool {
        matches!(self, SolverKind::Ialm | SolverKind::MlIalm)
    }

    pub fn is_multilevel(self) -> bool {
        matches!(self, SolverKind::MlIalm | SolverKind::MlFwt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoarseMapArg {
    Orthonormal,
    LeftInverse,
    Transpose,
}

impl From<CoarseMapArg> for CoarseMap {
    fn from(a: CoarseMapArg) -> Self {
        match a {
            CoarseMapArg::Orthonormal => CoarseMap::Orthonormal,
            CoarseMapArg::LeftInverse => CoarseMap::LeftInverse,
            CoarseMapArg::Transpose => CoarseMap::Transpose,
        }
    }
}

pub fn parse_coarse_map(s: &str) -> Option<CoarseMap> {
    [CoarseMap::Orthonormal, CoarseMap::LeftInverse, CoarseMap::Transpose]
        .into_iter()
        .find(|m| m.as_str() == s)
}

/// Which entries of the data are observed.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    Full,
    /// Sampled uniformly with the run seed.
    Fraction(f64),
    /// `.lrml` or `.csv` file; nonzero entries are observed.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub eta: f64,
    pub observe: Option<f64>,
    /// Build `L` in the row space of the chain down to this many columns.
    pub coarse: Option<usize>,
}

/// Solver options as given; `None` means "library default".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverSettings {
    pub lambda: Option<f64>,
    pub lambda_l: Option<f64>,
    pub lambda_s: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub time_seconds: Option<f64>,
    pub rank_guess: Option<usize>,
    pub levels: Option<usize>,
    pub mu0: Option<f64>,
    pub rho: Option<f64>,
    pub coarse_map: Option<CoarseMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    /// One solver, two for `compare`, none for `synth`.
    pub solvers: Vec<SolverKind>,
    /// Data file, or the ordered frame list for `video`.
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub settings: SolverSettings,
    pub mask: MaskSpec,
    pub seed: u64,
    pub synth: Option<SynthSpec>,
    /// Notes produced while resolving flags, printed before the run.
    pub warnings: Vec<String>,
}

#[derive(Parser, Debug)]
#[command(
    name = "mlrpca",
    version,
    about = "Low-rank plus sparse decomposition (PCP, CPCP) with multilevel solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic low-rank plus sparse problem
    Synth(SynthArgs),
    /// Solve PCP on a data matrix with IALM or ML-IALM
    SolvePcp(SolveArgs),
    /// Solve CPCP on a data matrix with FW-T or ML-FWT
    SolveCpcp(SolveArgs),
    /// Separate background and foreground of a PGM frame sequence
    Video(VideoArgs),
    /// Run two solvers on the same data, one after the other
    Compare(CompareArgs),
    /// Re-run a recorded manifest
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Rows
    #[arg(long)]
    m: usize,
    /// Columns
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    /// Fraction of corrupted entries
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of observed entries (writes mask.lrml)
    #[arg(long)]
    observe: Option<f64>,
    /// Put the low-rank part in the span of the restriction chain to this many columns
    #[arg(long)]
    coarse: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Default)]
struct SolverFlags {
    /// PCP sparsity weight [default: 1/√max(m,n)]
    #[arg(long)]
    lambda: Option<f64>,
    /// CPCP nuclear-norm weight
    #[arg(long)]
    lambda_l: Option<f64>,
    /// CPCP ℓ1 weight
    #[arg(long)]
    lambda_s: Option<f64>,
    /// Feasibility tolerance (PCP) or relative objective decrease (CPCP)
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Wall-clock budget in seconds; overrides --max-iters
    #[arg(long)]
    time: Option<f64>,
    /// Upper estimate of rank(L), used to pick the coarse size
    #[arg(long)]
    rank_guess: Option<usize>,
    /// Coarse column count for multilevel solvers
    #[arg(long)]
    levels: Option<usize>,
    /// Initial IALM penalty
    #[arg(long)]
    mu0: Option<f64>,
    /// IALM penalty growth factor
    #[arg(long)]
    rho: Option<f64>,
    /// How ML-IALM maps the L step to the coarse space
    #[arg(long, value_enum)]
    coarse_map: Option<CoarseMapArg>,
    /// Seed for sampled observation masks
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Observe this fraction of entries, sampled with --seed (CPCP only)
    #[arg(long, conflicts_with = "mask")]
    observe: Option<f64>,
    /// Observation mask file; nonzero entries are observed (CPCP only)
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Data matrix (.lrml or .csv)
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["frames", "frames_dir"])))]
struct VideoArgs {
    /// Frames in order
    #[arg(long, num_args = 1..)]
    frames: Vec<PathBuf>,
    /// Directory whose .pgm files, sorted by name, are the frames
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ml-fwt")]
    solver: SolverKind,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    solver_a: SolverKind,
    #[arg(long, value_enum)]
    solver_b: SolverKind,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Where the replayed outputs go
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first). Usage problems come back as clap
/// errors, which render with the subcommand synopsis and exit with status 2.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let (name, result) = match cli.command {
        Cmd::Synth(a) => ("synth", Ok(synth_config(a))),
        Cmd::SolvePcp(a) => ("solve-pcp", solve_config(Command::SolvePcp, a)),
        Cmd::SolveCpcp(a) => ("solve-cpcp", solve_config(Command::SolveCpcp, a)),
        Cmd::Video(a) => ("video", video_config(a)),
        Cmd::Compare(a) => ("compare", compare_config(a)),
        Cmd::Replay(a) => ("replay", replay_config(a)),
    };
    result.map_err(|msg| usage_error(name, msg))
}

fn usage_error(subcommand: &str, msg: String) -> clap::Error {
    let mut cmd = Cli::command();
    let mut sub = cmd
        .find_subcommand_mut(subcommand)
        .cloned()
        .unwrap_or_else(Cli::command);
    sub = sub.bin_name(format!("mlrpca {subcommand}"));
    sub.error(ErrorKind::ArgumentConflict, msg)
}

fn synth_config(a: SynthArgs) -> RunConfig {
    RunConfig {
        command: Command::Synth,
        solvers: Vec::new(),
        inputs: Vec::new(),
        out: a.out,
        settings: SolverSettings::default(),
        mask: MaskSpec::Full,
        seed: a.seed,
        synth: Some(SynthSpec {
            m: a.m,
            n: a.n,
            rank: a.rank,
            eta: a.eta,
            observe: a.observe,
            coarse: a.coarse,
        }),
        warnings: Vec::new(),
    }
}

fn solve_config(command: Command, a: SolveArgs) -> Result<RunConfig, String> {
    let pcp = command == Command::SolvePcp;
    let solver = a.solver.unwrap_or(if pcp { SolverKind::Ialm } else { SolverKind::Fwt });
    if solver.is_pcp() != pcp {
        return Err(format!(
            "--solver {} does not solve {}; use {}",
            solver.as_str(),
            if pcp { "PCP" } else { "CPCP" },
            if pcp { "ialm or ml-ialm" } else { "fwt or ml-fwt" }
        ));
    }
    build(command, vec![solver], vec![a.input], a.out, a.flags)
}

fn video_config(a: VideoArgs) -> Result<RunConfig, String> {
    let frames = match a.frames_dir {
        Some(dir) => list_frames(&dir)?,
        None => a.frames,
    };
    if frames.is_empty() {
        return Err("no .pgm frames given".into());
    }
    build(Command::Video, vec![a.solver], frames, a.out, a.flags)
}

fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let entries = std::fs::read_dir(dir).map_err(|e| format!("cannot read --frames-dir {}: {e}", dir.display()))?;
    let mut frames: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    frames.sort();
    Ok(frames)
}

fn compare_config(a: CompareArgs) -> Result<RunConfig, String> {
    if a.solver_a.is_pcp() != a.solver_b.is_pcp() {
        return Err(format!(
            "cannot compare {} with {}: one solves PCP, the other CPCP",
            a.solver_a.as_str(),
            a.solver_b.as_str()
        ));
    }
    build(
        Command::Compare,
        vec![a.solver_a, a.solver_b],
        vec![a.input],
        a.out,
        a.flags,
    )
}

fn replay_config(a: ReplayArgs) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(&a.manifest)
        .map_err(|e| format!("cannot read manifest {}: {e}", a.manifest.display()))?;
    let manifest = Manifest::parse(&text).map_err(|e| format!("{}: {e}", a.manifest.display()))?;
    let mut cfg = RunConfig::from_manifest(&manifest).map_err(|e| format!("{}: {e}", a.manifest.display()))?;
    if manifest.get("version") != Some(mlrpca_core::VERSION) {
        cfg.warnings.push(format!(
            "manifest was written by version {}, replaying with {}",
            manifest.get("version").unwrap_or("?"),
            mlrpca_core::VERSION
        ));
    }
    if cfg.settings.time_seconds.is_some() {
        cfg.warnings
            .push("the run had a time budget; replayed outputs depend on timing".into());
    }
    cfg.out = a.out;
    Ok(cfg)
}

fn build(
    command: Command,
    solvers: Vec<SolverKind>,
    inputs: Vec<PathBuf>,
    out: PathBuf,
    f: SolverFlags,
) -> Result<RunConfig, String> {
    let pcp = solvers[0].is_pcp();
    let misplaced: &[(&str, bool)] = if pcp {
        &[
            ("--lambda-l", f.lambda_l.is_some()),
            ("--lambda-s", f.lambda_s.is_some()),
            ("--observe", f.observe.is_some()),
            ("--mask", f.mask.is_some()),
        ]
    } else {
        &[
            ("--lambda", f.lambda.is_some()),
            ("--mu0", f.mu0.is_some()),
            ("--rho", f.rho.is_some()),
            ("--coarse-map", f.coarse_map.is_some()),
        ]
    };
    if let Some((flag, _)) = misplaced.iter().find(|(_, given)| *given) {
        let family = if pcp { "PCP" } else { "CPCP" };
        return Err(format!("{flag} does not apply to {family} solvers"));
    }

    let mut warnings = Vec::new();
    if f.time.is_some() && f.max_iters.is_some() {
        warnings.push("--time and --max-iters both given; the time budget wins".into());
    }
    if f.levels.is_some() && !solvers.iter().any(|s| s.is_multilevel()) {
        warnings.push("--levels only affects multilevel solvers".into());
    }
    if let Some(t) = f.time {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(format!("--time must be a non-negative number of seconds, got {t}"));
        }
    }
    let mask = match (f.observe, f.mask) {
        (Some(frac), _) => MaskSpec::Fraction(frac),
        (None, Some(p)) => MaskSpec::File(p),
        (None, None) => MaskSpec::Full,
    };
    Ok(RunConfig {
        command,
        solvers,
        inputs,
        out,
        settings: SolverSettings {
            lambda: f.lambda,
            lambda_l: f.lambda_l,
            lambda_s: f.lambda_s,
            tol: f.tol,
            max_iters: if f.time.is_some() { None } else { f.max_iters },
            time_seconds: f.time,
            rank_guess: f.rank_guess,
            levels: f.levels,
            mu0: f.mu0,
            rho: f.rho,
            coarse_map: f.coarse_map.map(Into::into),
        },
        mask,
        seed: f.seed,
        synth: None,
        warnings,
    })
}
