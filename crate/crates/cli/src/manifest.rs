//! `key=value` run manifests.
//!
//! One entry per line, `#` starts a comment line. Keys repeat only where a
//! list is meant (`solver`, `input`). Keys under `result.` describe the
//! outcome and are ignored when a manifest is replayed.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::config::{parse_coarse_map, Command, MaskSpec, RunConfig, SolverKind, SolverSettings, SynthSpec};

const LIST_KEYS: &[&str] = &["solver", "input"];
const KNOWN_KEYS: &[&str] = &[
    "version",
    "command",
    "solver",
    "input",
    "out",
    "seed",
    "mask",
    "synth.m",
    "synth.n",
    "synth.rank",
    "synth.eta",
    "synth.observe",
    "synth.coarse",
    "lambda",
    "lambda_l",
    "lambda_s",
    "tol",
    "max_iters",
    "time",
    "rank_guess",
    "levels",
    "mu0",
    "rho",
    "coarse_map",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestError {
    pub line: Option<usize>,
    pub message: String,
}

impl ManifestError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ManifestError {
            line: Some(line),
            message: message.into(),
        }
    }

    fn new(message: impl Into<String>) -> Self {
        ManifestError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ManifestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "manifest line {l}: {}", self.message),
            None => write!(f, "manifest: {}", self.message),
        }
    }
}

impl std::error::Error for ManifestError {}

/// Ordered key/value entries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Replaces every entry under `key` with a single one.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.retain(|(k, _)| k != key);
        self.push(key, value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Strict parse: unknown keys, repeated scalar keys and lines without
    /// `=` are errors.
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut m = Manifest::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ManifestError::at(line_no, "expected key=value"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ManifestError::at(line_no, "empty key"));
            }
            let is_result = key.strip_prefix("result.").is_some_and(|rest| !rest.is_empty());
            if !is_result && !KNOWN_KEYS.contains(&key) {
                return Err(ManifestError::at(line_no, format!("unknown key `{key}`")));
            }
            if !LIST_KEYS.contains(&key) && m.get(key).is_some() {
                return Err(ManifestError::at(line_no, format!("`{key}` given twice")));
            }
            m.push(key, value);
        }
        Ok(m)
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# mlrpca run manifest")?;
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn field<T: FromStr>(m: &Manifest, key: &str) -> Result<Option<T>, ManifestError> {
    m.get(key)
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| ManifestError::new(format!("bad value `{v}` for `{key}`")))
        })
        .transpose()
}

fn required<T: FromStr>(m: &Manifest, key: &str) -> Result<T, ManifestError> {
    field(m, key)?.ok_or_else(|| ManifestError::new(format!("missing `{key}`")))
}

/// `{:?}` prints the shortest decimal that parses back to the same `f64`.
fn float(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Manifest describing this configuration. Solver settings are written
    /// as given, so callers resolve defaults first.
    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.push("version", mlrpca_core::VERSION);
        m.push("command", self.command.as_str());
        for s in &self.solvers {
            m.push("solver", s.as_str());
        }
        for p in &self.inputs {
            m.push("input", p.display());
        }
        m.push("out", self.out.display());
        m.push("seed", self.seed);
        m.push(
            "mask",
            match &self.mask {
                MaskSpec::Full => "full".to_string(),
                MaskSpec::Fraction(f) => format!("fraction:{}", float(*f)),
                MaskSpec::File(p) => format!("file:{}", p.display()),
            },
        );
        if let Some(s) = &self.synth {
            m.push("synth.m", s.m);
            m.push("synth.n", s.n);
            m.push("synth.rank", s.rank);
            m.push("synth.eta", float(s.eta));
            if let Some(o) = s.observe {
                m.push("synth.observe", float(o));
            }
            if let Some(c) = s.coarse {
                m.push("synth.coarse", c);
            }
        }
        let st = &self.settings;
        let floats = [
            ("lambda", st.lambda),
            ("lambda_l", st.lambda_l),
            ("lambda_s", st.lambda_s),
            ("tol", st.tol),
            ("time", st.time_seconds),
            ("mu0", st.mu0),
            ("rho", st.rho),
        ];
        for (k, v) in floats {
            if let Some(v) = v {
                m.push(k, float(v));
            }
        }
        for (k, v) in [
            ("max_iters", st.max_iters),
            ("rank_guess", st.rank_guess),
            ("levels", st.levels),
        ] {
            if let Some(v) = v {
                m.push(k, v);
            }
        }
        if let Some(c) = st.coarse_map {
            m.push("coarse_map", c.as_str());
        }
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self, ManifestError> {
        let command_name: String = required(m, "command")?;
        let command = Command::parse(&command_name)
            .ok_or_else(|| ManifestError::new(format!("unknown command `{command_name}`")))?;
        let solvers = m
            .get_all("solver")
            .map(|s| SolverKind::parse(s).ok_or_else(|| ManifestError::new(format!("unknown solver `{s}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let want = match command {
            Command::Synth => 0,
            Command::Compare => 2,
            _ => 1,
        };
        if solvers.len() != want {
            return Err(ManifestError::new(format!(
                "{command_name} takes {want} solver entries, found {}",
                solvers.len()
            )));
        }
        if let Some(first) = solvers.first() {
            if solvers.iter().any(|s| s.is_pcp() != first.is_pcp())
                || (command == Command::SolvePcp && !first.is_pcp())
                || (command == Command::SolveCpcp && first.is_pcp())
            {
                return Err(ManifestError::new(format!("solvers do not fit `{command_name}`")));
            }
        }
        let inputs: Vec<PathBuf> = m.get_all("input").map(PathBuf::from).collect();
        if command != Command::Synth && inputs.is_empty() {
            return Err(ManifestError::new("missing `input`"));
        }

        let mask = match m.get("mask").unwrap_or("full") {
            "full" => MaskSpec::Full,
            v => {
                if let Some(f) = v.strip_prefix("fraction:") {
                    MaskSpec::Fraction(
                        f.parse()
                            .map_err(|_| ManifestError::new(format!("bad mask fraction `{f}`")))?,
                    )
                } else if let Some(p) = v.strip_prefix("file:") {
                    MaskSpec::File(PathBuf::from(p))
                } else {
                    return Err(ManifestError::new(format!("bad mask `{v}`")));
                }
            }
        };

        let synth = if command == Command::Synth {
            Some(SynthSpec {
                m: required(m, "synth.m")?,
                n: required(m, "synth.n")?,
                rank: required(m, "synth.rank")?,
                eta: required(m, "synth.eta")?,
                observe: field(m, "synth.observe")?,
                coarse: field(m, "synth.coarse")?,
            })
        } else {
            None
        };

        let coarse_map = match m.get("coarse_map") {
            None => None,
            Some(v) => {
                Some(parse_coarse_map(v).ok_or_else(|| ManifestError::new(format!("unknown coarse map `{v}`")))?)
            }
        };

        Ok(RunConfig {
            command,
            solvers,
            inputs,
            out: PathBuf::from(m.get("out").unwrap_or(".")),
            settings: SolverSettings {
                lambda: field(m, "lambda")?,
                lambda_l: field(m, "lambda_l")?,
                lambda_s: field(m, "lambda_s")?,
                tol: field(m, "tol")?,
                max_iters: field(m, "max_iters")?,
                time_seconds: field(m, "time")?,
                rank_guess: field(m, "rank_guess")?,
                levels: field(m, "levels")?,
                mu0: field(m, "mu0")?,
                rho: field(m, "rho")?,
                coarse_map,
            },
            mask,
            seed: field(m, "seed")?.unwrap_or(0),
            synth,
            warnings: Vec::new(),
        })
    }
}
