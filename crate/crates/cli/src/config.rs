//! JSON run configuration.
//!
//! A config names a built-in case or spells out the body and boundary states.
//! Explicit fields override whatever the case supplies. Unknown keys are
//! rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pendulum_core::cases::{CaseId, DEFAULT_STEPS, DEFAULT_STEP_SIZE};
use pendulum_core::dynamics::{BodyParams, DiscreteState, STANDARD_GRAVITY};
use pendulum_core::extremal::Costate;
use pendulum_core::shooting::{DirectionMode, ProblemSpec, SolverConfig};
use pendulum_core::so3::{Mat3, RotationMatrix, Vec3};
use pendulum_core::Error as CoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

impl From<CoreError> for ConfigError {
    fn from(e: CoreError) -> Self {
        ConfigError::Validation(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Solve,
    Phase,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Simulate => "simulate",
            Mode::Solve => "solve",
            Mode::Phase => "phase",
        })
    }
}

/// A single case or the whole library.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseSelection {
    One(CaseId),
    All,
}

impl FromStr for CaseSelection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            Ok(CaseSelection::All)
        } else {
            s.parse::<CaseId>().map(CaseSelection::One).map_err(|e| e.to_string())
        }
    }
}

impl fmt::Display for CaseSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseSelection::One(c) => write!(f, "{c}"),
            CaseSelection::All => f.write_str("all"),
        }
    }
}

impl Serialize for CaseSelection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CaseSelection {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Principal moments or a full symmetric matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InertiaSpec {
    Principal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl InertiaSpec {
    fn matrix(&self) -> Mat3 {
        match self {
            InertiaSpec::Principal(d) => Mat3::from_diagonal(&Vec3::from(*d)),
            InertiaSpec::Full(rows) => Mat3::from_fn(|i, j| rows[i][j]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyFile {
    pub mass: f64,
    pub inertia: InertiaSpec,
    pub rho: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gravity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    /// Attitude, row-major rows.
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<[[f64; 3]; 3]>,
    #[serde(rename = "Pi", default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<[f64; 3]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionFile {
    Reduced,
    Raw,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_shrink: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<DirectionFile>,
}

/// The on-disk schema, every field optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<CaseSelection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<BodyFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<StateFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<StateFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Explicit `[lambda1; lambda2]` starting multiplier. In simulate mode the
    /// extremal from this multiplier is propagated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<[f64; 6]>,
    /// Simulate mode: per-step inputs `u_1..u_N`. Zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<[f64; 3]>>,
    /// Phase mode: trajectory CSV to read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub case: Option<CaseSelection>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A fully resolved run for one case (or one custom problem).
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub case: Option<CaseId>,
    pub body: BodyParams,
    pub initial: DiscreteState,
    pub target: Option<DiscreteState>,
    pub steps: usize,
    pub h: f64,
    pub solver: SolverConfig,
    pub lambda0: Option<Costate>,
    pub controls: Option<Vec<Vec3>>,
    pub trajectory: Option<PathBuf>,
    pub out: PathBuf,
    /// The file contents with command-line overrides folded in, echoed into
    /// the summary. The output location is left out.
    pub echo: ConfigFile,
}

impl RunConfig {
    pub fn problem(&self) -> Result<ProblemSpec, ConfigError> {
        let target =
            self.target.ok_or_else(|| ConfigError::Validation("solve mode needs a target state or a case".into()))?;
        Ok(ProblemSpec::new(self.initial, target, self.steps, self.h, self.body.clone())?)
    }
}

pub const DEFAULT_OUT: &str = "pendulum3d-out";

pub fn parse_config(text: &str) -> Result<ConfigFile, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

/// Reads, merges and validates a config. A batch selection (`"case": "all"`)
/// yields one run per case, each writing under its own subdirectory.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<Vec<RunConfig>, ConfigError> {
    resolve(read_config(path)?, overrides)
}

pub fn resolve(mut file: ConfigFile, overrides: &Overrides) -> Result<Vec<RunConfig>, ConfigError> {
    if let (Some(cli), Some(cfg)) = (overrides.mode, file.mode) {
        if cli != cfg {
            return Err(ConfigError::Validation(format!("config mode {cfg} conflicts with command {cli}")));
        }
    }
    file.mode = overrides.mode.or(file.mode);
    file.case = overrides.case.or(file.case);
    file.seed = overrides.seed.or(file.seed);
    file.out = overrides.out.clone().or(file.out.take());
    let mode = file.mode.ok_or_else(|| ConfigError::Validation("no mode given".into()))?;
    let out = file.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));

    match file.case {
        Some(CaseSelection::All) => CaseId::ALL
            .into_iter()
            .map(|case| resolve_one(&file, mode, Some(case), out.join(format!("case-{case}"))))
            .collect(),
        Some(CaseSelection::One(case)) => Ok(vec![resolve_one(&file, mode, Some(case), out)?]),
        None => Ok(vec![resolve_one(&file, mode, None, out)?]),
    }
}

fn rotation(rows: &[[f64; 3]; 3], what: &str) -> Result<RotationMatrix, ConfigError> {
    RotationMatrix::new(Mat3::from_fn(|i, j| rows[i][j])).map_err(|e| ConfigError::Validation(format!("{what}: {e}")))
}

fn state(
    base: Option<DiscreteState>,
    file: Option<&StateFile>,
    what: &str,
) -> Result<Option<DiscreteState>, ConfigError> {
    let Some(file) = file else { return Ok(base) };
    let base = base.unwrap_or_else(DiscreteState::hanging);
    let r = match &file.r {
        Some(rows) => rotation(rows, &format!("{what}.R"))?,
        None => base.r,
    };
    let pi = file.pi.map(Vec3::from).unwrap_or(base.pi);
    if !pi.iter().all(|x| x.is_finite()) {
        return Err(ConfigError::Validation(format!("{what}.Pi must be finite")));
    }
    Ok(Some(DiscreteState::new(r, pi)))
}

fn body(file: &BodyFile) -> Result<BodyParams, ConfigError> {
    let gravity = file.gravity.unwrap_or(STANDARD_GRAVITY);
    Ok(BodyParams::new(file.mass, gravity, file.inertia.matrix(), Vec3::from(file.rho))?)
}

fn solver(file: Option<&SolverFile>, seed: Option<u64>) -> Result<SolverConfig, ConfigError> {
    let mut cfg = SolverConfig::default();
    if let Some(f) = file {
        cfg.eps_s = f.eps_s.unwrap_or(cfg.eps_s);
        cfg.alpha = f.alpha.unwrap_or(cfg.alpha);
        cfg.c_shrink = f.c_shrink.unwrap_or(cfg.c_shrink);
        cfg.max_outer = f.max_outer.unwrap_or(cfg.max_outer);
        cfg.max_backtracks = f.max_backtracks.unwrap_or(cfg.max_backtracks);
        cfg.fd_eps = f.fd_eps.unwrap_or(cfg.fd_eps);
        cfg.direction = match f.direction {
            Some(DirectionFile::Raw) => DirectionMode::Raw,
            Some(DirectionFile::Reduced) | None => DirectionMode::SymmetryReduced,
        };
    }
    cfg.seed = seed.unwrap_or(0);
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_one(file: &ConfigFile, mode: Mode, case: Option<CaseId>, out: PathBuf) -> Result<RunConfig, ConfigError> {
    let body = match (&file.body, case) {
        (Some(b), _) => body(b)?,
        (None, Some(c)) => c.body(),
        (None, None) => return Err(ConfigError::Validation("body is required when no case is named".into())),
    };
    let case_problem = case.map(|c| c.default_problem());
    let initial = state(case_problem.as_ref().map(|p| p.initial), file.initial.as_ref(), "initial")?
        .unwrap_or_else(DiscreteState::hanging);
    let target = state(case_problem.as_ref().map(|p| p.target), file.target.as_ref(), "target")?;
    let steps = file.steps.unwrap_or(DEFAULT_STEPS);
    let h = file.h.unwrap_or(DEFAULT_STEP_SIZE);
    if steps < 2 {
        return Err(ConfigError::Validation(format!("N must be at least 2, got {steps}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(ConfigError::Validation(format!("h must be positive, got {h}")));
    }
    let controls = match &file.controls {
        Some(list) if list.len() != steps => {
            return Err(ConfigError::Validation(format!("controls has {} entries, expected N = {steps}", list.len())))
        }
        Some(list) => Some(list.iter().map(|u| Vec3::from(*u)).collect()),
        None => None,
    };
    let lambda0 = file.lambda0.map(|v| Costate::from_vector(&v.into()));
    let config = RunConfig {
        mode,
        case,
        body,
        initial,
        target,
        steps,
        h,
        solver: solver(file.solver.as_ref(), file.seed)?,
        lambda0,
        controls,
        trajectory: file.trajectory.clone(),
        out,
        echo: ConfigFile { case: case.map(CaseSelection::One), out: None, ..file.clone() },
    };
    match mode {
        Mode::Solve => {
            config.problem()?;
        }
        Mode::Phase if config.trajectory.is_none() => {
            return Err(ConfigError::Validation("phase mode needs a trajectory path".into()));
        }
        _ => {}
    }
    Ok(config)
}
