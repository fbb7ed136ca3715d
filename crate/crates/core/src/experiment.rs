//! Experiment runner: config files, single runs, gain sweeps and the files
//! they leave on disk.
//!
//! A config is a flat `key = value` file with `[section]` markers:
//!
//! ```text
//! [graph]
//! path = pair_unbalanced.graph
//!
//! [game]
//! path = two_player.game
//!
//! [algorithm]
//! variant = adaptive            # balanced | nominal | adaptive
//! scaling = balance-corrected   # balance-corrected | inverse
//! alpha = auto:1.1              # a real, or auto:<margin> with margin > 1
//!
//! [integration]
//! step = 0.001
//! horizon = 30
//! record_every = 10
//! stop_tol = 0
//!
//! [initial]
//! z = default                   # default | seeded:<n> | 1 2; 3 4
//!
//! [output]
//! dir = out
//!
//! [sweep]
//! alphas = 5, 7, auto:2
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{
    convergence_report, estimator_error_of, lyapunov_value, ne_error_of, CertificateInputs, ConvergenceReport,
};
use crate::digraph::{orthogonal_split, DiGraph, GraphError, OrthogonalSplit, ScalingMode, SpectralData};
use crate::dynamics::{initial_state, min_gain, AlgorithmSpec, InitialZ, SeekingDynamics, Variant};
use crate::formats::{format_float, parse_game, parse_graph, parse_matrix, FormatError};
use crate::game::{GameConstants, GameError, QuadraticGame};
use crate::integrator::{consensus_error, integrate, IntegrationConfig, StopReason, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl ExperimentError {
    /// Machine-readable category: `validation`, `numerical` or `io`.
    pub fn category(&self) -> &'static str {
        match self {
            ExperimentError::Config { .. } | ExperimentError::Validation(_) => "validation",
            ExperimentError::Numerical(_) => "numerical",
            ExperimentError::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "validation" => EXIT_VALIDATION,
            "numerical" => EXIT_NUMERICAL,
            _ => EXIT_IO,
        }
    }

    fn io(path: &Path, err: impl fmt::Display) -> Self {
        ExperimentError::Io { path: path.to_path_buf(), message: err.to_string() }
    }
}

/// A fixed gain, or a margin over the gain threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainChoice {
    Fixed(f64),
    Auto(f64),
}

impl FromStr for GainChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(margin) = s.strip_prefix("auto:") {
            let m: f64 = margin.trim().parse().map_err(|_| format!("invalid margin `{margin}`"))?;
            if !(m > 1.0) || !m.is_finite() {
                return Err(format!("auto margin must exceed 1, got {m}"));
            }
            return Ok(GainChoice::Auto(m));
        }
        let a: f64 = s.parse().map_err(|_| format!("invalid gain `{s}` (expected a real or auto:<margin>)"))?;
        if !(a > 0.0) || !a.is_finite() {
            return Err(format!("gain must be positive, got {a}"));
        }
        Ok(GainChoice::Fixed(a))
    }
}

impl fmt::Display for GainChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainChoice::Fixed(a) => f.write_str(&format_float(*a)),
            GainChoice::Auto(m) => write!(f, "auto:{}", format_float(*m)),
        }
    }
}

/// Comma- or whitespace-separated gains.
pub fn parse_gain_list(text: &str) -> Result<Vec<GainChoice>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph_path: PathBuf,
    pub game_path: PathBuf,
    pub variant: Variant,
    pub scaling: ScalingMode,
    pub alpha: GainChoice,
    pub integration: IntegrationConfig,
    pub output_dir: PathBuf,
    pub initial_z: InitialZ,
    pub sweep_alphas: Vec<GainChoice>,
    /// Fraction of the snapshots used by the rate fit.
    pub tail_fraction: f64,
}

const KNOWN_KEYS: &[&str] = &[
    "graph.path",
    "game.path",
    "algorithm.variant",
    "algorithm.scaling",
    "algorithm.alpha",
    "integration.step",
    "integration.horizon",
    "integration.record_every",
    "integration.stop_tol",
    "initial.z",
    "output.dir",
    "sweep.alphas",
    "analysis.tail_fraction",
];

impl ExperimentConfig {
    /// Reads a config file; relative paths are taken from its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let entries = parse_entries(text)?;
        let get = |key: &str| entries.get(key).map(|(line, v)| (*line, v.as_str()));
        let required = |key: &str| {
            get(key).ok_or_else(|| ExperimentError::Config { line: 0, message: format!("missing key `{key}`") })
        };
        fn value<T: FromStr>(entry: Option<(usize, &str)>, default: T) -> Result<T, ExperimentError>
        where
            T::Err: fmt::Display,
        {
            match entry {
                None => Ok(default),
                Some((line, v)) => {
                    v.parse().map_err(|e: T::Err| ExperimentError::Config { line, message: e.to_string() })
                }
            }
        }

        let (_, graph) = required("graph.path")?;
        let (_, game) = required("game.path")?;
        let (variant_line, variant) = required("algorithm.variant")?;
        let variant: Variant =
            variant.parse().map_err(|message| ExperimentError::Config { line: variant_line, message })?;
        let defaults = IntegrationConfig::default();
        let integration = IntegrationConfig {
            step: value(get("integration.step"), defaults.step)?,
            horizon: value(get("integration.horizon"), defaults.horizon)?,
            record_every: value(get("integration.record_every"), defaults.record_every)?,
            stop_tol: value(get("integration.stop_tol"), defaults.stop_tol)?,
        };
        integration.validate().map_err(|e| ExperimentError::Validation(e.to_string()))?;
        let initial_z = match get("initial.z") {
            None => InitialZ::Spread,
            Some((line, v)) => parse_initial(v).map_err(|message| ExperimentError::Config { line, message })?,
        };
        let sweep_alphas = match get("sweep.alphas") {
            None => Vec::new(),
            Some((line, v)) => parse_gain_list(v).map_err(|message| ExperimentError::Config { line, message })?,
        };
        let tail_fraction: f64 = value(get("analysis.tail_fraction"), 0.5)?;
        if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
            return Err(ExperimentError::Validation(format!("tail_fraction must be in (0, 1], got {tail_fraction}")));
        }
        Ok(Self {
            graph_path: resolve_existing(base_dir, graph)?,
            game_path: resolve_existing(base_dir, game)?,
            variant,
            scaling: value(get("algorithm.scaling"), ScalingMode::default())?,
            alpha: value(get("algorithm.alpha"), GainChoice::Auto(1.1))?,
            integration,
            output_dir: base_dir.join(get("output.dir").map_or("out", |(_, v)| v)),
            initial_z,
            sweep_alphas,
            tail_fraction,
        })
    }

    /// The config as text, without the output directory and sweep list, so a
    /// run and a single-gain sweep row embed the same text.
    pub fn to_text(&self) -> String {
        format!(
            "[graph]\npath = {}\n[game]\npath = {}\n[algorithm]\nvariant = {}\nscaling = {}\nalpha = {}\n\
             [integration]\nstep = {}\nhorizon = {}\nrecord_every = {}\nstop_tol = {}\n\
             [initial]\nz = {}\n[analysis]\ntail_fraction = {}\n",
            self.graph_path.display(),
            self.game_path.display(),
            self.variant.as_str(),
            self.scaling.as_str(),
            self.alpha,
            format_float(self.integration.step),
            format_float(self.integration.horizon),
            self.integration.record_every,
            format_float(self.integration.stop_tol),
            initial_to_text(&self.initial_z),
            format_float(self.tail_fraction),
        )
    }
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, (usize, String)>, ExperimentError> {
    let mut section = String::new();
    let mut entries = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ExperimentError::Config {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = if section.is_empty() { key.trim().to_string() } else { format!("{section}.{}", key.trim()) };
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ExperimentError::Config { line, message: format!("unknown key `{key}`") });
        }
        if entries.insert(key.clone(), (line, value.trim().to_string())).is_some() {
            return Err(ExperimentError::Config { line, message: format!("duplicate key `{key}`") });
        }
    }
    Ok(entries)
}

fn resolve_existing(base: &Path, rel: &str) -> Result<PathBuf, ExperimentError> {
    let path = base.join(rel);
    fs::canonicalize(&path).map_err(|e| ExperimentError::io(&path, e))
}

fn parse_initial(text: &str) -> Result<InitialZ, String> {
    let text = text.trim();
    if text == "default" {
        return Ok(InitialZ::Spread);
    }
    if let Some(seed) = text.strip_prefix("seeded:") {
        return seed.trim().parse().map(InitialZ::Seeded).map_err(|_| format!("invalid seed `{seed}`"));
    }
    let z = parse_matrix(text)?;
    if !z.is_square() {
        return Err(format!("initial Z must be square, got {}x{}", z.nrows(), z.ncols()));
    }
    Ok(InitialZ::Explicit(z))
}

fn initial_to_text(init: &InitialZ) -> String {
    match init {
        InitialZ::Spread => "default".into(),
        InitialZ::Seeded(seed) => format!("seeded:{seed}"),
        InitialZ::Explicit(z) => z
            .row_iter()
            .map(|row| row.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

/// A validated graph and game with everything derived from them that does
/// not depend on the gain.
#[derive(Debug, Clone)]
pub struct Problem {
    pub graph: DiGraph,
    pub game: QuadraticGame,
    pub spectral: SpectralData,
    pub constants: GameConstants,
    pub z_star: DVector<f64>,
    pub split: OrthogonalSplit,
    pub z0: DMatrix<f64>,
}

fn read_file(path: &Path) -> Result<String, ExperimentError> {
    fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))
}

fn describe_format(what: &str, path: &Path, err: FormatError) -> ExperimentError {
    let message = match &err {
        FormatError::Game(GameError::NotStrictlyConvex { .. }) => {
            format!("game violates strict convexity of each cost in its own decision: {err}")
        }
        FormatError::Game(GameError::NotStronglyMonotone(_)) => {
            format!("game violates strong monotonicity of the pseudogradient: {err}")
        }
        _ => format!("{what} {}: {err}", path.display()),
    };
    ExperimentError::Validation(message)
}

fn graph_refusal(err: GraphError) -> ExperimentError {
    match err {
        GraphError::NotStronglyConnected => {
            ExperimentError::Validation("communication graph is not strongly connected".into())
        }
        other => ExperimentError::Validation(format!("communication graph: {other}")),
    }
}

/// Loads and checks the graph and game named by `config`.
pub fn load_problem(config: &ExperimentConfig) -> Result<Problem, ExperimentError> {
    let graph =
        parse_graph(&read_file(&config.graph_path)?).map_err(|e| describe_format("graph", &config.graph_path, e))?;
    let game = parse_game(&read_file(&config.game_path)?).map_err(|e| describe_format("game", &config.game_path, e))?;
    use crate::game::Game;
    if game.players() != graph.n() {
        return Err(ExperimentError::Validation(format!(
            "game has {} players but the graph has {} nodes",
            game.players(),
            graph.n()
        )));
    }
    if !graph.is_strongly_connected() {
        return Err(graph_refusal(GraphError::NotStronglyConnected));
    }
    let spectral = SpectralData::of(&graph).map_err(graph_refusal)?;
    if config.variant == Variant::Balanced && !spectral.balanced {
        return Err(ExperimentError::Validation(
            "the balanced variant requires a weight-balanced communication graph".into(),
        ));
    }
    let constants = game.constants().map_err(|e| ExperimentError::Validation(format!("game: {e}")))?;
    let z_star = game.nash_equilibrium().map_err(|e| ExperimentError::Validation(format!("game: {e}")))?;
    let z0 = config.initial_z.build(graph.n()).map_err(|e| ExperimentError::Validation(format!("initial Z: {e}")))?;
    Ok(Problem { split: orthogonal_split(graph.n()), graph, game, spectral, constants, z_star, z0 })
}

/// The connectivity eigenvalue entering the gain threshold, if defined:
/// `λ₂` for balanced runs, the scaled `λ'₂` under balance-corrected
/// scaling, none under the inverse scaling.
pub fn threshold_eigenvalue(problem: &Problem, variant: Variant, scaling: ScalingMode) -> Option<f64> {
    match (variant, scaling) {
        (Variant::Balanced, _) => problem.spectral.lambda2,
        (_, ScalingMode::BalanceCorrected) => Some(problem.spectral.lambda2_scaled),
        (_, ScalingMode::Inverse) => None,
    }
}

/// A problem with its gain fixed.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// The config with `alpha` replaced by the resolved value.
    pub config: ExperimentConfig,
    pub alpha: f64,
    pub lambda: Option<f64>,
    pub threshold: Option<f64>,
}

pub fn resolve(problem: &Problem, config: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let lambda = threshold_eigenvalue(problem, config.variant, config.scaling);
    let threshold = lambda.and_then(|l| min_gain(&problem.constants, l).ok());
    let alpha = match config.alpha {
        GainChoice::Fixed(a) => a,
        GainChoice::Auto(margin) => {
            let t = threshold.ok_or_else(|| {
                ExperimentError::Validation(
                    "auto gain needs a connectivity eigenvalue, which the inverse scaling does not provide".into(),
                )
            })?;
            t * margin
        }
    };
    let mut config = config.clone();
    config.alpha = GainChoice::Fixed(alpha);
    Ok(Prepared { config, alpha, lambda, threshold })
}

fn algorithm(problem: &Problem, prep: &Prepared) -> AlgorithmSpec {
    let c = &prep.config;
    match c.variant {
        Variant::Balanced => AlgorithmSpec::balanced(prep.alpha),
        Variant::NominalUnbalanced => AlgorithmSpec::nominal(prep.alpha, problem.spectral.xi.clone(), c.scaling),
        Variant::Adaptive => AlgorithmSpec::adaptive(prep.alpha, c.scaling),
    }
}

/// Result of integrating and analysing one prepared run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub alpha: f64,
    pub threshold: Option<f64>,
    pub trajectory: Trajectory,
    pub report: Option<ConvergenceReport>,
    /// 0 iff integration completed and, with a stopping tolerance, met it.
    pub exit_code: i32,
}

impl RunOutcome {
    pub fn failure(&self) -> Option<String> {
        match &self.trajectory.stop {
            StopReason::Failed(e) => Some(e.to_string()),
            StopReason::Horizon if self.exit_code != EXIT_OK => {
                Some("stopping tolerance not met by the horizon".into())
            }
            _ => None,
        }
    }
}

pub fn execute(problem: &Problem, prep: &Prepared) -> Result<RunOutcome, ExperimentError> {
    let spec = algorithm(problem, prep);
    let dynamics = SeekingDynamics::new(&problem.graph, &problem.game, spec)
        .map_err(|e| ExperimentError::Validation(e.to_string()))?;
    let state = initial_state(problem.graph.n(), Some(problem.z0.clone()), prep.config.variant == Variant::Adaptive);
    let trajectory = integrate(&dynamics, state, &prep.config.integration)
        .map_err(|e| ExperimentError::Validation(e.to_string()))?;
    let report = prep.lambda.and_then(|lambda2| {
        let inputs = CertificateInputs {
            constants: &problem.constants,
            alpha: prep.alpha,
            lambda2,
            z_star: &problem.z_star,
            split: &problem.split,
            xi: Some(&problem.spectral.xi),
            tail_fraction: prep.config.tail_fraction,
        };
        convergence_report(&trajectory, &inputs).ok()
    });
    let tolerance_ok = prep.config.integration.stop_tol == 0.0 || trajectory.stop == StopReason::Tolerance;
    let exit_code = if trajectory.completed() && tolerance_ok { EXIT_OK } else { EXIT_NUMERICAL };
    Ok(RunOutcome { alpha: prep.alpha, threshold: prep.threshold, trajectory, report, exit_code })
}

fn join_floats<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    values.into_iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(" ")
}

/// `# `-prefixed lines: the resolved config and the derived quantities.
pub fn provenance(problem: &Problem, prep: &Prepared) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), format_float);
    let c = &problem.constants;
    let mut text = format!("nashflow {}\n", env!("CARGO_PKG_VERSION"));
    text.push_str(&prep.config.to_text());
    text.push_str(&format!(
        "[derived]\nalpha = {}\nmin_gain = {}\nlambda2 = {}\nlambda2_scaled = {}\nxi = {}\n\
         mono_lower = {}\nlip_f = {}\nlip_ext_f = {}\nl = {}\nz_star = {}\n",
        format_float(prep.alpha),
        opt(prep.threshold),
        opt(problem.spectral.lambda2),
        format_float(problem.spectral.lambda2_scaled),
        join_floats(problem.spectral.xi.iter()),
        format_float(c.mono_lower),
        format_float(c.lip_f),
        format_float(c.lip_ext_f),
        format_float(c.l),
        join_floats(problem.z_star.iter()),
    ));
    text.lines().map(|l| format!("# {l}\n")).collect()
}

fn trajectory_header(n: usize, adaptive: bool) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    let matrix = |prefix: &'static str| (1..=n).flat_map(move |i| (1..=n).map(move |j| format!("{prefix}_{i}_{j}")));
    cols.extend(matrix("z"));
    if adaptive {
        cols.extend(matrix("xi"));
    }
    cols.extend(["V", "ne_error", "consensus_error", "estimator_error"].map(String::from));
    cols
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = String> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| format_float(m[(i, j)])))
}

fn create(path: &Path) -> Result<fs::File, ExperimentError> {
    fs::File::create(path).map_err(|e| ExperimentError::io(path, e))
}

pub fn write_trajectory(
    path: &Path,
    problem: &Problem,
    prep: &Prepared,
    traj: &Trajectory,
) -> Result<(), ExperimentError> {
    let mut file = create(path)?;
    file.write_all(provenance(problem, prep).as_bytes()).map_err(|e| ExperimentError::io(path, e))?;
    let adaptive = prep.config.variant == Variant::Adaptive;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| ExperimentError::io(path, e);
    w.write_record(trajectory_header(problem.graph.n(), adaptive)).map_err(io)?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let mut record = vec![format_float(*t)];
        record.extend(row_major(&state.z));
        if let Some(est) = state.xi.as_ref().filter(|_| adaptive) {
            record.extend(row_major(est));
        }
        record.push(format_float(lyapunov_value(&state.z, &problem.z_star, &problem.split)));
        record.push(format_float(ne_error_of(&state.z, &problem.z_star)));
        record.push(format_float(consensus_error(&state.z)));
        record.push(estimator_error_of(state.xi.as_ref(), &problem.spectral.xi).map_or_else(String::new, format_float));
        w.write_record(&record).map_err(io)?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

/// The `key = value` report of one run.
pub fn report_text(problem: &Problem, prep: &Prepared, outcome: &RunOutcome) -> String {
    let traj = &outcome.trajectory;
    let last = traj.last();
    let mut text = provenance(problem, prep);
    text.push_str(&format!(
        "exit_code = {}\nstop_reason = {}\nerror = {}\nfinal_time = {}\nsnapshots = {}\n",
        outcome.exit_code,
        traj.stop.as_str(),
        outcome.failure().unwrap_or_else(|| "none".into()),
        format_float(traj.final_time()),
        traj.len(),
    ));
    match &outcome.report {
        Some(report) => text.push_str(&report.to_key_values()),
        None => text.push_str(&format!(
            "final_ne_error = {}\nfinal_consensus_error = {}\ncertificate = n/a\n",
            format_float(ne_error_of(&last.z, &problem.z_star)),
            format_float(consensus_error(&last.z)),
        )),
    }
    text
}

fn write_run(dir: &Path, problem: &Problem, prep: &Prepared, outcome: &RunOutcome) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    write_trajectory(&dir.join("trajectory.csv"), problem, prep, &outcome.trajectory)?;
    let report = dir.join("report.txt");
    fs::write(&report, report_text(problem, prep, outcome)).map_err(|e| ExperimentError::io(&report, e))?;
    let resolved = dir.join("resolved.cfg");
    fs::write(&resolved, prep.config.to_text()).map_err(|e| ExperimentError::io(&resolved, e))
}

/// Runs `config` and writes `trajectory.csv`, `report.txt` and
/// `resolved.cfg` into its output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    let problem = load_problem(config)?;
    let prep = resolve(&problem, config)?;
    let outcome = execute(&problem, &prep)?;
    write_run(&config.output_dir, &problem, &prep, &outcome)?;
    Ok(outcome)
}

/// One gain of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub requested: GainChoice,
    pub dir: PathBuf,
    pub result: Result<RunOutcome, ExperimentError>,
}

impl SweepRow {
    pub fn exit_code(&self) -> i32 {
        match &self.result {
            Ok(outcome) => outcome.exit_code,
            Err(e) => e.exit_code(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub summary_path: PathBuf,
}

impl SweepOutcome {
    /// 0 when every row succeeded, otherwise the largest row code.
    pub fn exit_code(&self) -> i32 {
        self.rows.iter().map(SweepRow::exit_code).max().unwrap_or(EXIT_OK)
    }
}

const SUMMARY_COLUMNS: [&str; 13] = [
    "index",
    "requested_alpha",
    "alpha",
    "min_gain",
    "exit_code",
    "stop_reason",
    "final_ne_error",
    "final_consensus_error",
    "fitted_rate",
    "fit_quality",
    "certified_rate",
    "certificate",
    "error",
];

fn summary_record(row: &SweepRow, problem: &Problem) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or_else(String::new, format_float);
    let mut rec = vec![row.index.to_string(), row.requested.to_string()];
    match &row.result {
        Ok(o) => {
            let last = o.trajectory.last();
            let r = o.report.as_ref();
            rec.extend([
                format_float(o.alpha),
                opt(o.threshold),
                o.exit_code.to_string(),
                o.trajectory.stop.as_str().to_string(),
                format_float(ne_error_of(&last.z, &problem.z_star)),
                format_float(consensus_error(&last.z)),
                opt(r.map(|r| r.fitted_rate)),
                opt(r.map(|r| r.fit_quality)),
                opt(r.filter(|r| r.certificate_applicable).map(|r| r.certified_rate)),
                match r {
                    Some(r) if r.certificate_applicable => {
                        if r.certificate_passed() { "pass" } else { "fail" }.to_string()
                    }
                    _ => "n/a".to_string(),
                },
                o.failure().unwrap_or_default(),
            ]);
        }
        Err(e) => {
            rec.extend(std::iter::repeat_n(String::new(), 2));
            rec.push(e.exit_code().to_string());
            rec.extend(std::iter::repeat_n(String::new(), 7));
            rec.push(format!("{}: {e}", e.category()));
        }
    }
    rec
}

/// Runs one independent job per gain, in parallel. Row `k` writes into
/// `alpha_<kkk>/` under the output directory; `summary.csv` is assembled
/// once every row has finished.
pub fn sweep(config: &ExperimentConfig, alphas: &[GainChoice]) -> Result<SweepOutcome, ExperimentError> {
    if alphas.is_empty() {
        return Err(ExperimentError::Validation("sweep needs at least one gain".into()));
    }
    let problem = load_problem(config)?;
    let rows: Vec<SweepRow> = alphas
        .par_iter()
        .enumerate()
        .map(|(index, &requested)| {
            let dir = config.output_dir.join(format!("alpha_{index:03}"));
            let mut row_config = config.clone();
            row_config.alpha = requested;
            let result = resolve(&problem, &row_config).and_then(|prep| {
                let outcome = execute(&problem, &prep)?;
                write_run(&dir, &problem, &prep, &outcome)?;
                Ok(outcome)
            });
            SweepRow { index, requested, dir, result }
        })
        .collect();

    let summary_path = config.output_dir.join("summary.csv");
    let mut file = create(&summary_path)?;
    let mut header = format!("nashflow {}\n{}[sweep]\nalphas = ", env!("CARGO_PKG_VERSION"), config.to_text());
    header.push_str(&alphas.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", "));
    let header: String = header.lines().map(|l| format!("# {l}\n")).collect();
    file.write_all(header.as_bytes()).map_err(|e| ExperimentError::io(&summary_path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| ExperimentError::io(&summary_path, e);
    w.write_record(SUMMARY_COLUMNS).map_err(io)?;
    for row in &rows {
        w.write_record(summary_record(row, &problem)).map_err(io)?;
    }
    w.flush().map_err(|e| ExperimentError::io(&summary_path, e))?;
    Ok(SweepOutcome { rows, summary_path })
}

/// Graph and game diagnostics without integrating.
pub fn inspect(config: &ExperimentConfig) -> Result<String, ExperimentError> {
    let graph =
        parse_graph(&read_file(&config.graph_path)?).map_err(|e| describe_format("graph", &config.graph_path, e))?;
    let game = parse_game(&read_file(&config.game_path)?).map_err(|e| describe_format("game", &config.game_path, e))?;
    let mut out = format!(
        "nodes = {}\nstrongly_connected = {}\nweight_balanced = {}\n",
        graph.n(),
        graph.is_strongly_connected(),
        graph.is_weight_balanced(crate::digraph::DEFAULT_TOL)
    );
    let spectral = SpectralData::of(&graph).ok();
    if let Some(s) = &spectral {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), format_float);
        out.push_str(&format!(
            "lambda2 = {}\nlambda_n = {}\nxi = {}\nlambda2_scaled = {}\nlambda_n_scaled = {}\n",
            opt(s.lambda2),
            opt(s.lambda_n),
            join_floats(s.xi.iter()),
            format_float(s.lambda2_scaled),
            format_float(s.lambda_n_scaled)
        ));
    }
    let constants = match game.constants() {
        Ok(c) => c,
        Err(e) => {
            out.push_str(&format!("game_error = {e}\n"));
            return Ok(out);
        }
    };
    out.push_str(&format!(
        "mono_lower = {}\nlip_f = {}\nlip_ext_f = {}\nl = {}\n",
        format_float(constants.mono_lower),
        format_float(constants.lip_f),
        format_float(constants.lip_ext_f),
        format_float(constants.l)
    ));
    if let Ok(z) = game.nash_equilibrium() {
        out.push_str(&format!("z_star = {}\n", join_floats(z.iter())));
    }
    if let Some(s) = &spectral {
        if let Some(l2) = s.lambda2 {
            out.push_str(&format!(
                "min_gain_balanced = {}\n",
                format_float(min_gain(&constants, l2).unwrap_or(f64::NAN))
            ));
        }
        out.push_str(&format!(
            "min_gain_scaled = {}\n",
            format_float(min_gain(&constants, s.lambda2_scaled).unwrap_or(f64::NAN))
        ));
    }
    Ok(out)
}
