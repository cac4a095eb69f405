//! The `tess-lab` command line: configuration parsing, subcommand dispatch
//! and artifact emission.
//!
//! A run is described by a JSON [`RunConfig`], given as a file path or as
//! inline text to `--config`. Every run writes `manifest.json` next to its
//! outputs; the manifest holds the fully resolved configuration and can be
//! passed back to `--config` to reproduce the run.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand as ClapSubcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tesslab_core::rng::purpose;
use tesslab_core::stats::{KSResult, SummaryStats};
use tesslab_core::{
    sample_guarded, tessellate, CellShape, Error, EstimateResult, Exclusion,
};

use crate::io;
use crate::mcengine::{
    agreement, certified_estimate, clt_with_guard, default_r_max, diameter_tail_experiment,
    estimate_sigma2, resolve_guard, run_estimator, run_oracle, Agreement, ExperimentConfig,
    GuardResolution, GuardSpec, PILOT_SAMPLES, TYPICAL_HALF_SIDE,
};

pub const MANIFEST_VERSION: u32 = 1;
pub const TOOL: &str = "tess-lab";
const HISTOGRAM_BINS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ClapSubcommand)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    /// Sample the marked Poisson process on the guarded window.
    Sample,
    /// Sample and tessellate; writes every cell to cells.json.
    Tessellate,
    /// One estimate on one sample, with its ledger.
    Estimate,
    /// Replicated estimates at every window volume.
    Experiment,
    /// Monte Carlo estimate of the asymptotic variance constant.
    Sigma2,
    /// Cone-bound tails and circumradius containment of typical cells.
    Tails,
    /// Kolmogorov-Smirnov test of the standardized estimates.
    Clt,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Sample => "sample",
            Subcommand::Tessellate => "tessellate",
            Subcommand::Estimate => "estimate",
            Subcommand::Experiment => "experiment",
            Subcommand::Sigma2 => "sigma2",
            Subcommand::Tails => "tails",
            Subcommand::Clt => "clt",
        }
    }
}

fn default_n_singles() -> usize {
    10_000
}

fn default_n_pairs() -> usize {
    20_000
}

fn default_pilot() -> usize {
    PILOT_SAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sigma2Options {
    /// Truncation radius of the covariance integral; a pilot picks it when
    /// absent.
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default = "default_n_singles")]
    pub n_singles: usize,
    #[serde(default = "default_n_pairs")]
    pub n_pairs: usize,
    /// Initial half-side of the samples around the inserted points.
    #[serde(default)]
    pub guard: Option<f64>,
    #[serde(default = "default_pilot")]
    pub pilot: usize,
}

impl Default for Sigma2Options {
    fn default() -> Self {
        Sigma2Options {
            r_max: None,
            n_singles: default_n_singles(),
            n_pairs: default_n_pairs(),
            guard: None,
            pilot: default_pilot(),
        }
    }
}

fn default_tail_n() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailOptions {
    #[serde(default = "default_tail_n")]
    pub n: usize,
}

impl Default for TailOptions {
    fn default() -> Self {
        TailOptions { n: default_tail_n() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltOptions {
    /// Window volume of the test; the largest of `lambda_values` when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("tesslab-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the subcommand on the command line when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<Subcommand>,
    pub experiment: ExperimentConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_ledger: bool,
    #[serde(default)]
    pub emit_cells: bool,
    #[serde(default)]
    pub sigma2: Sigma2Options,
    #[serde(default)]
    pub tails: TailOptions,
    #[serde(default)]
    pub clt: CltOptions,
}

/// One random stream family of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamInfo {
    pub purpose: String,
    pub tag: u16,
    pub index: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master_seed: u64,
    pub streams: Vec<StreamInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub version: String,
    pub subcommand: Subcommand,
    /// The resolved configuration: fixed guard, fixed `r_max`, explicit seed.
    pub config: RunConfig,
    pub guard_resolution: Option<GuardResolution>,
    pub seeds: Seeds,
}

fn streams_for(sub: Subcommand) -> Vec<StreamInfo> {
    let s = |name: &str, tag: u16, index: &str| StreamInfo {
        purpose: name.into(),
        tag,
        index: index.into(),
    };
    let pilot = s("pilot", purpose::PILOT, "sample");
    match sub {
        Subcommand::Sample | Subcommand::Tessellate => vec![pilot, s("sample", purpose::SAMPLE, "0")],
        Subcommand::Estimate | Subcommand::Experiment | Subcommand::Clt => vec![
            pilot,
            s("estimator", purpose::ESTIMATOR, "(lambda_index << 32) | replication"),
            s("oracle", purpose::ORACLE, "sample (exact) or (lambda_index << 32) | sample (raster)"),
            s("bootstrap", purpose::BOOTSTRAP, "resample"),
        ],
        Subcommand::Sigma2 => vec![
            pilot,
            s("sigma2_single", purpose::SIGMA2_SINGLE, "sample"),
            s("sigma2_pair", purpose::SIGMA2_PAIR, "sample"),
        ],
        Subcommand::Tails => vec![s("tail", purpose::TAIL, "sample")],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Parse,
    Validation,
    NotStabilized,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(&self) -> i32 {
        match self {
            ErrorKind::Parse => 2,
            ErrorKind::Validation => 3,
            ErrorKind::NotStabilized => 4,
            ErrorKind::Numerical => 5,
        }
    }
}

/// A failed run, reported as JSON on stderr and in `error.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub exit_code: i32,
    pub message: String,
    /// Dotted path of the offending configuration field.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            exit_code: kind.exit_code(),
            message: message.into(),
            field: None,
        }
    }

    fn with_field(mut self, field: String) -> Self {
        self.field = Some(field);
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&json!({ "error": self })).expect("error serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(p) => write!(f, "{} (field `{p}`)", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::InvalidParameter(_) => ErrorKind::Validation,
            Error::GuardTooSmall { .. } | Error::NotStabilized(_) => ErrorKind::NotStabilized,
            Error::DegenerateInput(_) | Error::DegenerateSample(_) => ErrorKind::Numerical,
        };
        CliError::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ErrorKind::Numerical, format!("io: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn parse_error<E: fmt::Display>(e: serde_path_to_error::Error<E>) -> CliError {
    let path = e.path().to_string();
    let err = CliError::new(ErrorKind::Parse, e.inner().to_string());
    if path == "." {
        err
    } else {
        err.with_field(path)
    }
}

/// A run configuration, and the manifest it came from if it was one.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub manifest: Option<Manifest>,
}

/// Parses a run configuration or a manifest from JSON text.
pub fn parse_config(text: &str) -> CliResult<LoadedConfig> {
    let is_manifest = matches!(
        serde_json::from_str::<serde_json::Value>(text),
        Ok(serde_json::Value::Object(ref m)) if m.contains_key("manifest_version")
    );
    let de = &mut serde_json::Deserializer::from_str(text);
    if is_manifest {
        let m: Manifest = serde_path_to_error::deserialize(de).map_err(parse_error)?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(CliError::new(
                ErrorKind::Validation,
                format!("unsupported manifest version {}", m.manifest_version),
            )
            .with_field("manifest_version".into()));
        }
        Ok(LoadedConfig {
            config: m.config.clone(),
            manifest: Some(m),
        })
    } else {
        let config = serde_path_to_error::deserialize(de).map_err(parse_error)?;
        Ok(LoadedConfig { config, manifest: None })
    }
}

/// Reads `source` as inline JSON when it starts with `{`, as a path
/// otherwise.
pub fn load_config(source: &str) -> CliResult<LoadedConfig> {
    if source.trim_start().starts_with('{') {
        parse_config(source)
    } else {
        let text = fs::read_to_string(source)
            .map_err(|e| CliError::new(ErrorKind::Parse, format!("cannot read config {source}: {e}")))?;
        parse_config(&text)
    }
}

#[derive(Debug, Parser)]
#[command(name = "tess-lab", version, about = "Minus-sampling estimators on random weighted Voronoi tessellations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Subcommand,
    /// Run configuration or manifest: a path, or inline JSON.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory of the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "TESSLAB_THREADS")]
    pub threads: Option<usize>,
}

/// Parses the arguments, runs, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { ErrorKind::Parse.exit_code() } else { 0 };
            let _ = e.print();
            code
        }
    }
}

/// Runs one subcommand. Errors are printed to stderr as JSON and written to
/// `error.json` in the output directory when it can be created.
pub fn run(cli: &Cli) -> i32 {
    let mut out_dir = cli.out.clone();
    let result = prepare(cli).and_then(|cfg| {
        out_dir = Some(cfg.output_dir.clone());
        execute_with_threads(cli.command, &cfg, cli.threads)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            if let Some(dir) = out_dir {
                if fs::create_dir_all(&dir).is_ok() {
                    let _ = fs::write(dir.join("error.json"), e.to_json() + "\n");
                }
            }
            e.exit_code
        }
    }
}

fn prepare(cli: &Cli) -> CliResult<RunConfig> {
    let source = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::new(ErrorKind::Parse, "no configuration given; pass --config").with_field("config".into()))?;
    let mut cfg = load_config(source)?.config;
    if let Some(sub) = cfg.subcommand {
        if sub != cli.command {
            return Err(CliError::new(
                ErrorKind::Validation,
                format!("configuration is for `{}` but `{}` was requested", sub.name(), cli.command.name()),
            )
            .with_field("subcommand".into()));
        }
    }
    if let Some(seed) = cli.seed {
        cfg.experiment.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn execute_with_threads(sub: Subcommand, cfg: &RunConfig, threads: Option<usize>) -> CliResult<()> {
    match threads {
        Some(0) => Err(CliError::new(ErrorKind::Validation, "threads must be at least 1").with_field("threads".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::new(ErrorKind::Numerical, format!("thread pool: {e}")))?;
            pool.install(|| execute(sub, cfg))
        }
        None => execute(sub, cfg),
    }
}

fn validation(field: &str, message: String) -> CliError {
    CliError::new(ErrorKind::Validation, message).with_field(field.into())
}

fn validate(sub: Subcommand, cfg: &RunConfig) -> CliResult<()> {
    cfg.experiment
        .validate()
        .map_err(|e| CliError::from(e).with_field("experiment".into()))?;
    match sub {
        Subcommand::Sigma2 => {
            let s = &cfg.sigma2;
            if let Some(r) = s.r_max {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(validation("sigma2.r_max", format!("r_max must be positive, got {r}")));
                }
            }
            if let Some(g) = s.guard {
                if !(g > 0.0 && g.is_finite()) {
                    return Err(validation("sigma2.guard", format!("guard must be positive, got {g}")));
                }
            }
            if s.r_max.is_none() && s.pilot < 1000 {
                return Err(validation("sigma2.pilot", format!("pilot must be at least 1000, got {}", s.pilot)));
            }
        }
        Subcommand::Clt => {
            if let Some(l) = cfg.clt.lambda {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(validation("clt.lambda", format!("lambda must be positive, got {l}")));
                }
            }
        }
        _ => {}
    }
    Ok(())
}

fn needs_guard(sub: Subcommand) -> bool {
    !matches!(sub, Subcommand::Sigma2 | Subcommand::Tails)
}

/// Validates, resolves every automatic choice, writes the manifest and runs.
pub fn execute(sub: Subcommand, cfg: &RunConfig) -> CliResult<()> {
    validate(sub, cfg)?;
    let mut resolved = cfg.clone();
    resolved.subcommand = Some(sub);
    let e = &cfg.experiment;
    let guard_resolution = if needs_guard(sub) {
        let g = resolve_guard(e)?;
        resolved.experiment.guard = GuardSpec::Fixed(g.guard);
        Some(g)
    } else {
        None
    };
    if sub == Subcommand::Sigma2 && cfg.sigma2.r_max.is_none() {
        resolved.sigma2.r_max = Some(default_r_max(&e.cell_model(), cfg.sigma2.pilot, e.master_seed)?);
    }
    if sub == Subcommand::Clt && cfg.clt.lambda.is_none() {
        resolved.clt.lambda = e.lambda_values.last().copied();
    }
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: sub,
        config: resolved.clone(),
        guard_resolution,
        seeds: Seeds {
            master_seed: e.master_seed,
            streams: streams_for(sub),
        },
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    let guard = guard_resolution.map(|g| g.guard);
    match sub {
        Subcommand::Sample => cmd_sample(&resolved, guard.unwrap_or(0.0), dir),
        Subcommand::Tessellate => cmd_tessellate(&resolved, guard.unwrap_or(0.0), dir),
        Subcommand::Estimate => cmd_estimate(&resolved, guard.unwrap_or(0.0), dir),
        Subcommand::Experiment => cmd_experiment(&resolved, guard.unwrap_or(0.0), guard_resolution, dir),
        Subcommand::Sigma2 => cmd_sigma2(&resolved, dir),
        Subcommand::Tails => cmd_tails(&resolved, dir),
        Subcommand::Clt => cmd_clt(&resolved, guard.unwrap_or(0.0), guard_resolution, dir),
    }
}

fn cmd_sample(cfg: &RunConfig, guard: f64, dir: &Path) -> CliResult<()> {
    let e = &cfg.experiment;
    let window = e.window(e.lambda_values[0])?;
    let points = sample_guarded(&window, guard, e.intensity, &e.mark_dist, e.master_seed)?;
    io::write_points(&dir.join("points.csv"), &points)?;
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "lambda": e.lambda_values[0],
            "window": window,
            "carrier": points.carrier(),
            "guard": guard,
            "n_points": points.len(),
        }),
    )?;
    Ok(())
}

fn cmd_tessellate(cfg: &RunConfig, guard: f64, dir: &Path) -> CliResult<()> {
    let e = &cfg.experiment;
    let window = e.window(e.lambda_values[0])?;
    let points = sample_guarded(&window, guard, e.intensity, &e.mark_dist, e.master_seed)?;
    let cells = tessellate(&points, &window, e.model, e.kernel)?;
    io::write_points(&dir.join("points.csv"), &points)?;
    let records: Vec<io::CellRecord> = cells.iter().map(io::cell_record).collect();
    io::write_json(&dir.join("cells.json"), &records)?;
    let count = |f: fn(&CellShape) -> bool| cells.iter().filter(|c| f(&c.shape)).count();
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "lambda": e.lambda_values[0],
            "window": window,
            "carrier": points.carrier(),
            "guard": guard,
            "n_points": points.len(),
            "n_cells": cells.len(),
            "n_polygon": count(|s| matches!(s, CellShape::Polygon(_))),
            "n_raster": count(|s| matches!(s, CellShape::Raster(_))),
            "n_empty": count(|s| matches!(s, CellShape::Empty)),
            "n_unbounded": count(|s| matches!(s, CellShape::Unbounded)),
        }),
    )?;
    Ok(())
}

fn exclusion_counts(r: &EstimateResult) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for reason in [
        Exclusion::OutOfReach,
        Exclusion::EmptyCell,
        Exclusion::NotContained,
        Exclusion::BelowHalfWindow,
    ] {
        m.insert(reason.name().into(), json!(r.n_excluded(reason)));
    }
    serde_json::Value::Object(m)
}

fn cmd_estimate(cfg: &RunConfig, guard: f64, dir: &Path) -> CliResult<()> {
    let e = &cfg.experiment;
    let lambda = e.lambda_values[0];
    let est = certified_estimate(e, guard, lambda, 0, &[e.characteristic], e.kind)?;
    let r = &est.results[0];
    io::write_points(&dir.join("points.csv"), &est.config)?;
    if cfg.emit_ledger {
        io::write_ledger(&dir.join("ledger.csv"), r)?;
    }
    if cfg.emit_cells {
        let cells = tessellate(&est.config, &est.window, e.model, e.kernel)?;
        let records: Vec<io::CellRecord> = cells.iter().map(io::cell_record).collect();
        io::write_json(&dir.join("cells.json"), &records)?;
    }
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "characteristic": e.characteristic,
            "kind": e.kind,
            "lambda": lambda,
            "window": est.window,
            "value": r.value,
            "n_points": est.config.len(),
            "n_cells_included": r.n_included(),
            "n_cells_excluded": exclusion_counts(r),
            "guard_initial": guard,
            "guard_final": est.guard,
            "n_unbounded": est.extensions,
        }),
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct LambdaSummary {
    lambda: f64,
    stats: SummaryStats,
    moment_p: f64,
    empirical_moment_p: f64,
    n_cells_included: usize,
    n_cells_excluded_threshold: usize,
    n_unbounded: usize,
    /// Ratio of `lambda Var` to that of the previous window volume.
    lambda_var_ratio: Option<f64>,
    oracle: Option<Agreement>,
}

fn moment(values: &[f64], p: f64) -> f64 {
    values.iter().map(|v| v.abs().powf(p)).sum::<f64>() / values.len() as f64
}

fn cmd_experiment(cfg: &RunConfig, guard: f64, resolution: Option<GuardResolution>, dir: &Path) -> CliResult<()> {
    let e = &cfg.experiment;
    let hs = [e.characteristic];
    let mut rows = Vec::new();
    let mut summaries: Vec<LambdaSummary> = Vec::new();
    let mut oracle_rejected = 0;
    let mut last_values = Vec::new();
    for (i, &lambda) in e.lambda_values.iter().enumerate() {
        let run = run_estimator(e, guard, lambda, i, &hs, e.kind)?;
        let seed = e.master_seed.wrapping_add(i as u64);
        let stats = run.summary(0, seed)?;
        let values = run.values(0);
        let oracle = match e.oracle_replications {
            Some(n) => {
                let o = run_oracle(e, lambda, i, &hs, n)?;
                oracle_rejected += o.rejected;
                Some(agreement(&run, &o, 0, e.moment_p, seed)?)
            }
            None => None,
        };
        summaries.push(LambdaSummary {
            lambda,
            stats,
            moment_p: e.moment_p,
            empirical_moment_p: moment(&values, e.moment_p),
            n_cells_included: run.replicates.iter().map(|r| r.n_cells_included).sum(),
            n_cells_excluded_threshold: run.replicates.iter().map(|r| r.n_cells_excluded_threshold).sum(),
            n_unbounded: run.total_extensions(),
            lambda_var_ratio: summaries.last().map(|p| stats.lambda_var / p.stats.lambda_var),
            oracle,
        });
        rows.extend(run.replicates);
        last_values = values;
    }
    io::write_replications(&dir.join("replications.csv"), &rows, 0)?;
    io::write_histogram(&dir.join("histogram.csv"), &last_values, HISTOGRAM_BINS)?;
    io::write_qq(&dir.join("qq.csv"), &last_values)?;
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "characteristic": e.characteristic,
            "kind": e.kind,
            "replications": e.replications,
            "guard": guard,
            "guard_resolution": resolution,
            "n_unbounded": rows.iter().map(|r| r.n_unbounded).sum::<usize>(),
            "oracle_rejected": oracle_rejected,
            "lambdas": summaries,
        }),
    )?;
    Ok(())
}

fn cmd_sigma2(cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    let e = &cfg.experiment;
    let cm = e.cell_model();
    let s = &cfg.sigma2;
    let r_max = s.r_max.expect("resolved before dispatch");
    let guard = s.guard.unwrap_or(TYPICAL_HALF_SIDE * cm.scale());
    let est = estimate_sigma2(&cm, &e.characteristic, guard, r_max, s.n_singles, s.n_pairs, e.master_seed)?;
    io::write_annuli(&dir.join("annuli.csv"), &est.annuli)?;
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "characteristic": e.characteristic,
            "sigma2": est.sigma2,
            "stderr": est.stderr,
            "term1": est.term1,
            "term1_stderr": est.term1_stderr,
            "term2": est.term2,
            "term2_stderr": est.term2_stderr,
            "mean_score": est.mean_score,
            "r_max": est.r_max,
            "guard": guard,
            "n_singles": est.n_singles,
            "n_pairs": est.n_pairs,
            "rejected": est.rejected,
        }),
    )?;
    Ok(())
}

fn cmd_tails(cfg: &RunConfig, dir: &Path) -> CliResult<()> {
    let e = &cfg.experiment;
    let report = diameter_tail_experiment(&e.cell_model(), cfg.tails.n, e.master_seed)?;
    io::write_tail_samples(&dir.join("tails.csv"), &report.samples)?;
    io::write_tail_curve(&dir.join("tail_curve.csv"), &report.fit)?;
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "n": cfg.tails.n,
            "rejected": report.rejected,
            "containment_violations": report.containment_violations,
            "fitted_rate": report.fit.fitted_rate,
            "intercept": report.fit.intercept,
            "r_squared": report.fit.r_squared,
            "fitted_exponent_alpha": report.fit.fitted_exponent_alpha,
            "free_r_squared": report.fit.free_r_squared,
        }),
    )?;
    Ok(())
}

fn ks_json(ks: &KSResult) -> serde_json::Value {
    json!({ "statistic": ks.statistic, "p_value": ks.p_value, "n": ks.n })
}

fn cmd_clt(cfg: &RunConfig, guard: f64, resolution: Option<GuardResolution>, dir: &Path) -> CliResult<()> {
    let e = &cfg.experiment;
    let lambda = cfg.clt.lambda.expect("resolved before dispatch");
    let r = clt_with_guard(e, guard, lambda)?;
    io::write_replications(&dir.join("replications.csv"), &r.run.replicates, 0)?;
    io::write_values(&dir.join("standardized.csv"), "z", &r.standardized)?;
    io::write_histogram(&dir.join("histogram.csv"), &r.standardized, HISTOGRAM_BINS)?;
    io::write_qq(&dir.join("qq.csv"), &r.standardized)?;
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "characteristic": e.characteristic,
            "kind": e.kind,
            "lambda": lambda,
            "replications": e.replications,
            "guard": guard,
            "guard_resolution": resolution,
            "sample_mean": r.sample_mean,
            "scaled_sd": r.scaled_sd,
            "ks": ks_json(&r.ks),
            "oracle_mean": r.oracle_mean,
            "ks_oracle_centered": r.ks_oracle_centered.as_ref().map(ks_json),
            "n_unbounded": r.run.total_extensions(),
        }),
    )?;
    Ok(())
}
