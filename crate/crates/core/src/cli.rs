//! Command-line front end: config loading with environment overrides, the
//! pipeline subcommands and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::controller::ControllerConfig;
use crate::doe::{self, case_metrics, DoeGrid, DoeModel, DoeSpec};
use crate::envgen::{case_seed, LoadCaseSpec};
use crate::error::{Error, Result};
use crate::lpvfit::{fit_lpv, FitConfig};
use crate::lpvsim::LpvModel;
use crate::metrics;
use crate::pipeline::{generate_dataset, validate_cases, Candidate, ComparisonRow, DataSpec};
use crate::refplant::{environment, PlantParams};
use crate::subspace::{fit_subspace_records, DiscreteLtiModel, SubspaceOptions};
use crate::timeseries::{Dataset, SimulationRecord};

/// Prefix of environment variables that override config keys. Nested keys
/// are joined with `__`, e.g. `LPV_DFSM_FIT__POPULATION=20`.
pub const ENV_PREFIX: &str = "LPV_DFSM_";

#[derive(Debug, Parser)]
#[command(name = "lpv-dfsm", version, about = "LPV derivative-function surrogate models for floating wind turbines")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate the truth plant over the seed × wind-speed grid.
    GenerateData,
    /// Fit the LPV surrogate to a dataset.
    Fit {
        /// Dataset directory written by `generate-data`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Closed-loop simulation of load cases with the surrogate or truth plant.
    Simulate {
        /// Surrogate model; the truth plant is used when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// JSON array of load cases; defaults to the config's `simulate` section.
        #[arg(long)]
        loadcases: Option<PathBuf>,
    },
    /// Compare models with the truth plant on held-out seeds.
    Validate {
        /// Dataset directory written by `generate-data`.
        #[arg(long)]
        data: PathBuf,
        /// Model file written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Also identify and compare the subspace baseline.
        #[arg(long)]
        subspace: bool,
    },
    /// Fatigue, power and channel statistics of simulation records.
    Metrics {
        /// Record files or directories of record files.
        #[arg(long, required = true, num_args = 1..)]
        records: Vec<PathBuf>,
    },
    /// Full-factorial controller-tuning study.
    Doe {
        /// Surrogate model; the truth plant is used when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Grid levels as `N_OMEGA,N_ZETA`.
        #[arg(long, value_parser = parse_levels)]
        grid: Option<[usize; 2]>,
    },
}

fn parse_levels(s: &str) -> std::result::Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split([',', 'x']).collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.trim().parse().map_err(|e| format!("{e}"))?,
            b.trim().parse().map_err(|e| format!("{e}"))?,
        ]),
        _ => Err(format!("expected N,M, got `{s}`")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationSpec {
    /// Wind-speed column of the dataset used for the comparison.
    pub w_bar: f64,
    pub trim_start: f64,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        Self {
            w_bar: 14.0,
            trim_start: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSpec {
    pub wind_speeds: Vec<f64>,
    pub n_seeds: usize,
    pub trim_start: f64,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            wind_speeds: vec![14.0],
            n_seeds: 1,
            trim_start: 60.0,
        }
    }
}

/// Everything a run needs. The root `seed` is copied into every section that
/// draws random numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub plant: PlantParams,
    /// Derived from `plant` and `data.x_c` when absent.
    pub controller: Option<ControllerConfig>,
    pub data: DataSpec,
    pub fit: FitConfig,
    pub subspace: SubspaceOptions,
    pub validation: ValidationSpec,
    pub simulate: SimulateSpec,
    pub doe: DoeSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            plant: PlantParams::default(),
            controller: None,
            data: DataSpec::default(),
            fit: FitConfig::default(),
            subspace: SubspaceOptions {
                detrend: true,
                ..SubspaceOptions::default()
            },
            validation: ValidationSpec::default(),
            simulate: SimulateSpec::default(),
            doe: DoeSpec::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, overlaid by the config file, overlaid by environment
    /// variables, then by command-line flags.
    pub fn load(path: Option<&Path>, env: &[(String, String)], global: &GlobalArgs) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::default())?;
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: Value = serde_json::from_str(&text)?;
            merge(&mut tree, file);
        }
        apply_env_overrides(&mut tree, env)?;
        let mut cfg: Self = serde_json::from_value(tree)?;
        if let Some(seed) = global.seed {
            cfg.seed = seed;
        }
        if global.workers.is_some() {
            cfg.workers = global.workers;
        }
        cfg.data.root_seed = cfg.seed;
        cfg.doe.root_seed = cfg.seed;
        cfg.fit.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn controller(&self) -> ControllerConfig {
        self.controller
            .clone()
            .unwrap_or_else(|| ControllerConfig::for_plant(&self.plant, self.data.x_c))
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `PREFIX` variables to the config tree. Values are parsed as JSON
/// and fall back to plain strings.
pub fn apply_env_overrides(tree: &mut Value, env: &[(String, String)]) -> Result<()> {
    for (key, raw) in env {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let path: Vec<String> = rest.split("__").map(str::to_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(Error::InvalidArgument(format!("malformed override `{key}`")));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        let mut node = &mut *tree;
        for part in &path {
            if !node.is_object() {
                *node = Value::Object(Default::default());
            }
            node = node
                .as_object_mut()
                .expect("object")
                .entry(part.clone())
                .or_insert(Value::Null);
        }
        *node = value;
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hash of a file, or of a directory's files in name order.
pub fn sha256_path(path: &Path) -> Result<String> {
    if !path.is_dir() {
        return sha256_file(path);
    }
    let mut names: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap_or_default().as_encoded_bytes());
        h.update(sha256_file(&p)?.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub config: RunConfig,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub timings: BTreeMap<String, f64>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Warns when an input differs from the hash recorded by the run that
/// produced it.
fn check_recorded_hash(input: &Path, hash: &str) {
    let Ok(abs) = input.canonicalize() else { return };
    for dir in abs.ancestors().skip(1).take(2) {
        let Ok(text) = fs::read_to_string(dir.join(MANIFEST_FILE)) else {
            continue;
        };
        let Ok(m) = serde_json::from_str::<RunManifest>(&text) else {
            continue;
        };
        for out in &m.outputs {
            if dir.join(&out.path) == abs && out.sha256 != hash {
                log::warn!("{} changed since it was written (hash mismatch)", input.display());
            }
        }
    }
}

struct Run {
    command: &'static str,
    cfg: RunConfig,
    out: PathBuf,
    inputs: Vec<FileHash>,
    outputs: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

impl Run {
    fn input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::InvalidArgument(format!("missing input {}", path.display())));
        }
        let sha256 = sha256_path(path)?;
        check_recorded_hash(path, &sha256);
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let clock = Instant::now();
        let r = f();
        self.timings.insert(name.into(), clock.elapsed().as_secs_f64());
        r
    }

    fn finish(mut self) -> Result<()> {
        self.timings.insert("total_s".into(), self.clock.elapsed().as_secs_f64());
        let outputs = self
            .outputs
            .iter()
            .map(|p| {
                Ok(FileHash {
                    path: p.strip_prefix(&self.out).unwrap_or(p).display().to_string(),
                    sha256: sha256_path(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.cfg.seed,
            workers: rayon::current_num_threads(),
            config: self.cfg,
            inputs: self.inputs,
            outputs,
            timings: self.timings,
        };
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    fs::write(path, csv_string(rows)?).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let env: Vec<(String, String)> = std::env::vars().collect();
    match run(&cli, &env) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Executes one parsed command with the given environment variables.
pub fn run(cli: &Cli, env: &[(String, String)]) -> Result<()> {
    let cfg = RunConfig::load(cli.global.config.as_deref(), env, &cli.global)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    fs::create_dir_all(&cli.global.out).map_err(|e| Error::io(&cli.global.out, e))?;
    let command = match &cli.command {
        Command::GenerateData => "generate-data",
        Command::Fit { .. } => "fit",
        Command::Simulate { .. } => "simulate",
        Command::Validate { .. } => "validate",
        Command::Metrics { .. } => "metrics",
        Command::Doe { .. } => "doe",
    };
    let mut run = Run {
        command,
        cfg,
        out: cli.global.out.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        timings: BTreeMap::new(),
        clock: Instant::now(),
    };
    if let Some(path) = &cli.global.config {
        run.input(path)?;
    }
    pool.install(|| match &cli.command {
        Command::GenerateData => cmd_generate_data(&mut run),
        Command::Fit { data } => cmd_fit(&mut run, data),
        Command::Simulate { model, loadcases } => {
            cmd_simulate(&mut run, model.as_deref(), loadcases.as_deref())
        }
        Command::Validate {
            data,
            model,
            subspace,
        } => cmd_validate(&mut run, data, model, *subspace),
        Command::Metrics { records } => cmd_metrics(&mut run, records),
        Command::Doe { model, grid } => cmd_doe(&mut run, model.as_deref(), *grid),
    })?;
    run.finish()
}

fn cmd_generate_data(run: &mut Run) -> Result<()> {
    let ctrl = run.cfg.controller();
    let cfg = run.cfg.clone();
    let dataset = run.time("simulate_s", || generate_dataset(&cfg.data, &ctrl, &cfg.plant))?;
    let dir = run.path("dataset");
    dataset.write_dir(&dir)?;
    println!(
        "{} records ({} seeds × {} wind speeds), mean wind speed per cell:",
        dataset.n_seeds() * dataset.n_columns(),
        dataset.n_seeds(),
        dataset.n_columns()
    );
    print!("{}", dataset.layout());
    Ok(())
}

/// One row of `fit.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub column: usize,
    pub w_anchor: f64,
    pub center: bool,
    pub stability_margin: f64,
    pub objective: f64,
    pub ls_objective: f64,
    pub cd_residual: f64,
    pub n_samples: usize,
    pub iterations: usize,
    pub penalty_weight: f64,
    pub solve_time_s: f64,
}

pub fn fit_table(model: &LpvModel) -> Vec<FitRow> {
    let center = model.diagnostics.as_ref().map(|d| d.center);
    model
        .anchors
        .iter()
        .enumerate()
        .map(|(i, a)| FitRow {
            column: i,
            w_anchor: a.w_anchor,
            center: Some(i) == center,
            stability_margin: a.stability_margin(),
            objective: a.diagnostics.ab.objective,
            ls_objective: a.diagnostics.ab.ls_objective,
            cd_residual: a.diagnostics.cd_residual,
            n_samples: a.diagnostics.n_samples,
            iterations: a.diagnostics.ab.iterations,
            penalty_weight: a.diagnostics.ab.penalty_weight,
            solve_time_s: a.diagnostics.ab.solve_time,
        })
        .collect()
}

/// Rows rendered exactly as the CLI writes them.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn cmd_fit(run: &mut Run, data: &Path) -> Result<()> {
    run.input(data)?;
    let dataset = run.time("load_s", || Dataset::read_dir(data))?;
    let cfg = run.cfg.fit.clone();
    let fit = run.time("fit_s", || fit_lpv(&dataset, &cfg))?;
    drop(dataset);
    let rows = fit_table(&fit.model);
    for r in &rows {
        println!(
            "w = {:5.1}  margin {:+.3e}  solve {:.3} s{}",
            r.w_anchor,
            r.stability_margin,
            r.solve_time_s,
            if r.center { "  (center)" } else { "" }
        );
    }
    fit.model.write_json(&run.path("model.json"))?;
    write_csv(&run.path("fit.csv"), &rows)
}

fn load_model(run: &mut Run, path: &Path) -> Result<LpvModel> {
    run.input(path)?;
    LpvModel::read_json(path)
}

#[derive(Debug, Serialize)]
struct SimulateRow {
    model: String,
    w_bar: f64,
    seed: u64,
    record: String,
    del_m_ty: f64,
    mean_power: f64,
    pitch_travel: f64,
    wall_time_s: f64,
    status: String,
}

fn cmd_simulate(run: &mut Run, model: Option<&Path>, loadcases: Option<&Path>) -> Result<()> {
    let lpv = model.map(|p| load_model(run, p)).transpose()?;
    let cases: Vec<LoadCaseSpec> = match loadcases {
        Some(path) => {
            run.input(path)?;
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)?
        }
        None => run
            .cfg
            .simulate
            .wind_speeds
            .iter()
            .flat_map(|&w| {
                let cfg = &run.cfg;
                (1..=cfg.simulate.n_seeds as u64).map(move |s| LoadCaseSpec {
                    w_bar: w,
                    seed: case_seed(cfg.seed, s),
                    ..cfg.data.load_case.clone()
                })
            })
            .collect(),
    };
    if cases.is_empty() {
        return Err(Error::InvalidArgument("no load cases to simulate".into()));
    }
    let ctrl = run.cfg.controller();
    let plant = run.cfg.plant.clone();
    let candidate = match &lpv {
        Some(m) => Candidate::Lpv(m),
        None => Candidate::Truth(&plant),
    };
    let dir = run.out.join("records");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let trim = run.cfg.simulate.trim_start;
    let del = run.cfg.doe.del;
    let mut rows = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        case.validate()?;
        let name = format!("{}_{:03}.json", candidate.name(), i);
        let env = environment(case)?;
        let row = |metrics: Option<doe::CaseMetrics>, t: f64, status: String| SimulateRow {
            model: candidate.name().into(),
            w_bar: case.w_bar,
            seed: case.seed,
            record: format!("records/{name}"),
            del_m_ty: metrics.as_ref().map_or(f64::NAN, |m| m.del),
            mean_power: metrics.as_ref().map_or(f64::NAN, |m| m.mean_power),
            pitch_travel: metrics.as_ref().map_or(f64::NAN, |m| m.pitch_travel),
            wall_time_s: t,
            status,
        };
        match candidate.simulate(&env, case, &ctrl, None) {
            Ok((rec, t)) => {
                rec.write_json(&run.path(&format!("records/{name}")))?;
                rows.push(row(Some(case_metrics(&rec, trim, &del)?), t, "ok".into()));
            }
            Err(e) => rows.push(row(None, f64::NAN, e.to_string())),
        }
    }
    write_csv(&run.path("summary.csv"), &rows)?;
    if rows.iter().any(|r| r.status != "ok") {
        return Err(Error::InvalidArgument("some simulations failed; see summary.csv".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub cases: usize,
    pub finite_cases: usize,
    pub pitch_mse_mean: f64,
    pub pitch_mse_variance: f64,
    pub pitch_nrmse_max: f64,
    pub speed_nrmse_max: f64,
    pub mean_wall_time_s: f64,
    pub mean_truth_wall_time_s: f64,
}

/// Per-model aggregate of comparison rows, in first-seen model order.
pub fn summarize_comparison(rows: &[ComparisonRow]) -> Vec<ModelSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.model.as_str()) {
            names.push(&r.model);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mine: Vec<&ComparisonRow> = rows.iter().filter(|r| r.model == name).collect();
            let mse: Vec<f64> = mine.iter().map(|r| r.pitch_mse).collect();
            let finite: Vec<f64> = mse.iter().copied().filter(|v| v.is_finite()).collect();
            let mean = metrics::mean(&finite);
            let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / finite.len().max(1) as f64;
            let max = |f: fn(&ComparisonRow) -> f64| {
                mine.iter().map(|r| f(r)).fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::NAN } else { a.max(b) })
            };
            let mean_of = |f: fn(&ComparisonRow) -> f64| {
                metrics::mean(&mine.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            ModelSummary {
                model: name.into(),
                cases: mine.len(),
                finite_cases: finite.len(),
                pitch_mse_mean: mean,
                pitch_mse_variance: var,
                pitch_nrmse_max: max(|r| r.pitch_nrmse),
                speed_nrmse_max: max(|r| r.speed_nrmse),
                mean_wall_time_s: mean_of(|r| r.wall_time_s),
                mean_truth_wall_time_s: mean_of(|r| r.truth_wall_time_s),
            }
        })
        .collect()
}

/// Input and output matrices of the training records of one column, trimmed.
pub fn identification_data(
    dataset: &Dataset,
    column: usize,
    n_train: usize,
    trim_start: f64,
) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
    (0..n_train.min(dataset.n_seeds()))
        .map(|s| {
            let rec = dataset.record(s, column);
            let (lo, hi) = rec.inputs.index_window(rec.t0() + trim_start, rec.t_end())?;
            let n = hi - lo + 1;
            let block = |ts: &crate::timeseries::TimeSeries| {
                DMatrix::from_fn(ts.channels.len(), n, |i, k| ts.channels[i].values[lo + k])
            };
            Ok((block(&rec.inputs), block(&rec.outputs)))
        })
        .collect()
}

fn cmd_validate(run: &mut Run, data: &Path, model: &Path, subspace: bool) -> Result<()> {
    let lpv = load_model(run, model)?;
    run.input(data)?;
    let dataset = Dataset::read_dir(data)?;
    let n_train = run.cfg.fit.assembly.n_train;
    let n_seeds = dataset.n_seeds();
    if n_seeds <= n_train {
        return Err(Error::NoTestSeeds { n_seeds, n_train });
    }
    let w_bar = run.cfg.validation.w_bar;
    let column = dataset
        .w_grid()
        .iter()
        .position(|&w| (w - w_bar).abs() < 1e-9)
        .ok_or_else(|| Error::InvalidArgument(format!("w̄ = {w_bar} is not a dataset column")))?;
    let cases: Vec<(usize, LoadCaseSpec)> = (n_train..n_seeds)
        .map(|s| {
            let meta = &dataset.record(s, column).meta;
            (
                s + 1,
                LoadCaseSpec {
                    w_bar: meta.w_bar,
                    seed: meta.seed,
                    ..run.cfg.data.load_case.clone()
                },
            )
        })
        .collect();
    let trim = run.cfg.validation.trim_start;
    let baseline: Option<DiscreteLtiModel> = if subspace {
        let records = identification_data(&dataset, column, n_train, trim)?;
        let opts = SubspaceOptions {
            dt: run.cfg.data.load_case.dt,
            ..run.cfg.subspace
        };
        let m = run.time("subspace_fit_s", || fit_subspace_records(&records, &opts))?;
        m.write_json(&run.path("subspace_model.json"))?;
        Some(m)
    } else {
        None
    };
    drop(dataset);
    let mut candidates = vec![Candidate::Lpv(&lpv)];
    if let Some(m) = &baseline {
        candidates.push(Candidate::Subspace(m));
    }
    let ctrl = run.cfg.controller();
    let plant = run.cfg.plant.clone();
    let rows = run.time("validate_s", || validate_cases(&cases, &candidates, &ctrl, &plant, trim))?;
    let summary = summarize_comparison(&rows);
    for s in &summary {
        println!(
            "{:9} {} cases: β MSE mean {:.3e} var {:.3e}, max β NRMSE {:.3}, max ω NRMSE {:.3}",
            s.model, s.cases, s.pitch_mse_mean, s.pitch_mse_variance, s.pitch_nrmse_max, s.speed_nrmse_max
        );
    }
    write_csv(&run.path("validate.csv"), &rows)?;
    write_json(&run.path("summary.json"), &summary)
}

fn collect_record_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension().is_some_and(|x| x == "json")
                        && f.file_name().is_some_and(|n| n != MANIFEST_FILE && n != "dataset.json")
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no record files found".into()));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct MetricsRow {
    record: String,
    w_bar: f64,
    seed: u64,
    del_m_ty: f64,
    mean_power: f64,
    pitch_travel: f64,
}

fn cmd_metrics(run: &mut Run, inputs: &[PathBuf]) -> Result<()> {
    let paths = collect_record_paths(inputs)?;
    let trim = run.cfg.simulate.trim_start;
    let del = run.cfg.doe.del;
    let mut records = Vec::with_capacity(paths.len());
    let mut rows = Vec::with_capacity(paths.len());
    for p in &paths {
        run.input(p)?;
        let rec = SimulationRecord::read_json(p)?;
        let m = case_metrics(&rec, trim, &del)?;
        rows.push(MetricsRow {
            record: p.display().to_string(),
            w_bar: rec.meta.w_bar,
            seed: rec.meta.seed,
            del_m_ty: m.del,
            mean_power: m.mean_power,
            pitch_travel: m.pitch_travel,
        });
        records.push(rec);
    }
    write_csv(&run.path("metrics.csv"), &rows)?;
    write_json(&run.path("metrics.json"), &metrics::summary(&records)?)
}

/// One row of `doe.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoeRow {
    pub omega_pc: f64,
    pub zeta_pc: f64,
    pub del_t: f64,
    pub aep: f64,
    pub scaled_del_t: f64,
    pub wall_time_s: f64,
    pub status: String,
}

pub fn doe_table(grid: &DoeGrid) -> Vec<DoeRow> {
    grid.samples
        .iter()
        .zip(&grid.results)
        .enumerate()
        .map(|(i, (x, r))| DoeRow {
            omega_pc: x[0],
            zeta_pc: x[1],
            del_t: r.del_t,
            aep: r.aep,
            scaled_del_t: grid.scaled.as_ref().map_or(f64::NAN, |s| s[i]),
            wall_time_s: r.wall_time,
            status: r.failure.clone().unwrap_or_else(|| "ok".into()),
        })
        .collect()
}

fn cmd_doe(run: &mut Run, model: Option<&Path>, grid: Option<[usize; 2]>) -> Result<()> {
    let lpv = model.map(|p| load_model(run, p)).transpose()?;
    if let Some(levels) = grid {
        run.cfg.doe.levels = levels;
    }
    let spec = run.cfg.doe.clone();
    let ctrl = run.cfg.controller();
    let plant = run.cfg.plant.clone();
    let target = match &lpv {
        Some(m) => DoeModel::Surrogate(m),
        None => DoeModel::Truth(&plant),
    };
    let result = run.time("doe_s", || doe::run_doe(&spec, target, &ctrl))?;
    let scaled = match doe::scale_surface(&result) {
        Ok(g) => g,
        Err(e) => {
            log::warn!("DEL_t surface not scaled: {e}");
            result.clone()
        }
    };
    let rows = doe_table(&scaled);
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "{} samples on the {} ({} failed)",
        rows.len(),
        scaled.provenance,
        failed
    );
    write_csv(&run.path("doe.csv"), &rows)?;
    write_json(&run.path("doe.json"), &scaled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn global() -> GlobalArgs {
        GlobalArgs {
            config: None,
            seed: None,
            workers: None,
            out: PathBuf::from("out"),
            verbose: 0,
        }
    }

    #[test]
    fn env_overrides_nested_keys() {
        let env = vec![
            ("LPV_DFSM_FIT__POPULATION".to_string(), "20".to_string()),
            ("LPV_DFSM_DATA__W_GRID".to_string(), "[10, 12]".to_string()),
            ("LPV_DFSM_SEED".to_string(), "7".to_string()),
            ("OTHER_FIT__POPULATION".to_string(), "99".to_string()),
        ];
        let cfg = RunConfig::load(None, &env, &global()).unwrap();
        assert_eq!(cfg.fit.population, 20);
        assert_eq!(cfg.data.w_grid, vec![10.0, 12.0]);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.data.root_seed, 7);
        assert_eq!(cfg.doe.root_seed, 7);
    }

    #[test]
    fn flags_override_environment() {
        let env = vec![("LPV_DFSM_SEED".to_string(), "7".to_string())];
        let mut g = global();
        g.seed = Some(3);
        g.workers = Some(2);
        let cfg = RunConfig::load(None, &env, &g).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.workers, Some(2));
    }

    #[test]
    fn bad_override_value_is_rejected() {
        let env = vec![("LPV_DFSM_FIT__POPULATION".to_string(), "many".to_string())];
        assert!(RunConfig::load(None, &env, &global()).is_err());
    }

    #[test]
    fn merge_keeps_unmentioned_defaults() {
        let mut base = serde_json::json!({"a": {"b": 1, "c": 2}, "d": 3});
        merge(&mut base, serde_json::json!({"a": {"b": 5}}));
        assert_eq!(base, serde_json::json!({"a": {"b": 5, "c": 2}, "d": 3}));
    }

    #[test]
    fn levels_parse() {
        assert_eq!(parse_levels("5,5").unwrap(), [5, 5]);
        assert_eq!(parse_levels("3x4").unwrap(), [3, 4]);
        assert!(parse_levels("5").is_err());
    }

    #[test]
    fn comparison_summary_statistics() {
        let row = |model: &str, mse: f64| ComparisonRow {
            model: model.into(),
            w_bar: 14.0,
            seed_index: 1,
            pitch_mse: mse,
            pitch_nrmse: mse,
            speed_nrmse: 0.1,
            power_nrmse: 0.1,
            wall_time_s: 1.0,
            truth_wall_time_s: 2.0,
        };
        let s = summarize_comparison(&[row("a", 1.0), row("b", 2.0), row("a", 3.0)]);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].model, "a");
        assert_eq!(s[0].pitch_mse_mean, 2.0);
        assert_eq!(s[0].pitch_mse_variance, 1.0);
        assert_eq!(s[0].pitch_nrmse_max, 3.0);
        assert_eq!(s[1].cases, 1);
    }
}
