//! Experiment orchestration: sweeps over (n, tau, T, sigma), multi-seed
//! aggregation, persistence, and the named acceptance suite.
//!
//! A sweep is a pure function of its configuration document: problem
//! generation, schedules and run seeds all derive from config fields, cells
//! and seeds may execute on any number of threads, and per-cell CSV files
//! come out byte-identical either way.

pub mod acceptance;
pub mod csvio;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{
    run_local_sgd, run_local_sgda, run_local_sgda_plus, run_momentum_local_sgda,
    run_momentum_local_sgda_plus, AlgorithmConfig, AlgorithmId, MomentumSync, Trace,
};
use crate::error::{Error, Result};
use crate::oracles::{fit_rate, RateFit};
use crate::problems::{make_quadratic, NoiseCoupling, ProblemInstance, QuadraticSpec};
use crate::rng::{RngStream, StreamId, StreamPurpose};
use crate::schedule::{schedule_from_theorem, StepSchedule, SyncSchedule, TheoremId};
use crate::vector::Vector;

/// Where the problem comes from: generated on the fly or loaded from disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Generator { generator: QuadraticSpec },
    Path { path: String },
}

/// Step-size source: explicit values or a theorem prescription instantiated
/// per sweep cell (the theorem steps depend on n and T).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSource {
    Explicit {
        eta_x: f64,
        eta_y: f64,
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        beta_x: f64,
        #[serde(default = "one")]
        beta_y: f64,
    },
    Theorem {
        id: TheoremId,
        /// Condition number; measured from the instance when absent.
        #[serde(default)]
        kappa: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

/// Initial point: explicit coordinates, or a deterministic draw from the
/// problem seed with the given norm scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitSpec {
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub scale: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            x0: None,
            y0: None,
            scale: 1.0,
        }
    }
}

/// Optional sweep axes; absent axes keep the base value.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SweepAxes {
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default)]
    pub tau: Option<Vec<usize>>,
    #[serde(default)]
    pub horizon: Option<Vec<usize>>,
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
}

/// Full experiment description; the single JSON document that determines
/// every output byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub algorithm: String,
    pub schedule: ScheduleSource,
    pub sync: SyncSchedule,
    #[serde(default)]
    pub init: InitSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub momentum_sync: MomentumSync,
    #[serde(default)]
    pub noise_coupling: NoiseCoupling,
    #[serde(default = "one_usize")]
    pub metric_stride: usize,
    #[serde(default)]
    pub record_moreau: bool,
    #[serde(default = "default_out")]
    pub out_dir: String,
}

fn one_usize() -> usize {
    1
}

fn default_out() -> String {
    "out".into()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("need at least one seed".into()));
        }
        if self.metric_stride == 0 {
            return Err(Error::InvalidConfig("metric_stride must be >= 1".into()));
        }
        AlgorithmId::parse(&self.algorithm)?;
        Ok(())
    }
}

/// Hash of the canonicalized config document: independent of field order
/// and whitespace in the source.
pub fn config_hash(config_json: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(config_json)?;
    // serde_json maps are BTreeMaps, so serialization sorts object keys.
    let canonical = serde_json::to_string(&value)?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

/// One sweep cell: resolved parameters and its output file or skip reason.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellEntry {
    pub key: String,
    pub algorithm: String,
    pub n: usize,
    pub tau: usize,
    pub horizon: usize,
    pub sigma: f64,
    pub s_interval: Option<usize>,
    pub eta_x: f64,
    pub eta_y: f64,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub file: Option<String>,
    #[serde(default)]
    pub skipped: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Index of a finished sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config_hash: String,
    /// CLI flag overrides echoed for the audit trail.
    pub flag_overrides: Vec<String>,
    pub cells: Vec<CellEntry>,
    pub wall_clock_ms: u128,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

struct ResolvedCell {
    key: String,
    problem: ProblemInstance,
    steps: StepSchedule,
    sync: SyncSchedule,
    warnings: Vec<String>,
}

fn resolve_problem(
    source: &ProblemSource,
    n_override: Option<usize>,
    sigma_override: Option<f64>,
) -> Result<ProblemInstance> {
    match source {
        ProblemSource::Generator { generator } => {
            let mut spec = generator.clone();
            if let Some(n) = n_override {
                spec.n = n;
            }
            if let Some(s) = sigma_override {
                spec.sigma = s;
            }
            make_quadratic(&spec)
        }
        ProblemSource::Path { path } => {
            if n_override.is_some() {
                return Err(Error::InvalidConfig(
                    "cannot sweep n over a problem loaded from disk".into(),
                ));
            }
            let inst = ProblemInstance::from_json(&std::fs::read_to_string(path)?)?;
            Ok(match sigma_override {
                Some(s) => inst.with_sigma(s),
                None => inst,
            })
        }
    }
}

fn resolve_cell(
    config: &ExperimentConfig,
    n_override: Option<usize>,
    tau_override: Option<usize>,
    horizon_override: Option<usize>,
    sigma_override: Option<f64>,
) -> Result<ResolvedCell> {
    let problem = resolve_problem(&config.problem, n_override, sigma_override)?;
    let horizon = horizon_override.unwrap_or(config.sync.horizon);
    let mut warnings = Vec::new();

    let (steps, mut sync) = match &config.schedule {
        ScheduleSource::Explicit {
            eta_x,
            eta_y,
            alpha,
            beta_x,
            beta_y,
        } => {
            let steps = StepSchedule {
                eta_x: *eta_x,
                eta_y: *eta_y,
                alpha: *alpha,
                beta_x: *beta_x,
                beta_y: *beta_y,
            };
            let sync = SyncSchedule {
                tau: config.sync.tau,
                s_interval: config.sync.s_interval,
                horizon,
            };
            (steps, sync)
        }
        ScheduleSource::Theorem { id, kappa } => {
            let kappa = kappa.or_else(|| problem.kappa()).ok_or_else(|| {
                Error::InvalidConfig(
                    "theorem schedule needs kappa (none measured for this problem family)".into(),
                )
            })?;
            let ts =
                schedule_from_theorem(*id, problem.n_clients(), horizon, problem.l_f(), kappa)?;
            warnings.extend(ts.warnings);
            let mut sync = ts.sync;
            // An explicit snapshot interval in the base config wins over the
            // theorem's choice (it is validated below either way).
            if config.sync.s_interval.is_some() {
                sync.s_interval = config.sync.s_interval;
            }
            (ts.steps, sync)
        }
    };
    if let Some(tau) = tau_override {
        sync.tau = tau;
    }
    sync.horizon = horizon;
    sync.validate()?;
    steps.validate()?;

    let key = format!(
        "{}__n{}__tau{}__T{}__sigma{}",
        config.algorithm,
        problem.n_clients(),
        sync.tau,
        sync.horizon,
        problem.sigma()
    );
    Ok(ResolvedCell {
        key,
        problem,
        steps,
        sync,
        warnings,
    })
}

fn initial_point(problem: &ProblemInstance, init: &InitSpec) -> Result<(Vector, Vector)> {
    let x0 = match &init.x0 {
        Some(v) => Vector::new(v.clone())?,
        None => {
            let mut s = RngStream::new(
                problem.seed(),
                StreamId::new(u32::MAX - 1, StreamPurpose::Init),
            );
            let g = s.gaussian_vec(problem.d1());
            let norm = g.norm().max(1e-12);
            g.scale(init.scale / norm)
        }
    };
    let y0 = match &init.y0 {
        Some(v) => Vector::new(v.clone())?,
        None => {
            let mut s = RngStream::new(
                problem.seed(),
                StreamId::new(u32::MAX - 2, StreamPurpose::Init),
            );
            let g = s.gaussian_vec(problem.d2());
            let norm = g.norm().max(1e-12);
            let mut y = g.scale(init.scale / norm);
            problem.apply_constraint(&mut y);
            y
        }
    };
    if x0.dim() != problem.d1() || y0.dim() != problem.d2() {
        return Err(Error::DimensionMismatch("init point vs problem dims".into()));
    }
    Ok((x0, y0))
}

fn run_cell_seed(
    config: &ExperimentConfig,
    cell: &ResolvedCell,
    algorithm: AlgorithmId,
    seed: u64,
) -> Result<Trace> {
    let (x0, y0) = initial_point(&cell.problem, &config.init)?;
    let mut run_cfg = AlgorithmConfig::new(cell.steps, cell.sync, seed, x0, y0);
    run_cfg.noise_coupling = config.noise_coupling;
    run_cfg.metric_stride = config.metric_stride;
    run_cfg.record_moreau = config.record_moreau;
    match algorithm {
        AlgorithmId::LocalSgda => run_local_sgda(&cell.problem, &run_cfg),
        AlgorithmId::MomentumLocalSgda => {
            run_momentum_local_sgda(&cell.problem, &run_cfg, config.momentum_sync)
        }
        AlgorithmId::LocalSgdaPlus => run_local_sgda_plus(&cell.problem, &run_cfg),
        AlgorithmId::MomentumLocalSgdaPlus => run_momentum_local_sgda_plus(&cell.problem, &run_cfg),
        AlgorithmId::LocalSgd => run_local_sgd(&cell.problem, &run_cfg),
    }
}

/// Executes every (cell x seed), writes one CSV per cell plus a JSON
/// manifest into `out_dir`, and returns the manifest.
///
/// `threads` bounds the worker pool; it affects wall-clock only, never
/// results. Invalid cells are recorded as skipped, not fatal.
pub fn run_sweep(
    config: &ExperimentConfig,
    config_json: &str,
    threads: Option<usize>,
    flag_overrides: Vec<String>,
) -> Result<RunManifest> {
    config.validate()?;
    let algorithm = AlgorithmId::parse(&config.algorithm)?;
    let started = std::time::Instant::now();
    let out_dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&out_dir)?;

    fn axis<T: Copy>(v: &Option<Vec<T>>) -> Vec<Option<T>> {
        match v {
            Some(values) => values.iter().map(|&x| Some(x)).collect(),
            None => vec![None],
        }
    }
    let mut combos = Vec::new();
    for &n in &axis(&config.sweep.n) {
        for &tau in &axis(&config.sweep.tau) {
            for &h in &axis(&config.sweep.horizon) {
                for &s in &axis(&config.sweep.sigma) {
                    combos.push((n, tau, h, s));
                }
            }
        }
    }

    let work = || {
        combos
            .par_iter()
            .map(|&(n, tau, h, s)| run_one_cell(config, algorithm, n, tau, h, s, &out_dir))
            .collect::<Vec<CellEntry>>()
    };
    let cells = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(config_json)?,
        flag_overrides,
        cells,
        wall_clock_ms: started.elapsed().as_millis(),
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn run_one_cell(
    config: &ExperimentConfig,
    algorithm: AlgorithmId,
    n: Option<usize>,
    tau: Option<usize>,
    horizon: Option<usize>,
    sigma: Option<f64>,
    out_dir: &Path,
) -> CellEntry {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "base".into());
    let fallback_key = format!(
        "{}__n{}__tau{}__T{}__sigma{}",
        config.algorithm,
        opt(n.map(|v| v.to_string())),
        opt(tau.map(|v| v.to_string())),
        opt(horizon.map(|v| v.to_string())),
        opt(sigma.map(|v| v.to_string())),
    );
    let skipped_entry = |key: String, reason: String| CellEntry {
        key,
        algorithm: config.algorithm.clone(),
        n: n.unwrap_or(0),
        tau: tau.unwrap_or(0),
        horizon: horizon.unwrap_or(0),
        sigma: sigma.unwrap_or(f64::NAN),
        s_interval: None,
        eta_x: f64::NAN,
        eta_y: f64::NAN,
        alpha: f64::NAN,
        seeds: config.seeds.clone(),
        file: None,
        skipped: Some(reason),
        warnings: Vec::new(),
    };

    let cell = match resolve_cell(config, n, tau, horizon, sigma) {
        Ok(c) => c,
        Err(e) => return skipped_entry(fallback_key, e.to_string()),
    };
    let traces: std::result::Result<Vec<(u64, Trace)>, Error> = config
        .seeds
        .par_iter()
        .map(|&seed| run_cell_seed(config, &cell, algorithm, seed).map(|t| (seed, t)))
        .collect();
    let traces = match traces {
        Ok(t) => t,
        Err(e) => return skipped_entry(cell.key, e.to_string()),
    };
    let file_name = format!("cell_{}.csv", cell.key);
    let csv = csvio::write_cell_csv(&traces);
    if let Err(e) = std::fs::write(out_dir.join(&file_name), csv) {
        return skipped_entry(cell.key, format!("io: {e}"));
    }
    CellEntry {
        key: cell.key,
        algorithm: config.algorithm.clone(),
        n: cell.problem.n_clients(),
        tau: cell.sync.tau,
        horizon: cell.sync.horizon,
        sigma: cell.problem.sigma(),
        s_interval: cell.sync.s_interval,
        eta_x: cell.steps.eta_x,
        eta_y: cell.steps.eta_y,
        alpha: cell.steps.alpha,
        seeds: config.seeds.clone(),
        file: Some(file_name),
        skipped: None,
        warnings: cell.warnings,
    }
}

/// Metric columns that can be aggregated from cell files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricName {
    GradPhiSq,
    MoreauGradSq,
    PhiGap,
    DeltaX,
    DeltaY,
    /// `delta_x + delta_y`, the combined synchronization error.
    Delta,
}

impl MetricName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "grad_phi_sq" => Ok(MetricName::GradPhiSq),
            "moreau_grad_sq" => Ok(MetricName::MoreauGradSq),
            "phi_gap" => Ok(MetricName::PhiGap),
            "delta_x" => Ok(MetricName::DeltaX),
            "delta_y" => Ok(MetricName::DeltaY),
            "delta" => Ok(MetricName::Delta),
            other => Err(Error::Unknown(format!("metric '{other}'"))),
        }
    }

    fn extract(&self, row: &csvio::CsvRow) -> Option<f64> {
        match self {
            MetricName::GradPhiSq => row.grad_phi_sq,
            MetricName::MoreauGradSq => row.moreau_grad_sq,
            MetricName::PhiGap => row.phi_gap,
            MetricName::DeltaX => Some(row.delta_x),
            MetricName::DeltaY => Some(row.delta_y),
            MetricName::Delta => Some(row.delta_x + row.delta_y),
        }
    }
}

/// Time-dimension reduction applied per seed before seed-averaging.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reducer {
    Mean,
    MinOverT,
    Final,
}

impl Reducer {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Reducer::Mean),
            "min_over_t" => Ok(Reducer::MinOverT),
            "final" => Ok(Reducer::Final),
            other => Err(Error::Unknown(format!("reducer '{other}'"))),
        }
    }
}

/// Per-cell seed-mean and standard error of a reduced metric.
#[derive(Clone, Debug, Serialize)]
pub struct CellAggregate {
    pub key: String,
    pub n: usize,
    pub tau: usize,
    pub horizon: usize,
    pub sigma: f64,
    pub mean: f64,
    pub stderr: f64,
    pub seeds: usize,
}

/// Reduces `metric` over time per seed, then averages over seeds per cell.
pub fn aggregate(
    manifest: &RunManifest,
    base_dir: &Path,
    metric: MetricName,
    reducer: Reducer,
) -> Result<Vec<CellAggregate>> {
    let mut out = Vec::new();
    for cell in manifest.cells.iter().filter(|c| c.skipped.is_none()) {
        let file = cell
            .file
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("cell {} has no file", cell.key)))?;
        let blocks = csvio::parse_cell_csv(&std::fs::read_to_string(base_dir.join(file))?)?;
        let mut values = Vec::new();
        for block in &blocks {
            let series: Vec<f64> = block.rows.iter().filter_map(|r| metric.extract(r)).collect();
            if series.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "metric not present in cell {} (seed {})",
                    cell.key, block.seed
                )));
            }
            let v = match reducer {
                Reducer::Mean => series.iter().sum::<f64>() / series.len() as f64,
                Reducer::MinOverT => series.iter().copied().fold(f64::INFINITY, f64::min),
                Reducer::Final => *series.last().unwrap(),
            };
            values.push(v);
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let stderr = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        out.push(CellAggregate {
            key: cell.key.clone(),
            n: cell.n,
            tau: cell.tau,
            horizon: cell.horizon,
            sigma: cell.sigma,
            mean,
            stderr,
            seeds: values.len(),
        });
    }
    Ok(out)
}

/// Sweep axis selector for rate fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    N,
    Tau,
    Horizon,
    Sigma,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Axis::N),
            "tau" => Ok(Axis::Tau),
            "T" | "horizon" => Ok(Axis::Horizon),
            "sigma" => Ok(Axis::Sigma),
            other => Err(Error::Unknown(format!("axis '{other}'"))),
        }
    }

    fn value(&self, c: &CellAggregate) -> f64 {
        match self {
            Axis::N => c.n as f64,
            Axis::Tau => c.tau as f64,
            Axis::Horizon => c.horizon as f64,
            Axis::Sigma => c.sigma,
        }
    }

    fn group_key(&self, c: &CellAggregate) -> String {
        match self {
            Axis::N => format!("tau{}_T{}_sigma{}", c.tau, c.horizon, c.sigma),
            Axis::Tau => format!("n{}_T{}_sigma{}", c.n, c.horizon, c.sigma),
            Axis::Horizon => format!("n{}_tau{}_sigma{}", c.n, c.tau, c.sigma),
            Axis::Sigma => format!("n{}_tau{}_T{}", c.n, c.tau, c.horizon),
        }
    }
}

/// A fitted slope along one sweep axis (per group of remaining parameters).
#[derive(Debug, Serialize)]
pub struct AxisFit {
    pub group: String,
    pub fit: RateFit,
    pub dropped_burn_in: usize,
}

/// Fits log-log slopes of the seed-mean reduced metric along `axis`.
///
/// `burn_in` drops that fraction of the smallest axis values before fitting
/// (asymptotic-rate statements tolerate transients), never below the 3-point
/// minimum; the dropped count is reported.
pub fn fit_axis(
    manifest: &RunManifest,
    base_dir: &Path,
    axis: Axis,
    metric: MetricName,
    reducer: Reducer,
    burn_in: f64,
) -> Result<Vec<AxisFit>> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::InvalidConfig("burn-in fraction must be in [0, 1)".into()));
    }
    let aggregates = aggregate(manifest, base_dir, metric, reducer)?;
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for c in &aggregates {
        groups
            .entry(axis.group_key(c))
            .or_default()
            .push((axis.value(c), c.mean));
    }
    let mut out = Vec::new();
    for (group, mut points) in groups {
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let drop = ((points.len() as f64) * burn_in).floor() as usize;
        let drop = drop.min(points.len().saturating_sub(3));
        let xs: Vec<f64> = points[drop..].iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points[drop..].iter().map(|p| p.1).collect();
        out.push(AxisFit {
            group,
            fit: fit_rate(&xs, &ys)?,
            dropped_burn_in: drop,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_ignores_field_order() {
        let a = r#"{"alpha": 1, "nested": {"x": [1,2], "y": 3}}"#;
        let b = r#"{"nested": {"y": 3, "x": [1,2]}, "alpha": 1}"#;
        assert_eq!(config_hash(a).unwrap(), config_hash(b).unwrap());
        let c = r#"{"alpha": 2, "nested": {"x": [1,2], "y": 3}}"#;
        assert_ne!(config_hash(a).unwrap(), config_hash(c).unwrap());
    }

    #[test]
    fn parses_minimal_config() {
        let text = r#"{
            "problem": {"generator": {"n": 2, "d1": 3, "d2": 3, "class": "nc_sc",
                        "het": {"varsigma_x": 0.0, "varsigma_y": 0.0, "mode": "offset"},
                        "sigma": 0.1, "seed": 1}},
            "algorithm": "local_sgda",
            "schedule": {"kind": "explicit", "eta_x": 0.01, "eta_y": 0.05},
            "sync": {"tau": 2, "horizon": 10},
            "seeds": [1, 2]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.metric_stride, 1);
        assert_eq!(cfg.out_dir, "out");
        assert!(matches!(cfg.problem, ProblemSource::Generator { .. }));
    }

    #[test]
    fn rejects_unknown_algorithm_and_empty_seeds() {
        let base = r#"{
            "problem": {"generator": {"n": 2, "d1": 2, "d2": 2, "class": "nc_sc",
                        "het": {"varsigma_x": 0.0, "varsigma_y": 0.0, "mode": "offset"},
                        "sigma": 0.0, "seed": 1}},
            "algorithm": "ALG",
            "schedule": {"kind": "explicit", "eta_x": 0.01, "eta_y": 0.05},
            "sync": {"tau": 1, "horizon": 4},
            "seeds": [SEEDS]
        }"#;
        let bad_alg = base.replace("ALG", "bogus").replace("SEEDS", "1");
        assert!(ExperimentConfig::from_json(&bad_alg).is_err());
        let no_seeds = base.replace("ALG", "local_sgda").replace("[SEEDS]", "[]");
        assert!(ExperimentConfig::from_json(&no_seeds).is_err());
    }
}
