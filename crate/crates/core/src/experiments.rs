//! Experiment drivers: loss comparison, component ablation, coefficient and
//! λ sweeps, and noise robustness. Each driver is a pure function of its
//! inputs; grid points and seeds may run on a thread pool, and results are
//! always assembled in input order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{LossConfig, LossKind};
use crate::metrics::MetricReport;
use crate::synthdata::{apply_noise, generate, DataError, DatasetSpec, NoiseKind, NoiseSpec};
use crate::trainer::{evaluate_model, holdout_split, train, ModelParams, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// λ grid used when a λ sweep does not supply one.
pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [1.0, 1.5, 2.0, 3.0, 3.5, 4.0, 4.5];
/// β grid used when a β sweep does not supply one.
pub const DEFAULT_BETA_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
/// α grid used when an α sweep does not supply one.
pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Learning rate for the sanity experiments. A linear model trained from
/// scratch for 30 epochs needs a larger step than the fine-tuning default.
pub const SANITY_LR: f64 = 1e-2;
pub const SANITY_EPOCHS: usize = 30;

/// Training setup shared by the sanity experiments: linear model, 30 epochs,
/// lr [`SANITY_LR`], other optimiser settings at their defaults.
pub fn sanity_train_config(loss: LossConfig) -> TrainConfig {
    TrainConfig {
        loss,
        epochs: SANITY_EPOCHS,
        lr: SANITY_LR,
        ..TrainConfig::default()
    }
}

/// The five loss kinds at their default settings, in comparison-table order.
pub fn default_losses() -> Vec<NamedLoss> {
    LossKind::ALL
        .iter()
        .map(|&k| NamedLoss::default_for(k))
        .collect()
}

/// Losses compared under noise: BCE, ASL and RAL.
pub fn noise_losses() -> Vec<NamedLoss> {
    [LossKind::Bce, LossKind::Asl, LossKind::Ral]
        .iter()
        .map(|&k| NamedLoss::default_for(k))
        .collect()
}

/// Runs `f` over `items` on `jobs` threads (sequentially when `jobs <= 1`),
/// returning results in input order.
pub fn run_jobs<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| items.par_iter().map(f).collect())
}

/// Held-out result of one (dataset seed, training seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub map: f64,
    pub mauc: f64,
    pub mf1: f64,
    /// mAP over the `⌈K/3⌉` classes with the fewest positives.
    pub tail_map: Option<f64>,
}

impl SeedRun {
    fn from_report(seed: u64, report: &MetricReport, tail: &[usize]) -> Self {
        Self {
            seed,
            map: report.map,
            mauc: report.mauc,
            mf1: report.mf1,
            tail_map: report.subset_map(tail),
        }
    }
}

/// A trained model together with its held-out evaluation.
pub struct RunArtifacts {
    pub model: ModelParams,
    pub report: MetricReport,
    pub run: SeedRun,
    pub test: crate::synthdata::Dataset,
}

/// Generates the dataset for `seed`, trains `loss` on its 80% split and
/// evaluates on the 20% split.
pub fn run_single(
    dataset: &DatasetSpec,
    train_cfg: &TrainConfig,
    loss: &LossConfig,
    seed: u64,
) -> Result<RunArtifacts, ExperimentError> {
    let data = generate(&DatasetSpec {
        seed,
        ..dataset.clone()
    })?;
    let cfg = TrainConfig {
        loss: loss.clone(),
        seed,
        eval_every: 0,
        mode: dataset.mode,
        ..train_cfg.clone()
    };
    let (model, _) = train(&data, &cfg)?;
    let (_, test) = holdout_split(&data, seed);
    let report = evaluate_model(&model, &test, dataset.mode)?;
    let tail = data.class_counts.tail_third();
    let run = SeedRun::from_report(seed, &report, &tail);
    Ok(RunArtifacts {
        model,
        report,
        run,
        test,
    })
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Population standard deviation.
fn stddev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values.iter().copied());
    mean(values.iter().map(|v| (v - m) * (v - m))).sqrt()
}

/// A named loss configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLoss {
    pub name: String,
    pub config: LossConfig,
}

impl NamedLoss {
    pub fn new(name: impl Into<String>, config: LossConfig) -> Self {
        Self {
            name: name.into(),
            config,
        }
    }

    /// The kind's default configuration, named after the kind.
    pub fn default_for(kind: LossKind) -> Self {
        Self::new(kind.name(), LossConfig::of_kind(kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub loss: String,
    pub map: f64,
    pub mauc: f64,
    pub mf1: f64,
    pub seeds: usize,
    pub error: Option<String>,
    pub per_seed: Vec<SeedRun>,
}

impl CompareRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn aggregate_row(name: &str, results: Vec<Result<SeedRun, ExperimentError>>) -> CompareRow {
    let mut per_seed = Vec::with_capacity(results.len());
    let mut error = None;
    for r in results {
        match r {
            Ok(run) => per_seed.push(run),
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    CompareRow {
        loss: name.to_string(),
        map: mean(per_seed.iter().map(|r| r.map)),
        mauc: mean(per_seed.iter().map(|r| r.mauc)),
        mf1: mean(per_seed.iter().map(|r| r.mf1)),
        seeds: per_seed.len(),
        error,
        per_seed,
    }
}

fn run_grid(
    dataset: &DatasetSpec,
    train_cfg: &TrainConfig,
    losses: &[NamedLoss],
    seeds: &[u64],
    jobs: usize,
) -> Vec<CompareRow> {
    let tasks: Vec<(usize, u64)> = (0..losses.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = run_jobs(jobs, &tasks, |&(i, seed)| {
        run_single(dataset, train_cfg, &losses[i].config, seed).map(|a| a.run)
    });
    let mut results = results.into_iter();
    losses
        .iter()
        .map(|l| aggregate_row(&l.name, results.by_ref().take(seeds.len()).collect()))
        .collect()
}

fn metric_cell(row: &CompareRow, v: f64) -> String {
    if row.failed() {
        "failed".into()
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

impl CompareTable {
    /// `loss,map,mauc,mf1,seeds`; metric cells read `failed` for rows with
    /// a training error.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["loss", "map", "mauc", "mf1", "seeds"])?;
        for r in &self.rows {
            w.write_record([
                r.loss.clone(),
                metric_cell(r, r.map),
                metric_cell(r, r.mauc),
                metric_cell(r, r.mf1),
                r.seeds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `loss,seed,map,mauc,mf1,tail_map`
    pub fn write_per_seed_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_per_seed(&self.rows, "loss", out)
    }
}

fn write_per_seed<W: Write>(rows: &[CompareRow], key: &str, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([key, "seed", "map", "mauc", "mf1", "tail_map"])?;
    for r in rows {
        for s in &r.per_seed {
            w.write_record([
                r.loss.clone(),
                s.seed.to_string(),
                s.map.to_string(),
                s.mauc.to_string(),
                s.mf1.to_string(),
                s.tail_map.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per loss with held-out mAP / mAUC / mF1 averaged over `seeds`.
pub fn compare(
    dataset: &DatasetSpec,
    losses: &[NamedLoss],
    train_cfg: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<CompareTable, ExperimentError> {
    if losses.len() < 2 {
        return Err(ExperimentError::Invalid(
            "compare needs at least two losses".into(),
        ));
    }
    if seeds.is_empty() {
        return Err(ExperimentError::Invalid(
            "at least one seed is required".into(),
        ));
    }
    dataset.validate()?;
    train_cfg.validate()?;
    Ok(CompareTable {
        rows: run_grid(dataset, train_cfg, losses, seeds, jobs),
    })
}

/// The three ablation configurations built from `base`: focal only, focal
/// with the asymmetric polynomial form (Hill term off), and the full RAL.
/// Rows two and three differ only in `hill_enabled`.
pub fn ablation_configs(base: &LossConfig) -> [NamedLoss; 3] {
    let focal = LossConfig::focal(base.focal_gamma, base.focal_alpha_pos, base.focal_alpha_neg);
    let asymmetric = LossConfig {
        kind: LossKind::Ral,
        hill_enabled: false,
        ..base.clone()
    };
    let full = LossConfig {
        hill_enabled: true,
        ..asymmetric.clone()
    };
    [
        NamedLoss::new("focal", focal),
        NamedLoss::new("focal+asymmetric", asymmetric),
        NamedLoss::new("focal+asymmetric+hill", full),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<CompareRow>,
}

impl AblationTable {
    /// `components,map,mauc`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["components", "map", "mauc"])?;
        for r in &self.rows {
            w.write_record([
                r.loss.clone(),
                metric_cell(r, r.map),
                metric_cell(r, r.mauc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_per_seed_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        write_per_seed(&self.rows, "components", out)
    }
}

/// Focal → +asymmetric → +Hill, using `train_cfg.loss` as the base config.
pub fn ablation(
    dataset: &DatasetSpec,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<AblationTable, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::Invalid(
            "at least one seed is required".into(),
        ));
    }
    dataset.validate()?;
    train_cfg.validate()?;
    let configs = ablation_configs(&train_cfg.loss);
    Ok(AblationTable {
        rows: run_grid(dataset, train_cfg, &configs, seeds, jobs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    AlphaM,
    BetaN,
    Lambda,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::AlphaM => "alpha_m",
            SweepParameter::BetaN => "beta_n",
            SweepParameter::Lambda => "lambda",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepParameter::AlphaM => DEFAULT_ALPHA_GRID.to_vec(),
            SweepParameter::BetaN => DEFAULT_BETA_GRID.to_vec(),
            SweepParameter::Lambda => DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }

    /// Methods compared by a sweep of this parameter. APL has no λ, so a λ
    /// sweep runs RAL alone.
    pub fn methods(self) -> Vec<LossKind> {
        match self {
            SweepParameter::Lambda => vec![LossKind::Ral],
            _ => vec![LossKind::Apl, LossKind::Ral],
        }
    }

    /// Sets every `α_m`, every `β_n`, or `λ` to `value`.
    pub fn apply(self, base: &LossConfig, value: f64) -> LossConfig {
        let mut c = base.clone();
        match self {
            SweepParameter::AlphaM => c.alpha = vec![value; c.m_terms],
            SweepParameter::BetaN => c.beta = vec![value; c.n_terms],
            SweepParameter::Lambda => c.lambda = value,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    /// Empty means the parameter's default grid.
    #[serde(default)]
    pub grid: Vec<f64>,
    #[serde(default = "default_sweep_base")]
    pub base: TrainConfig,
    #[serde(default = "default_sweep_dataset")]
    pub dataset: DatasetSpec,
    /// Seeds per grid point; seeds are `base.seed + r`.
    #[serde(default = "default_sweep_repeats")]
    pub repeats: usize,
}

fn default_sweep_base() -> TrainConfig {
    sanity_train_config(LossConfig::ral())
}

fn default_sweep_dataset() -> DatasetSpec {
    DatasetSpec::sanity(0)
}

fn default_sweep_repeats() -> usize {
    3
}

impl SweepSpec {
    pub fn effective_grid(&self) -> Vec<f64> {
        if self.grid.is_empty() {
            self.parameter.default_grid()
        } else {
            self.grid.clone()
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64)
            .map(|r| self.base.seed + r)
            .collect()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.repeats == 0 {
            return Err(ExperimentError::Invalid("repeats must be >= 1".into()));
        }
        if self.effective_grid().iter().any(|v| !v.is_finite()) {
            return Err(ExperimentError::Invalid(
                "grid values must be finite".into(),
            ));
        }
        self.dataset.validate()?;
        self.base.validate()?;
        for kind in self.parameter.methods() {
            for v in self.effective_grid() {
                let cfg = self.method_config(kind, v);
                cfg.validate().map_err(|e| {
                    ExperimentError::Invalid(format!("{} = {v}: {e}", self.parameter.name()))
                })?;
            }
        }
        Ok(())
    }

    fn method_config(&self, kind: LossKind, value: f64) -> LossConfig {
        let base = LossConfig {
            kind,
            hill_enabled: kind == LossKind::Ral || self.base.loss.hill_enabled,
            ..self.base.loss.clone()
        };
        self.parameter.apply(&base, value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mf1_mean: f64,
    pub mf1_std: f64,
    pub mauc_mean: f64,
    pub mauc_std: f64,
    pub map_mean: f64,
    /// `mf1_mean` minus the best `mf1_mean` on the grid; 0 at the best point.
    pub f1_diff: f64,
    /// Set on the first point with the highest `mauc_mean`.
    pub best_mauc: bool,
    pub runs: Vec<SeedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub method: LossKind,
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
    /// Population standard deviation of `mf1_mean` across the grid.
    pub sensitivity: f64,
}

impl SweepResult {
    fn from_runs(
        method: LossKind,
        parameter: SweepParameter,
        grid: &[f64],
        runs: Vec<Vec<SeedRun>>,
    ) -> Self {
        let mut points: Vec<SweepPoint> = grid
            .iter()
            .zip(runs)
            .map(|(&value, runs)| {
                let f1: Vec<f64> = runs.iter().map(|r| r.mf1).collect();
                let auc: Vec<f64> = runs.iter().map(|r| r.mauc).collect();
                SweepPoint {
                    value,
                    mf1_mean: mean(f1.iter().copied()),
                    mf1_std: stddev(&f1),
                    mauc_mean: mean(auc.iter().copied()),
                    mauc_std: stddev(&auc),
                    map_mean: mean(runs.iter().map(|r| r.map)),
                    f1_diff: 0.0,
                    best_mauc: false,
                    runs,
                }
            })
            .collect();
        let best_f1 = points
            .iter()
            .map(|p| p.mf1_mean)
            .fold(f64::NEG_INFINITY, f64::max);
        for p in &mut points {
            p.f1_diff = p.mf1_mean - best_f1;
        }
        let best_auc = (0..points.len()).fold(0, |b, i| {
            if points[i].mauc_mean > points[b].mauc_mean {
                i
            } else {
                b
            }
        });
        if let Some(p) = points.get_mut(best_auc) {
            p.best_mauc = true;
        }
        let means: Vec<f64> = points.iter().map(|p| p.mf1_mean).collect();
        Self {
            method,
            parameter,
            sensitivity: stddev(&means),
            points,
        }
    }

    pub fn best_mauc_value(&self) -> Option<f64> {
        self.points.iter().find(|p| p.best_mauc).map(|p| p.value)
    }
}

/// `method,parameter,value,mf1_mean,mf1_std,mauc_mean,mauc_std,map_mean,f1_diff,best_mauc`
pub fn write_sweep_csv<W: Write>(results: &[SweepResult], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "parameter",
        "value",
        "mf1_mean",
        "mf1_std",
        "mauc_mean",
        "mauc_std",
        "map_mean",
        "f1_diff",
        "best_mauc",
    ])?;
    for r in results {
        for p in &r.points {
            w.write_record([
                r.method.name().to_string(),
                r.parameter.name().to_string(),
                p.value.to_string(),
                p.mf1_mean.to_string(),
                p.mf1_std.to_string(),
                p.mauc_mean.to_string(),
                p.mauc_std.to_string(),
                p.map_mean.to_string(),
                p.f1_diff.to_string(),
                p.best_mauc.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `method,parameter,sensitivity`
pub fn write_sensitivity_csv<W: Write>(results: &[SweepResult], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "parameter", "sensitivity"])?;
    for r in results {
        w.write_record([
            r.method.name().to_string(),
            r.parameter.name().to_string(),
            r.sensitivity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cache file for one (method, parameter, value, seed) run.
fn point_path(
    dir: &Path,
    method: LossKind,
    parameter: SweepParameter,
    value: f64,
    seed: u64,
) -> PathBuf {
    dir.join(format!(
        "{}_{}_{}_seed{}.json",
        method.name(),
        parameter.name(),
        value,
        seed
    ))
}

/// Trains every (method, grid value, seed) combination and summarises each
/// method's curve. With `cache_dir`, finished points are stored as JSON and
/// reused on the next invocation, so an interrupted sweep resumes where it
/// stopped.
pub fn sweep(
    spec: &SweepSpec,
    cache_dir: Option<&Path>,
    jobs: usize,
) -> Result<Vec<SweepResult>, ExperimentError> {
    spec.validate()?;
    if let Some(dir) = cache_dir {
        fs::create_dir_all(dir)?;
    }
    let grid = spec.effective_grid();
    let seeds = spec.seeds();
    let methods = spec.parameter.methods();
    let mut tasks: Vec<(LossKind, f64, u64)> = Vec::new();
    for &m in &methods {
        for &v in &grid {
            tasks.extend(seeds.iter().map(|&s| (m, v, s)));
        }
    }

    let results = run_jobs(
        jobs,
        &tasks,
        |&(method, value, seed)| -> Result<SeedRun, ExperimentError> {
            let path = cache_dir.map(|d| point_path(d, method, spec.parameter, value, seed));
            if let Some(p) = path.as_ref().filter(|p| p.exists()) {
                if let Ok(run) = serde_json::from_str::<SeedRun>(&fs::read_to_string(p)?) {
                    return Ok(run);
                }
            }
            let cfg = spec.method_config(method, value);
            let run = run_single(&spec.dataset, &spec.base, &cfg, seed)?.run;
            if let Some(p) = path {
                let tmp = p.with_extension("json.tmp");
                fs::write(&tmp, serde_json::to_string_pretty(&run)?)?;
                fs::rename(tmp, p)?;
            }
            Ok(run)
        },
    );
    let results: Vec<SeedRun> = results.into_iter().collect::<Result<_, _>>()?;

    let per_method = grid.len() * seeds.len();
    Ok(methods
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let block = &results[mi * per_method..(mi + 1) * per_method];
            let runs: Vec<Vec<SeedRun>> =
                block.chunks(seeds.len()).map(<[SeedRun]>::to_vec).collect();
            SweepResult::from_runs(m, spec.parameter, &grid, runs)
        })
        .collect())
}

/// Corruption strength for each noise kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseStrengths {
    pub smooth: f64,
    pub speckle: f64,
    pub saltpepper: f64,
}

impl Default for NoiseStrengths {
    fn default() -> Self {
        Self {
            smooth: 0.5,
            speckle: 0.5,
            saltpepper: 0.1,
        }
    }
}

impl NoiseStrengths {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        for (name, v) in [
            ("smooth", self.smooth),
            ("speckle", self.speckle),
            ("saltpepper", self.saltpepper),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ExperimentError::Invalid(format!(
                    "{name} strength must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    fn conditions(&self) -> [(NoiseKind, f64); 3] {
        [
            (NoiseKind::Smooth, self.smooth),
            (NoiseKind::Speckle, self.speckle),
            (NoiseKind::SaltPepper, self.saltpepper),
        ]
    }
}

/// Held-out mAUC of one seed on the clean and corrupted test sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSeedRun {
    pub seed: u64,
    pub clean: f64,
    pub smooth: f64,
    pub speckle: f64,
    pub saltpepper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub loss: String,
    pub clean: f64,
    pub smooth: f64,
    pub speckle: f64,
    pub saltpepper: f64,
    pub error: Option<String>,
    pub per_seed: Vec<NoiseSeedRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTable {
    pub strengths: NoiseStrengths,
    pub rows: Vec<NoiseRow>,
}

impl NoiseTable {
    /// `loss,clean,smooth,speckle,saltpepper`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["loss", "clean", "smooth", "speckle", "saltpepper"])?;
        for r in &self.rows {
            let cell = |v: f64| {
                if r.error.is_some() {
                    "failed".to_string()
                } else {
                    v.to_string()
                }
            };
            w.write_record([
                r.loss.clone(),
                cell(r.clean),
                cell(r.smooth),
                cell(r.speckle),
                cell(r.saltpepper),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `loss,seed,clean,smooth,speckle,saltpepper`
    pub fn write_per_seed_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["loss", "seed", "clean", "smooth", "speckle", "saltpepper"])?;
        for r in &self.rows {
            for s in &r.per_seed {
                w.write_record([
                    r.loss.clone(),
                    s.seed.to_string(),
                    s.clean.to_string(),
                    s.smooth.to_string(),
                    s.speckle.to_string(),
                    s.saltpepper.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Seed of the corruption applied to the test split of run `seed`.
fn noise_seed(seed: u64, kind: NoiseKind) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ kind as u64
}

fn noise_run(
    dataset: &DatasetSpec,
    train_cfg: &TrainConfig,
    loss: &LossConfig,
    strengths: &NoiseStrengths,
    seed: u64,
) -> Result<NoiseSeedRun, ExperimentError> {
    let art = run_single(dataset, train_cfg, loss, seed)?;
    let mut aucs = [0.0; 3];
    for (slot, (kind, strength)) in aucs.iter_mut().zip(strengths.conditions()) {
        let noise = NoiseSpec {
            kind,
            strength,
            seed: noise_seed(seed, kind),
        };
        let corrupted = art
            .test
            .with_features(apply_noise(&art.test.features, &noise));
        *slot = evaluate_model(&art.model, &corrupted, dataset.mode)?.mauc;
    }
    Ok(NoiseSeedRun {
        seed,
        clean: art.report.mauc,
        smooth: aucs[0],
        speckle: aucs[1],
        saltpepper: aucs[2],
    })
}

/// Trains each loss on clean data and reports held-out mAUC on the clean test
/// split and on smoothed, speckled and salt-and-pepper corrupted copies.
pub fn noise_robustness(
    dataset: &DatasetSpec,
    losses: &[NamedLoss],
    strengths: &NoiseStrengths,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<NoiseTable, ExperimentError> {
    if losses.is_empty() || seeds.is_empty() {
        return Err(ExperimentError::Invalid(
            "need at least one loss and one seed".into(),
        ));
    }
    strengths.validate()?;
    dataset.validate()?;
    train_cfg.validate()?;
    let tasks: Vec<(usize, u64)> = (0..losses.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = run_jobs(jobs, &tasks, |&(i, seed)| {
        noise_run(dataset, train_cfg, &losses[i].config, strengths, seed)
    });
    let mut results = results.into_iter();
    let rows = losses
        .iter()
        .map(|l| {
            let mut per_seed = Vec::new();
            let mut error = None;
            for r in results.by_ref().take(seeds.len()) {
                match r {
                    Ok(run) => per_seed.push(run),
                    Err(e) => {
                        error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            NoiseRow {
                loss: l.name.clone(),
                clean: mean(per_seed.iter().map(|r| r.clean)),
                smooth: mean(per_seed.iter().map(|r| r.smooth)),
                speckle: mean(per_seed.iter().map(|r| r.speckle)),
                saltpepper: mean(per_seed.iter().map(|r| r.saltpepper)),
                error,
                per_seed,
            }
        })
        .collect();
    Ok(NoiseTable {
        strengths: *strengths,
        rows,
    })
}
