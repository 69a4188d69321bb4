use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ral_lab::experiments::{
    ablation, compare, default_losses, noise_losses, noise_robustness, sanity_train_config, sweep,
    NamedLoss, NoiseStrengths, SweepParameter, SweepSpec,
};
use ral_lab::metrics::evaluate_with_threshold;
use ral_lab::synthdata::{load_csv, save_csv};
use ral_lab::trainer::{evaluate_model, gradcheck, holdout_split, predict_proba, ModelParams};
use ral_lab::{generate, train, DatasetSpec, LabelMode, LossConfig, LossKind, Matrix, TrainConfig};

#[derive(Parser)]
#[command(name = "ral", version, about = "Robust asymmetric loss lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file for the subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed; overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV.
    Gen(Common),
    /// Train one model and write its history, report and parameters.
    Train(Common),
    /// Evaluate probabilities against targets, or a model on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        /// CSV of predicted probabilities, one column per class.
        #[arg(long)]
        probs: Option<PathBuf>,
        /// CSV of binary targets (a dataset CSV's y-columns are used).
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Model JSON written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset CSV to evaluate the model on.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Compare losses on held-out splits, averaged over seeds.
    Compare(Common),
    /// Focal / +asymmetric / +Hill ablation.
    Ablate(Common),
    /// Coefficient or λ sweep for APL and RAL.
    Sweep(Common),
    /// Held-out mAUC on clean and corrupted features.
    Noise(Common),
    /// Finite-difference check of every loss gradient.
    Gradcheck(Common),
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Run(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn default_seed_count() -> usize {
    10
}

fn sanity_dataset() -> DatasetSpec {
    DatasetSpec::sanity(0)
}

fn sanity_train() -> TrainConfig {
    sanity_train_config(LossConfig::ral())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainCmdConfig {
    #[serde(default = "sanity_dataset")]
    dataset: DatasetSpec,
    /// Dataset CSV to use instead of generating `dataset`.
    #[serde(default)]
    data: Option<PathBuf>,
    #[serde(default = "sanity_train")]
    train: TrainConfig,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EvalCmdConfig {
    #[serde(default)]
    probs: Option<PathBuf>,
    #[serde(default)]
    targets: Option<PathBuf>,
    #[serde(default)]
    model: Option<PathBuf>,
    #[serde(default)]
    data: Option<PathBuf>,
    #[serde(default)]
    mode: LabelMode,
    #[serde(default = "default_threshold")]
    threshold: f64,
}

fn default_threshold() -> f64 {
    ral_lab::metrics::DEFAULT_THRESHOLD
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareCmdConfig {
    #[serde(default = "sanity_dataset")]
    dataset: DatasetSpec,
    #[serde(default = "sanity_train")]
    train: TrainConfig,
    #[serde(default = "default_losses")]
    losses: Vec<NamedLoss>,
    #[serde(default)]
    first_seed: u64,
    #[serde(default = "default_seed_count")]
    n_seeds: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AblateCmdConfig {
    #[serde(default = "sanity_dataset")]
    dataset: DatasetSpec,
    #[serde(default = "sanity_train")]
    train: TrainConfig,
    #[serde(default)]
    first_seed: u64,
    #[serde(default = "default_seed_count")]
    n_seeds: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseCmdConfig {
    #[serde(default = "sanity_dataset")]
    dataset: DatasetSpec,
    #[serde(default = "sanity_train")]
    train: TrainConfig,
    #[serde(default = "noise_losses")]
    losses: Vec<NamedLoss>,
    #[serde(default)]
    strengths: NoiseStrengths,
    #[serde(default)]
    first_seed: u64,
    #[serde(default = "default_seed_count")]
    n_seeds: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GradcheckCmdConfig {
    #[serde(default = "all_kinds")]
    kinds: Vec<LossKind>,
    #[serde(default = "default_gradcheck_configs")]
    n_configs: usize,
    #[serde(default = "default_gradcheck_points")]
    points: usize,
    #[serde(default)]
    seed: u64,
}

fn all_kinds() -> Vec<LossKind> {
    LossKind::ALL.to_vec()
}

fn default_gradcheck_configs() -> usize {
    20
}

fn default_gradcheck_points() -> usize {
    50
}

const GRADCHECK_TOLERANCE: f64 = 1e-5;

/// Run metadata written next to every report.
#[derive(Serialize)]
struct Sidecar<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seeds: Vec<u64>,
    config: &'a C,
    outputs: Vec<&'a str>,
}

fn load_config<T: DeserializeOwned>(
    path: Option<&Path>,
    default: impl FnOnce() -> T,
) -> CliResult<T> {
    match path {
        None => Ok(default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("--config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("--config {}: {e}", p.display())))
        }
    }
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("--out {}: {e}", dir.display())))
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_sidecar<C: Serialize>(
    dir: &Path,
    command: &str,
    seeds: Vec<u64>,
    config: &C,
    outputs: Vec<&str>,
) -> CliResult<()> {
    let meta = Sidecar {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seeds,
        config,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(dir.join(format!("{command}.json")), text)?;
    Ok(())
}

fn seed_range(first: u64, n: usize) -> CliResult<Vec<u64>> {
    if n == 0 {
        return Err(CliError::Usage("n_seeds must be >= 1".into()));
    }
    Ok((0..n as u64).map(|i| first + i).collect())
}

fn check_jobs(jobs: usize) -> CliResult<()> {
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    Ok(())
}

fn cmd_gen(c: &Common) -> CliResult<()> {
    let mut spec = load_config(c.config.as_deref(), || DatasetSpec::sanity(0))?;
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    prepare_out(&c.out)?;
    let data = generate(&spec)?;
    save_csv(&data, &c.out.join("dataset.csv"))?;
    write_sidecar(&c.out, "gen", vec![spec.seed], &spec, vec!["dataset.csv"])?;
    println!(
        "rows={} classes={} features={}",
        data.len(),
        data.n_classes(),
        data.feature_dim()
    );
    Ok(())
}

fn cmd_train(c: &Common) -> CliResult<()> {
    let mut cfg = load_config(c.config.as_deref(), || TrainCmdConfig {
        dataset: sanity_dataset(),
        data: None,
        train: sanity_train(),
    })?;
    if let Some(s) = c.seed {
        cfg.dataset.seed = s;
        cfg.train.seed = s;
    }
    cfg.train.mode = cfg.dataset.mode;
    prepare_out(&c.out)?;
    let data = match &cfg.data {
        Some(p) => load_csv(p)?,
        None => generate(&cfg.dataset)?,
    };
    let (model, history) = train(&data, &cfg.train)?;
    let (_, test) = holdout_split(&data, cfg.train.seed);
    let report = evaluate_model(&model, &test, cfg.dataset.mode)?;
    history.write_csv(create(&c.out, "history.csv")?)?;
    report.write_per_class_csv(create(&c.out, "per_class.csv")?)?;
    let mut model_json = serde_json::to_string_pretty(&model)?;
    model_json.push('\n');
    fs::write(c.out.join("model.json"), model_json)?;
    write_sidecar(
        &c.out,
        "train",
        vec![cfg.train.seed],
        &cfg,
        vec!["history.csv", "per_class.csv", "model.json"],
    )?;
    println!(
        "loss {:.6} -> {:.6}  map={} mauc={} mf1={}",
        history.initial_loss,
        history.final_loss(),
        report.map,
        report.mauc,
        report.mf1
    );
    Ok(())
}

/// Reads a numeric CSV with a header row. With `targets_only`, columns named
/// `y<k>` are kept when the header also has feature columns.
fn read_matrix(path: &Path, flag: &str, targets_only: bool) -> CliResult<Matrix> {
    let usage = |m: String| CliError::Usage(format!("{flag} {}: {m}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| usage(e.to_string()))?;
    let header = reader.headers().map_err(|e| usage(e.to_string()))?.clone();
    let keep: Vec<usize> = if targets_only && header.iter().any(|h| h.starts_with('f')) {
        header
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with('y'))
            .map(|(i, _)| i)
            .collect()
    } else {
        (0..header.len()).collect()
    };
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| usage(e.to_string()))?;
        let row = keep
            .iter()
            .map(|&i| {
                record
                    .get(i)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        usage(format!(
                            "bad number at row {}, column {}",
                            r + 1,
                            &header[i]
                        ))
                    })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(usage("no data rows".into()));
    }
    Matrix::from_rows(&rows).ok_or_else(|| usage("ragged rows".into()))
}

fn cmd_eval(
    c: &Common,
    probs: &Option<PathBuf>,
    targets: &Option<PathBuf>,
    model: &Option<PathBuf>,
    data: &Option<PathBuf>,
) -> CliResult<()> {
    let mut cfg: EvalCmdConfig = load_config(c.config.as_deref(), || EvalCmdConfig {
        threshold: default_threshold(),
        ..EvalCmdConfig::default()
    })?;
    for (slot, flag) in [
        (&mut cfg.probs, probs),
        (&mut cfg.targets, targets),
        (&mut cfg.model, model),
        (&mut cfg.data, data),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    let (probs, target_batch) = match (&cfg.probs, &cfg.targets, &cfg.model, &cfg.data) {
        (Some(p), Some(t), None, None) => {
            let probs = read_matrix(p, "--probs", false)?;
            let t = read_matrix(t, "--targets", true)?;
            let t = ral_lab::loss::TargetBatch::new(t)
                .map_err(|e| CliError::Usage(format!("--targets: {e}")))?;
            (probs, t)
        }
        (None, None, Some(m), Some(d)) => {
            let text = fs::read_to_string(m)
                .map_err(|e| CliError::Usage(format!("--model {}: {e}", m.display())))?;
            let model: ModelParams = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("--model {}: {e}", m.display())))?;
            let data =
                load_csv(d).map_err(|e| CliError::Usage(format!("--data {}: {e}", d.display())))?;
            (predict_proba(&model, &data.features)?, data.targets)
        }
        (Some(_), None, _, _) => {
            return Err(CliError::Usage("--targets is required with --probs".into()))
        }
        (None, Some(_), _, _) => {
            return Err(CliError::Usage("--probs is required with --targets".into()))
        }
        (None, None, Some(_), None) => {
            return Err(CliError::Usage("--data is required with --model".into()))
        }
        (None, None, None, Some(_)) => {
            return Err(CliError::Usage("--model is required with --data".into()))
        }
        (None, None, None, None) => {
            return Err(CliError::Usage(
                "pass --probs and --targets, or --model and --data".into(),
            ))
        }
        _ => {
            return Err(CliError::Usage(
                "--probs/--targets cannot be combined with --model/--data".into(),
            ))
        }
    };
    let report = evaluate_with_threshold(&probs, &target_batch, cfg.mode, cfg.threshold)?;
    prepare_out(&c.out)?;
    report.write_per_class_csv(create(&c.out, "per_class.csv")?)?;
    let mut report_json = serde_json::to_string_pretty(&report)?;
    report_json.push('\n');
    fs::write(c.out.join("report.json"), report_json)?;
    write_sidecar(
        &c.out,
        "eval",
        vec![],
        &cfg,
        vec!["per_class.csv", "report.json"],
    )?;
    let mut line = format!(
        "map={:?} mauc={:?} mf1={:?}",
        report.map, report.mauc, report.mf1
    );
    if let Some(acc) = report.accuracy {
        line.push_str(&format!(" accuracy={acc:?}"));
    }
    println!("{line}");
    Ok(())
}

fn cmd_compare(c: &Common) -> CliResult<()> {
    let mut cfg = load_config(c.config.as_deref(), || CompareCmdConfig {
        dataset: sanity_dataset(),
        train: sanity_train(),
        losses: default_losses(),
        first_seed: 0,
        n_seeds: default_seed_count(),
    })?;
    if let Some(s) = c.seed {
        cfg.first_seed = s;
    }
    let seeds = seed_range(cfg.first_seed, cfg.n_seeds)?;
    prepare_out(&c.out)?;
    let table = compare(&cfg.dataset, &cfg.losses, &cfg.train, &seeds, c.jobs)?;
    table.write_csv(create(&c.out, "compare.csv")?)?;
    table.write_per_seed_csv(create(&c.out, "compare_per_seed.csv")?)?;
    write_sidecar(
        &c.out,
        "compare",
        seeds,
        &cfg,
        vec!["compare.csv", "compare_per_seed.csv"],
    )?;
    for r in &table.rows {
        match &r.error {
            Some(e) => println!("{}: failed ({e})", r.loss),
            None => println!("{}: map={} mauc={} mf1={}", r.loss, r.map, r.mauc, r.mf1),
        }
    }
    Ok(())
}

fn cmd_ablate(c: &Common) -> CliResult<()> {
    let mut cfg = load_config(c.config.as_deref(), || AblateCmdConfig {
        dataset: sanity_dataset(),
        train: sanity_train(),
        first_seed: 0,
        n_seeds: default_seed_count(),
    })?;
    if let Some(s) = c.seed {
        cfg.first_seed = s;
    }
    let seeds = seed_range(cfg.first_seed, cfg.n_seeds)?;
    prepare_out(&c.out)?;
    let table = ablation(&cfg.dataset, &cfg.train, &seeds, c.jobs)?;
    table.write_csv(create(&c.out, "ablation.csv")?)?;
    table.write_per_seed_csv(create(&c.out, "ablation_per_seed.csv")?)?;
    write_sidecar(
        &c.out,
        "ablate",
        seeds,
        &cfg,
        vec!["ablation.csv", "ablation_per_seed.csv"],
    )?;
    for r in &table.rows {
        println!("{}: map={} mauc={}", r.loss, r.map, r.mauc);
    }
    Ok(())
}

fn cmd_sweep(c: &Common) -> CliResult<()> {
    let mut spec = load_config(c.config.as_deref(), || SweepSpec {
        parameter: SweepParameter::AlphaM,
        grid: Vec::new(),
        base: sanity_train(),
        dataset: sanity_dataset(),
        repeats: 3,
    })?;
    if let Some(s) = c.seed {
        spec.base.seed = s;
    }
    if spec.grid.is_empty() {
        spec.grid = spec.parameter.default_grid();
    }
    prepare_out(&c.out)?;
    let results = sweep(&spec, Some(&c.out.join("points")), c.jobs)?;
    ral_lab::experiments::write_sweep_csv(&results, create(&c.out, "sweep.csv")?)?;
    ral_lab::experiments::write_sensitivity_csv(&results, create(&c.out, "sensitivity.csv")?)?;
    write_sidecar(
        &c.out,
        "sweep",
        spec.seeds(),
        &spec,
        vec!["sweep.csv", "sensitivity.csv"],
    )?;
    for r in &results {
        println!(
            "{} {}: sensitivity={} best_mauc_at={}",
            r.method,
            r.parameter.name(),
            r.sensitivity,
            r.best_mauc_value()
                .map(|v| v.to_string())
                .unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_noise(c: &Common) -> CliResult<()> {
    let mut cfg = load_config(c.config.as_deref(), || NoiseCmdConfig {
        dataset: sanity_dataset(),
        train: sanity_train(),
        losses: noise_losses(),
        strengths: NoiseStrengths::default(),
        first_seed: 0,
        n_seeds: default_seed_count(),
    })?;
    if let Some(s) = c.seed {
        cfg.first_seed = s;
    }
    let seeds = seed_range(cfg.first_seed, cfg.n_seeds)?;
    prepare_out(&c.out)?;
    let table = noise_robustness(
        &cfg.dataset,
        &cfg.losses,
        &cfg.strengths,
        &cfg.train,
        &seeds,
        c.jobs,
    )?;
    table.write_csv(create(&c.out, "noise.csv")?)?;
    table.write_per_seed_csv(create(&c.out, "noise_per_seed.csv")?)?;
    write_sidecar(
        &c.out,
        "noise",
        seeds,
        &cfg,
        vec!["noise.csv", "noise_per_seed.csv"],
    )?;
    for r in &table.rows {
        println!(
            "{}: clean={} smooth={} speckle={} saltpepper={}",
            r.loss, r.clean, r.smooth, r.speckle, r.saltpepper
        );
    }
    Ok(())
}

/// Returns whether every kind passed.
fn cmd_gradcheck(c: &Common) -> CliResult<bool> {
    let mut cfg = load_config(c.config.as_deref(), || GradcheckCmdConfig {
        kinds: all_kinds(),
        n_configs: default_gradcheck_configs(),
        points: default_gradcheck_points(),
        seed: 0,
    })?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let err = gradcheck(
            &LossConfig::of_kind(kind),
            cfg.n_configs,
            cfg.points,
            cfg.seed,
        )?;
        println!("{kind}: max_rel_err={err:e}");
        rows.push((kind, err));
    }
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    prepare_out(&c.out)?;
    let mut w = csv::Writer::from_writer(create(&c.out, "gradcheck.csv")?);
    w.write_record(["kind", "max_rel_err"])?;
    for (kind, err) in &rows {
        w.write_record([kind.name().to_string(), err.to_string()])?;
    }
    w.flush()?;
    write_sidecar(
        &c.out,
        "gradcheck",
        vec![cfg.seed],
        &cfg,
        vec!["gradcheck.csv"],
    )?;
    println!("max_rel_err={worst:e}");
    Ok(worst < GRADCHECK_TOLERANCE)
}

fn run(cli: Cli) -> CliResult<bool> {
    let common = match &cli.command {
        Command::Gen(c)
        | Command::Train(c)
        | Command::Compare(c)
        | Command::Ablate(c)
        | Command::Sweep(c)
        | Command::Noise(c)
        | Command::Gradcheck(c) => c,
        Command::Eval { common, .. } => common,
    };
    check_jobs(common.jobs)?;
    match &cli.command {
        Command::Gen(c) => cmd_gen(c)?,
        Command::Train(c) => cmd_train(c)?,
        Command::Eval {
            common,
            probs,
            targets,
            model,
            data,
        } => cmd_eval(common, probs, targets, model, data)?,
        Command::Compare(c) => cmd_compare(c)?,
        Command::Ablate(c) => cmd_ablate(c)?,
        Command::Sweep(c) => cmd_sweep(c)?,
        Command::Noise(c) => cmd_noise(c)?,
        Command::Gradcheck(c) => return cmd_gradcheck(c),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
