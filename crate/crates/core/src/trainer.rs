//! Deterministic mini-batch training of small models against any loss in the
//! family, plus a finite-difference gradient checker for the analytic loss
//! gradients.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{batch_loss, sigmoid, LogitBatch, LossConfig, LossError, TargetBatch};
use crate::matrix::Matrix;
use crate::metrics::{evaluate, LabelMode, MetricError, MetricReport};
use crate::synthdata::Dataset;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Arch {
    #[default]
    Linear,
    #[serde(rename = "MLP1")]
    Mlp1,
}

/// Linear: `z = x W1 + b1`. MLP1: `z = ReLU(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Arch,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Option<Matrix>,
    pub b2: Option<Vec<f64>>,
    pub hidden: usize,
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

fn uniform_vec(n: usize, bound: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

impl ModelParams {
    /// Uniform(-a, a) initialisation with `a = 1/sqrt(fan_in)` for every
    /// weight and bias.
    pub fn init(
        arch: Arch,
        n_inputs: usize,
        n_classes: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let a1 = 1.0 / (n_inputs as f64).sqrt();
        match arch {
            Arch::Linear => Self {
                arch,
                w1: uniform_matrix(n_inputs, n_classes, a1, rng),
                b1: uniform_vec(n_classes, a1, rng),
                w2: None,
                b2: None,
                hidden: n_classes,
            },
            Arch::Mlp1 => {
                let a2 = 1.0 / (hidden as f64).sqrt();
                Self {
                    arch,
                    w1: uniform_matrix(n_inputs, hidden, a1, rng),
                    b1: uniform_vec(hidden, a1, rng),
                    w2: Some(uniform_matrix(hidden, n_classes, a2, rng)),
                    b2: Some(uniform_vec(n_classes, a2, rng)),
                    hidden,
                }
            }
        }
    }

    /// All-zero parameters of the right shape.
    pub fn zeros(arch: Arch, n_inputs: usize, n_classes: usize, hidden: usize) -> Self {
        match arch {
            Arch::Linear => Self {
                arch,
                w1: Matrix::zeros(n_inputs, n_classes),
                b1: vec![0.0; n_classes],
                w2: None,
                b2: None,
                hidden: n_classes,
            },
            Arch::Mlp1 => Self {
                arch,
                w1: Matrix::zeros(n_inputs, hidden),
                b1: vec![0.0; hidden],
                w2: Some(Matrix::zeros(hidden, n_classes)),
                b2: Some(vec![0.0; n_classes]),
                hidden,
            },
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.w1.rows()
    }

    pub fn n_classes(&self) -> usize {
        match &self.w2 {
            Some(w2) => w2.cols(),
            None => self.w1.cols(),
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.w1.as_slice(), self.b1.as_slice()];
        if let (Some(w2), Some(b2)) = (&self.w2, &self.b2) {
            out.push(w2.as_slice());
            out.push(b2.as_slice());
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.w1.as_mut_slice(), self.b1.as_mut_slice()];
        if let (Some(w2), Some(b2)) = (self.w2.as_mut(), self.b2.as_mut()) {
            out.push(w2.as_mut_slice());
            out.push(b2.as_mut_slice());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn hidden_pre(&self, features: &Matrix) -> Matrix {
        let mut h = features.matmul(&self.w1);
        h.add_row_vector(&self.b1);
        h
    }
}

pub fn forward(model: &ModelParams, features: &Matrix) -> Result<LogitBatch, TrainError> {
    if features.cols() != model.n_inputs() {
        return Err(TrainError::ShapeMismatch {
            expected: model.n_inputs(),
            got: features.cols(),
        });
    }
    let pre = model.hidden_pre(features);
    let z = match (&model.w2, &model.b2) {
        (Some(w2), Some(b2)) => {
            let mut z = pre.map(|v| v.max(0.0)).matmul(w2);
            z.add_row_vector(b2);
            z
        }
        _ => pre,
    };
    Ok(LogitBatch::new(z)?)
}

/// Clamped sigmoid probabilities of the model on `features`.
pub fn predict_proba(model: &ModelParams, features: &Matrix) -> Result<Matrix, TrainError> {
    Ok(forward(model, features)?.probabilities())
}

/// Parameter gradients given `dlogits = ∂L/∂z` for the batch.
fn backward(model: &ModelParams, features: &Matrix, dlogits: &Matrix) -> ModelParams {
    match (&model.w2, &model.b2) {
        (Some(w2), Some(_)) => {
            let pre = model.hidden_pre(features);
            let act = pre.map(|v| v.max(0.0));
            let dw2 = act.t_matmul(dlogits);
            let db2 = dlogits.sum_rows();
            let mut dh = dlogits.matmul_t(w2);
            for (g, &p) in dh.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
            ModelParams {
                arch: model.arch,
                w1: features.t_matmul(&dh),
                b1: dh.sum_rows(),
                w2: Some(dw2),
                b2: Some(db2),
                hidden: model.hidden,
            }
        }
        _ => ModelParams {
            arch: model.arch,
            w1: features.t_matmul(dlogits),
            b1: dlogits.sum_rows(),
            w2: None,
            b2: None,
            hidden: model.hidden,
        },
    }
}

/// Adam with bias correction and decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub const BETA2: f64 = 0.999;

    pub fn new(lr: f64, beta1: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2: Self::BETA2,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        let grads = grads.slices();
        let mut params = params.slices_mut();
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * p[j]);
            }
        }
    }
}

fn default_batch_size() -> usize {
    256
}
fn default_lr() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    1e-3
}
fn default_hidden() -> usize {
    64
}
fn default_epochs() -> usize {
    30
}
fn default_eval_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    /// Epochs between held-out evaluations; 0 disables them. The final epoch
    /// is always evaluated when this is nonzero.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub arch: Arch,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub mode: LabelMode,
}

impl Default for TrainConfig {
    /// Batch size 256, learning rate 1e-4, β₁ = 0.9 and weight decay 1e-3.
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            lr: default_lr(),
            adam_beta1: default_beta1(),
            weight_decay: default_weight_decay(),
            seed: 0,
            eval_every: default_eval_every(),
            arch: Arch::Linear,
            hidden: default_hidden(),
            mode: LabelMode::Multilabel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(TrainError::InvalidConfig(format!(
                "lr must be >= 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(TrainError::InvalidConfig(format!(
                "adam_beta1 must lie in [0, 1), got {}",
                self.adam_beta1
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(TrainError::InvalidConfig(
                "weight_decay must be >= 0".into(),
            ));
        }
        if self.arch == Arch::Mlp1 && self.hidden == 0 {
            return Err(TrainError::InvalidConfig("hidden must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss over the full training split after the epoch's updates.
    pub train_loss: f64,
    pub report: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Training-split loss at initialisation.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_loss, |e| e.train_loss)
    }

    pub fn final_report(&self) -> Option<&MetricReport> {
        self.epochs.iter().rev().find_map(|e| e.report.as_ref())
    }

    /// `epoch,loss,map,mauc,mf1`; metric cells are empty on epochs without
    /// an evaluation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "loss", "map", "mauc", "mf1"])?;
        for e in &self.epochs {
            let (map, mauc, mf1) = match &e.report {
                Some(r) => (r.map.to_string(), r.mauc.to_string(), r.mf1.to_string()),
                None => Default::default(),
            };
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                map,
                mauc,
                mf1,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const STREAM_INIT: u64 = 11;
const STREAM_SPLIT: u64 = 12;
const STREAM_SHUFFLE: u64 = 13;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seeded 80/20 train/held-out split.
pub fn holdout_split(data: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let n = data.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, STREAM_SPLIT));
    let n_test = ((n as f64) * 0.2).round() as usize;
    let n_test = n_test.min(n.saturating_sub(1));
    let (test, train) = idx.split_at(n_test);
    (data.subset(train), data.subset(test))
}

fn full_loss(model: &ModelParams, loss: &LossConfig, data: &Dataset) -> Result<f64, TrainError> {
    let z = forward(model, &data.features)?;
    Ok(batch_loss(loss, &z, &data.targets, false)?.total)
}

pub fn evaluate_model(
    model: &ModelParams,
    data: &Dataset,
    mode: LabelMode,
) -> Result<MetricReport, TrainError> {
    let probs = predict_proba(model, &data.features)?;
    Ok(evaluate(&probs, &data.targets, mode)?)
}

/// Trains on the 80% split of `data` and evaluates on the remaining 20%.
pub fn train(
    data: &Dataset,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::InvalidConfig("dataset is empty".into()));
    }
    let (train_set, test_set) = holdout_split(data, config.seed);
    let mut model = ModelParams::init(
        config.arch,
        data.feature_dim(),
        data.n_classes(),
        config.hidden,
        &mut stream(config.seed, STREAM_INIT),
    );
    let mut shuffle_rng = stream(config.seed, STREAM_SHUFFLE);
    let mut adam = Adam::new(config.lr, config.adam_beta1, config.weight_decay);

    let initial_loss = full_loss(&model, &config.loss, &train_set)?;
    if !initial_loss.is_finite() {
        return Err(TrainError::NonFiniteLoss { epoch: 0, batch: 0 });
    }
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = train_set.features.select_rows(chunk);
            let y = TargetBatch::new(train_set.targets.values().select_rows(chunk))?;
            let z = forward(&model, &x)?;
            let out = batch_loss(&config.loss, &z, &y, true)?;
            if !out.total.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            let scale = 1.0 / chunk.len() as f64;
            let dlogits = out.grad.expect("requested").map(|g| g * scale);
            let grads = backward(&model, &x, &dlogits);
            adam.step(&mut model, &grads);
            if !model.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
        }
        let train_loss = full_loss(&model, &config.loss, &train_set)?;
        if !train_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let due =
            config.eval_every > 0 && (epoch % config.eval_every == 0 || epoch == config.epochs);
        let report = if due {
            Some(evaluate_model(&model, &test_set, config.mode)?)
        } else {
            None
        };
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            report,
        });
    }
    Ok((
        model,
        TrainHistory {
            initial_loss,
            epochs,
        },
    ))
}

/// Minimum distance kept between a sampled probability and `τ` so that the
/// finite-difference stencil never straddles the rectifier kink.
pub const KINK_MARGIN: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-12;

/// Whether `z` is far enough from the rectifier kink of `config`.
pub fn admissible(config: &LossConfig, z: f64) -> bool {
    !config.kind.uses_shift() || (sigmoid(z) - config.tau).abs() >= KINK_MARGIN
}

/// Multiplies every continuous hyper-parameter by a factor in [0.9, 1.1],
/// keeping the config valid.
fn jitter(config: &LossConfig, rng: &mut ChaCha8Rng) -> LossConfig {
    let mut f = || rng.random_range(0.9..1.1);
    let mut c = config.clone();
    c.gamma_pos *= f();
    c.gamma_neg *= f();
    c.tau = (c.tau * f()).min(0.99);
    c.lambda *= f();
    if c.hill_enabled {
        c.lambda = c.lambda.max(1.0);
    }
    c.focal_alpha_pos *= f();
    c.focal_alpha_neg *= f();
    c.focal_gamma *= f();
    for a in c.alpha.iter_mut().chain(c.beta.iter_mut()) {
        *a *= f();
    }
    c
}

fn point_loss(config: &LossConfig, z: f64, y: f64) -> Result<(f64, f64), LossError> {
    let zb = LogitBatch::new(Matrix::from_vec(1, 1, vec![z]).expect("1x1"))?;
    let yb = TargetBatch::new(Matrix::from_vec(1, 1, vec![y]).expect("1x1"))?;
    let out = batch_loss(config, &zb, &yb, true)?;
    Ok((out.total, out.grad.expect("requested").get(0, 0)))
}

/// Relative error between the analytic logit gradient and a central
/// difference at one point.
pub fn point_relative_error(config: &LossConfig, z: f64, y: f64) -> Result<f64, LossError> {
    let (_, analytic) = point_loss(config, z, y)?;
    let (plus, _) = point_loss(config, z + FD_STEP, y)?;
    let (minus, _) = point_loss(config, z - FD_STEP, y)?;
    let numeric = (plus - minus) / (2.0 * FD_STEP);
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    Ok((analytic - numeric).abs() / denom)
}

/// Draws `n_configs` jittered copies of `loss` and `points` random `(z, y)`
/// pairs per copy; returns the largest relative error between analytic and
/// central-difference logit gradients. Points within [`KINK_MARGIN`] of `τ`
/// are resampled.
pub fn gradcheck(
    loss: &LossConfig,
    n_configs: usize,
    points: usize,
    seed: u64,
) -> Result<f64, LossError> {
    loss.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_configs.max(1) {
        let cfg = jitter(loss, &mut rng);
        for _ in 0..points.max(1) {
            let z = loop {
                let z = rng.random_range(-6.0..6.0);
                if admissible(&cfg, z) {
                    break z;
                }
            };
            let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            worst = worst.max(point_relative_error(&cfg, z, y)?);
        }
    }
    Ok(worst)
}
