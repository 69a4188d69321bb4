//! Seeded generator of long-tailed multi-label datasets, feature-space
//! corruptions, and CSV persistence.
//!
//! Class frequencies follow a geometric profile whose head/tail ratio equals
//! the requested imbalance ratio. Per-class label counts are allocated by
//! largest remainder with both endpoints pinned, so the realised
//! `N_max / N_min` matches the spec up to integer rounding of the head count.
//! Labels are then dealt to rows in a seeded random order.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::TargetBatch;
use crate::matrix::Matrix;
use crate::metrics::{ClassCounts, LabelMode};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("schema error{}: {message}", location(.row, .column))]
    Schema {
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn location(row: &Option<usize>, column: &Option<String>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" at row {r}, column {c}"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" at column {c}"),
        (None, None) => String::new(),
    }
}

fn schema(row: Option<usize>, column: Option<String>, message: impl Into<String>) -> DataError {
    DataError::Schema {
        row,
        column,
        message: message.into(),
    }
}

/// Generator recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_classes: usize,
    pub n_samples: usize,
    pub imbalance_ratio: f64,
    /// Probability that a row carries one extra, distinct label.
    pub cooccurrence: f64,
    pub feature_dim: usize,
    pub feature_noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: LabelMode,
}

impl DatasetSpec {
    /// The reference long-tailed shape used throughout the experiments:
    /// 20 classes, 4000 samples, imbalance ratio 100.
    pub fn sanity(seed: u64) -> Self {
        Self {
            n_classes: 20,
            n_samples: 4000,
            imbalance_ratio: 100.0,
            cooccurrence: 0.3,
            feature_dim: 32,
            feature_noise_sigma: 0.3,
            seed,
            mode: LabelMode::Multilabel,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.n_classes < 2 {
            return bad(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.n_samples < self.n_classes {
            return bad(format!(
                "n_samples ({}) must be >= n_classes ({})",
                self.n_samples, self.n_classes
            ));
        }
        if !(self.imbalance_ratio.is_finite() && self.imbalance_ratio >= 1.0) {
            return bad(format!(
                "imbalance_ratio must be >= 1, got {}",
                self.imbalance_ratio
            ));
        }
        if !(0.0..=1.0).contains(&self.cooccurrence) {
            return bad(format!(
                "cooccurrence must lie in [0, 1], got {}",
                self.cooccurrence
            ));
        }
        if self.feature_dim < self.n_classes {
            return bad(format!(
                "feature_dim ({}) must be >= n_classes ({})",
                self.feature_dim, self.n_classes
            ));
        }
        if !(self.feature_noise_sigma.is_finite() && self.feature_noise_sigma >= 0.0) {
            return bad(format!(
                "feature_noise_sigma must be nonnegative, got {}",
                self.feature_noise_sigma
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: TargetBatch,
    pub class_counts: ClassCounts,
}

impl Dataset {
    /// Assembles a dataset, recomputing class counts from the targets.
    pub fn new(features: Matrix, targets: TargetBatch) -> Result<Self, DataError> {
        if features.rows() != targets.rows() {
            return Err(DataError::Domain(format!(
                "features have {} rows, targets have {}",
                features.rows(),
                targets.rows()
            )));
        }
        let class_counts = ClassCounts::new(targets.positives_per_class())
            .map_err(|e| schema(None, None, e.to_string()))?;
        Ok(Self {
            features,
            targets,
            class_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> usize {
        self.targets.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows `indices` in order. Class counts of the subset may contain zeros,
    /// so they are kept from the parent when the subset has no positives.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select_rows(indices);
        let targets = TargetBatch::new(self.targets.values().select_rows(indices))
            .expect("subset of binary targets is binary");
        let class_counts = ClassCounts::new(targets.positives_per_class())
            .unwrap_or_else(|_| self.class_counts.clone());
        Dataset {
            features,
            targets,
            class_counts,
        }
    }

    pub fn with_features(&self, features: Matrix) -> Dataset {
        assert_eq!(features.rows(), self.len());
        Dataset {
            features,
            targets: self.targets.clone(),
            class_counts: self.class_counts.clone(),
        }
    }
}

/// Geometric class-frequency profile `f_k ∝ r^(-k/(K-1))`, normalised to sum
/// to one, so that `f_0 / f_{K-1} = r`.
pub fn class_frequencies(n_classes: usize, imbalance_ratio: f64) -> Result<Vec<f64>, DataError> {
    if n_classes < 2 {
        return Err(DataError::Domain(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    if !(imbalance_ratio.is_finite() && imbalance_ratio >= 1.0) {
        return Err(DataError::Domain(format!(
            "imbalance ratio must be >= 1, got {imbalance_ratio}"
        )));
    }
    let last = (n_classes - 1) as f64;
    let raw: Vec<f64> = (0..n_classes)
        .map(|k| imbalance_ratio.powf(-(k as f64) / last))
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Hamilton apportionment of `total` units over `weights`. Ties in the
/// fractional parts go to the lower index.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let ideal: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Integer label counts for `total` labels following `freqs`, with the head
/// count pinned to `round(ratio · tail)` so the endpoint ratio survives
/// rounding. Falls back to plain apportionment when pinning is infeasible.
fn allocate_counts(total: usize, freqs: &[f64], ratio: f64) -> Vec<usize> {
    let k = freqs.len();
    let plain = largest_remainder(total, freqs);
    if k < 3 {
        return plain;
    }
    let tail = ((total as f64 * freqs[k - 1]).round() as usize).max(1);
    let head = (ratio * tail as f64).round() as usize;
    if head + tail > total {
        return plain;
    }
    let mut counts = Vec::with_capacity(k);
    counts.push(head);
    counts.extend(largest_remainder(total - head - tail, &freqs[1..k - 1]));
    counts.push(tail);
    counts
}

/// `n` orthonormal vectors in `R^dim` (Gram–Schmidt on Gaussian draws).
fn prototypes(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

const STREAM_PROTOTYPES: u64 = 1;
const STREAM_LABELS: u64 = 2;
const STREAM_FEATURES: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Deals label multiset `counts` to `n_rows` rows: every row gets one primary
/// label, `n_extra` rows get a second distinct label. Returns per-row label
/// lists in random row order.
fn deal_labels(
    counts: &[usize],
    n_rows: usize,
    n_extra: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut pool: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    pool.shuffle(rng);
    let primary: Vec<usize> = pool[..n_rows].to_vec();
    let mut extra: Vec<Option<usize>> = vec![None; n_rows];
    for (i, &c) in pool[n_rows..].iter().take(n_extra).enumerate() {
        extra[i] = Some(c);
    }
    let mut primary = primary;

    // Repair rows whose extra label duplicates the primary by swapping with
    // another slot that stays conflict-free afterwards.
    for i in 0..n_rows {
        let Some(a) = extra[i] else { continue };
        if a != primary[i] {
            continue;
        }
        let mut fixed = false;
        for j in 0..n_rows {
            if j == i {
                continue;
            }
            let b = primary[j];
            if b != a && extra[j] != Some(a) {
                primary[j] = a;
                extra[i] = Some(b);
                fixed = true;
                break;
            }
            if let Some(b) = extra[j] {
                if b != a && primary[j] != a {
                    extra[j] = Some(a);
                    extra[i] = Some(b);
                    fixed = true;
                    break;
                }
            }
        }
        if !fixed {
            extra[i] = None;
        }
    }

    let mut rows: Vec<Vec<usize>> = primary
        .into_iter()
        .zip(extra)
        .map(|(p, e)| std::iter::once(p).chain(e).collect())
        .collect();
    rows.shuffle(rng);
    rows
}

/// Generates a dataset; identical specs give bit-identical output.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let k = spec.n_classes;
    let b = spec.n_samples;
    let d = spec.feature_dim;
    let freqs = class_frequencies(k, spec.imbalance_ratio)?;

    let n_extra = match spec.mode {
        LabelMode::Singlelabel => 0,
        LabelMode::Multilabel => (spec.cooccurrence * b as f64).round() as usize,
    };
    let mut counts = allocate_counts(b + n_extra, &freqs, spec.imbalance_ratio);
    // A label can appear at most once per row.
    counts.iter_mut().for_each(|c| *c = (*c).min(b));
    let dealt_total: usize = counts.iter().sum();
    let n_extra = dealt_total.saturating_sub(b).min(n_extra);
    if dealt_total < b {
        // Only reachable after capping; top up with plain apportionment.
        counts = largest_remainder(b, &freqs);
    }

    let protos = prototypes(k, d, &mut stream(spec.seed, STREAM_PROTOTYPES));
    let rows = deal_labels(&counts, b, n_extra, &mut stream(spec.seed, STREAM_LABELS));

    let mut feature_rng = stream(spec.seed, STREAM_FEATURES);
    let mut features = Matrix::zeros(b, d);
    let mut targets = Matrix::zeros(b, k);
    for (r, labels) in rows.iter().enumerate() {
        for &c in labels {
            targets.set(r, c, 1.0);
        }
        let row = features.row_mut(r);
        for (j, x) in row.iter_mut().enumerate() {
            let signal: f64 = labels.iter().map(|&c| protos[c][j]).sum();
            let g: f64 = feature_rng.sample(StandardNormal);
            *x = signal + spec.feature_noise_sigma * g;
        }
    }
    Dataset::new(
        features,
        TargetBatch::new(targets).expect("binary by construction"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseKind {
    #[default]
    None,
    SaltPepper,
    Speckle,
    Smooth,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::SaltPepper => "saltpepper",
            NoiseKind::Speckle => "speckle",
            NoiseKind::Smooth => "smooth",
        }
    }
}

/// Feature-space analogues of image corruptions: salt-and-pepper, speckle
/// (multiplicative Gaussian) and smoothing (the blur analogue).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub strength: f64,
    pub seed: u64,
}

/// Applies the corruption in `noise` to a copy of `features`.
pub fn apply_noise(features: &Matrix, noise: &NoiseSpec) -> Matrix {
    if noise.strength == 0.0 || noise.kind == NoiseKind::None {
        return features.clone();
    }
    let s = noise.strength.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let (rows, cols) = features.shape();
    match noise.kind {
        NoiseKind::None => features.clone(),
        NoiseKind::SaltPepper => {
            let lo: Vec<f64> = (0..cols)
                .map(|c| features.column(c).into_iter().fold(f64::INFINITY, f64::min))
                .collect();
            let hi: Vec<f64> = (0..cols)
                .map(|c| {
                    features
                        .column(c)
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let mut out = features.clone();
            for r in 0..rows {
                for c in 0..cols {
                    let u: f64 = rng.random();
                    if u < s / 2.0 {
                        out.set(r, c, lo[c]);
                    } else if u < s {
                        out.set(r, c, hi[c]);
                    }
                }
            }
            out
        }
        NoiseKind::Speckle => {
            let mut out = features.clone();
            for x in out.as_mut_slice() {
                let g: f64 = rng.sample(StandardNormal);
                *x *= 1.0 + s * g;
            }
            out
        }
        NoiseKind::Smooth => {
            let half = (s * 5.0).round() as usize;
            let mut out = features.clone();
            for r in 0..rows {
                let src = features.row(r);
                let dst = out.row_mut(r);
                for (j, v) in dst.iter_mut().enumerate() {
                    let lo = j.saturating_sub(half);
                    let hi = (j + half).min(cols - 1);
                    let window = &src[lo..=hi];
                    *v = window.iter().sum::<f64>() / window.len() as f64;
                }
            }
            out
        }
    }
}

/// Writes `f0..f{d-1},y0..y{K-1}` with one row per sample.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let header: Vec<String> = (0..dataset.feature_dim())
        .map(|j| format!("f{j}"))
        .chain((0..dataset.n_classes()).map(|c| format!("y{c}")))
        .collect();
    w.write_record(&header)?;
    let y = dataset.targets.values();
    for r in 0..dataset.len() {
        let record: Vec<String> = dataset
            .features
            .row(r)
            .iter()
            .map(|v| v.to_string())
            .chain(
                y.row(r)
                    .iter()
                    .map(|&v| if v == 1.0 { "1" } else { "0" }.to_string()),
            )
            .collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(File::open(path)?));
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(schema(None, None, "file is empty")),
    };
    let names: Vec<&str> = header.iter().collect();
    let d = names.iter().take_while(|n| n.starts_with('f')).count();
    let k = names.len() - d;
    for (i, name) in names.iter().enumerate() {
        let expected = if i < d {
            format!("f{i}")
        } else {
            format!("y{}", i - d)
        };
        if *name != expected {
            return Err(schema(
                Some(0),
                Some(name.to_string()),
                format!("expected header `{expected}`"),
            ));
        }
    }
    if d == 0 || k == 0 {
        return Err(schema(
            Some(0),
            None,
            "header needs at least one f and one y column",
        ));
    }

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut n = 0usize;
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != d + k {
            return Err(schema(
                Some(row),
                None,
                format!("expected {} columns, found {}", d + k, rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            if j < d {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    schema(
                        Some(row),
                        Some(format!("f{j}")),
                        format!("not a number: `{cell}`"),
                    )
                })?;
                features.push(v);
            } else {
                let v = match cell.trim() {
                    "0" => 0.0,
                    "1" => 1.0,
                    other => {
                        return Err(schema(
                            Some(row),
                            Some(format!("y{}", j - d)),
                            format!("label must be 0 or 1, got `{other}`"),
                        ))
                    }
                };
                targets.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(schema(None, None, "no data rows"));
    }
    let features = Matrix::from_vec(n, d, features).expect("row lengths checked");
    let targets = TargetBatch::new(Matrix::from_vec(n, k, targets).expect("row lengths checked"))
        .expect("labels checked");
    Dataset::new(features, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::imbalance_ratio;

    #[test]
    fn two_class_frequencies() {
        let f = class_frequencies(2, 10.0).unwrap();
        assert!((f[0] - 10.0 / 11.0).abs() < 1e-15);
        assert!((f[1] - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn unit_ratio_is_uniform() {
        let f = class_frequencies(7, 1.0).unwrap();
        assert!(f.iter().all(|v| (v - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn endpoint_ratio_is_exact() {
        let f = class_frequencies(26, 142.0).unwrap();
        assert!((f[0] / f[25] / 142.0 - 1.0).abs() < 1e-9);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(f.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn bad_ratio_is_domain_error() {
        assert!(matches!(
            class_frequencies(3, 0.5),
            Err(DataError::Domain(_))
        ));
        assert!(matches!(
            class_frequencies(1, 2.0),
            Err(DataError::Domain(_))
        ));
    }

    #[test]
    fn apportionment_sums_to_total() {
        let f = class_frequencies(20, 100.0).unwrap();
        for total in [20, 137, 4000, 5200] {
            assert_eq!(
                allocate_counts(total, &f, 100.0).iter().sum::<usize>(),
                total
            );
            assert_eq!(largest_remainder(total, &f).iter().sum::<usize>(), total);
        }
    }

    #[test]
    fn cooccurrence_zero_gives_one_label_per_row() {
        let spec = DatasetSpec {
            cooccurrence: 0.0,
            ..DatasetSpec::sanity(3)
        };
        let data = generate(&spec).unwrap();
        for r in 0..data.len() {
            assert_eq!(data.targets.values().row(r).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn multilabel_rows_have_one_or_two_distinct_labels() {
        let spec = DatasetSpec {
            cooccurrence: 1.0,
            n_samples: 500,
            ..DatasetSpec::sanity(9)
        };
        let data = generate(&spec).unwrap();
        let mut two = 0;
        for r in 0..data.len() {
            let n = data.targets.values().row(r).iter().sum::<f64>();
            assert!(n == 1.0 || n == 2.0);
            if n == 2.0 {
                two += 1;
            }
        }
        assert!(two > 450, "{two}");
    }

    #[test]
    fn singlelabel_mode_ignores_cooccurrence() {
        let spec = DatasetSpec {
            mode: LabelMode::Singlelabel,
            cooccurrence: 0.9,
            n_classes: 7,
            n_samples: 700,
            feature_dim: 8,
            ..DatasetSpec::sanity(1)
        };
        let data = generate(&spec).unwrap();
        for r in 0..data.len() {
            assert_eq!(data.targets.values().row(r).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DatasetSpec::sanity(42);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&DatasetSpec::sanity(43)).unwrap();
        assert_ne!(generate(&spec).unwrap().features, other.features);
    }

    #[test]
    fn counts_match_targets_and_ratio() {
        let data = generate(&DatasetSpec::sanity(5)).unwrap();
        assert_eq!(
            data.class_counts.counts(),
            data.targets.positives_per_class().as_slice()
        );
        let r = imbalance_ratio(&data.class_counts).unwrap();
        assert!((90.0..=110.0).contains(&r), "{r}");
    }

    #[test]
    fn invalid_specs() {
        let base = DatasetSpec::sanity(0);
        let cases = [
            DatasetSpec {
                n_classes: 1,
                ..base.clone()
            },
            DatasetSpec {
                n_samples: 10,
                ..base.clone()
            },
            DatasetSpec {
                imbalance_ratio: 0.5,
                ..base.clone()
            },
            DatasetSpec {
                cooccurrence: 1.5,
                ..base.clone()
            },
            DatasetSpec {
                feature_dim: 4,
                ..base.clone()
            },
            DatasetSpec {
                feature_noise_sigma: -1.0,
                ..base.clone()
            },
        ];
        for spec in cases {
            assert!(
                matches!(generate(&spec), Err(DataError::InvalidSpec(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn zero_strength_noise_is_identity() {
        let data = generate(&DatasetSpec::sanity(2)).unwrap();
        for kind in [
            NoiseKind::SaltPepper,
            NoiseKind::Speckle,
            NoiseKind::Smooth,
            NoiseKind::None,
        ] {
            let out = apply_noise(
                &data.features,
                &NoiseSpec {
                    kind,
                    strength: 0.0,
                    seed: 7,
                },
            );
            assert_eq!(out.as_slice(), data.features.as_slice());
        }
    }

    #[test]
    fn smoothing_preserves_constants() {
        let m = Matrix::from_vec(2, 9, vec![0.37; 18]).unwrap();
        for strength in [0.1, 0.5, 1.0] {
            let out = apply_noise(
                &m,
                &NoiseSpec {
                    kind: NoiseKind::Smooth,
                    strength,
                    seed: 0,
                },
            );
            assert!(out.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-15));
        }
    }

    #[test]
    fn smoothing_window_width() {
        // strength 0.2 → half-width round(1.0) = 1 → window of 3.
        let m = Matrix::from_vec(1, 5, vec![0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        let out = apply_noise(
            &m,
            &NoiseSpec {
                kind: NoiseKind::Smooth,
                strength: 0.2,
                seed: 0,
            },
        );
        assert_eq!(out.as_slice(), &[0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn salt_pepper_uses_column_extremes() {
        let m = Matrix::from_rows(&[vec![1.0, -5.0], vec![2.0, 5.0], vec![3.0, 0.0]]).unwrap();
        let out = apply_noise(
            &m,
            &NoiseSpec {
                kind: NoiseKind::SaltPepper,
                strength: 1.0,
                seed: 4,
            },
        );
        for r in 0..3 {
            assert!([1.0, 3.0].contains(&out.get(r, 0)));
            assert!([-5.0, 5.0].contains(&out.get(r, 1)));
        }
    }

    #[test]
    fn noise_is_seeded() {
        let data = generate(&DatasetSpec::sanity(2)).unwrap();
        let spec = NoiseSpec {
            kind: NoiseKind::Speckle,
            strength: 0.5,
            seed: 11,
        };
        assert_eq!(
            apply_noise(&data.features, &spec),
            apply_noise(&data.features, &spec)
        );
    }

    #[test]
    fn csv_round_trip() {
        let spec = DatasetSpec {
            n_samples: 200,
            ..DatasetSpec::sanity(8)
        };
        let data = generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&data, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.targets, data.targets);
        assert_eq!(back.class_counts, data.class_counts);
        for (a, b) in back
            .features
            .as_slice()
            .iter()
            .zip(data.features.as_slice())
        {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn csv_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");

        std::fs::write(&path, "f0,f1,y0,y1\n0.5,0.25,1,0\n0.1,0.2,2,0\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        match &err {
            DataError::Schema { row, column, .. } => {
                assert_eq!(*row, Some(2));
                assert_eq!(column.as_deref(), Some("y0"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2, column y0"));

        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_csv(&path), Err(DataError::Schema { .. })));

        std::fs::write(&path, "f0,y0\n0.5,1,3\n").unwrap();
        assert!(matches!(
            load_csv(&path),
            Err(DataError::Schema { row: Some(1), .. })
        ));

        assert!(matches!(
            load_csv(&dir.path().join("missing.csv")),
            Err(DataError::Io(_))
        ));
    }
}
