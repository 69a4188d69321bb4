//! Forward values and analytic gradients for the asymmetric loss family.
//!
//! Every loss is evaluated on sigmoid probabilities `p = σ(z)` and written in
//! "nonnegative, minimise" form. Each loss has a positive branch (target 1)
//! and a negative branch (target 0):
//!
//! | kind  | positive branch                    | negative branch                          |
//! |-------|------------------------------------|------------------------------------------|
//! | BCE   | `-ln p`                            | `-ln(1-p)`                               |
//! | Focal | `a₊ (1-p)^γ (-ln p)`               | `a₋ p^γ (-ln(1-p))`                      |
//! | ASL   | `(1-p)^γ⁺ (-ln p)`                 | `p_τ^γ⁻ (-ln(1-p_τ))`                    |
//! | APL   | `Σ_m α_m (1-p)^(m+γ⁺)`             | `Σ_n β_n p_τ^(n+γ⁻)`                     |
//! | RAL   | same as APL                        | `ψ(p) Σ_n β_n p_τ^(n+γ⁻)`, `ψ(p) = λ-p` |
//!
//! with the shifted probability `p_τ = max(p - τ, 0)`. When the Hill term is
//! disabled `ψ ≡ 1` and RAL reduces to APL bit for bit.
//!
//! Gradients are taken with respect to the logit `z` using `dp/dz = p(1-p)`.
//! The rectifier contributes a factor of 1 for `p > τ` and 0 otherwise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log or
/// power term is evaluated.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: logits are {logits:?}, targets are {targets:?}")]
    ShapeMismatch {
        logits: (usize, usize),
        targets: (usize, usize),
    },
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "BCE")]
    Bce,
    #[serde(rename = "Focal")]
    Focal,
    #[serde(rename = "ASL")]
    Asl,
    #[serde(rename = "APL")]
    Apl,
    #[serde(rename = "RAL")]
    Ral,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Bce,
        LossKind::Focal,
        LossKind::Asl,
        LossKind::Apl,
        LossKind::Ral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Bce => "BCE",
            LossKind::Focal => "Focal",
            LossKind::Asl => "ASL",
            LossKind::Apl => "APL",
            LossKind::Ral => "RAL",
        }
    }

    /// Whether the negative branch goes through the `max(p - τ, 0)` rectifier.
    pub fn uses_shift(self) -> bool {
        matches!(self, LossKind::Asl | LossKind::Apl | LossKind::Ral)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bce" | "ce" => Ok(LossKind::Bce),
            "focal" => Ok(LossKind::Focal),
            "asl" => Ok(LossKind::Asl),
            "apl" => Ok(LossKind::Apl),
            "ral" => Ok(LossKind::Ral),
            other => Err(LossError::InvalidConfig(format!(
                "unknown loss kind `{other}`"
            ))),
        }
    }
}

/// Full hyper-parameter record for any loss in the family. Fields that do not
/// apply to `kind` are ignored during evaluation.
///
/// Defaults: `γ⁺ = 0`, `γ⁻ = 4`, `τ = 0.05`, `λ = 1.5`, `M = N = 2`,
/// `α = β = (1, 0.5)`, focal `a₊ = a₋ = 1`, `γ = 2`, Hill term on. Only
/// `λ = 1.5` comes from the RAL formulation itself; the other values are the
/// customary asymmetric-loss settings. Fields missing from a JSON document
/// take these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    pub tau: f64,
    pub lambda: f64,
    pub m_terms: usize,
    pub n_terms: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub focal_alpha_pos: f64,
    pub focal_alpha_neg: f64,
    pub focal_gamma: f64,
    pub hill_enabled: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Ral,
            gamma_pos: 0.0,
            gamma_neg: 4.0,
            tau: 0.05,
            lambda: 1.5,
            m_terms: 2,
            n_terms: 2,
            alpha: vec![1.0, 0.5],
            beta: vec![1.0, 0.5],
            focal_alpha_pos: 1.0,
            focal_alpha_neg: 1.0,
            focal_gamma: 2.0,
            hill_enabled: true,
        }
    }
}

impl LossConfig {
    /// Default hyper-parameters with the given kind.
    pub fn of_kind(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn bce() -> Self {
        Self::of_kind(LossKind::Bce)
    }

    pub fn focal(gamma: f64, alpha_pos: f64, alpha_neg: f64) -> Self {
        Self {
            focal_gamma: gamma,
            focal_alpha_pos: alpha_pos,
            focal_alpha_neg: alpha_neg,
            ..Self::of_kind(LossKind::Focal)
        }
    }

    pub fn asl(gamma_pos: f64, gamma_neg: f64, tau: f64) -> Self {
        Self {
            gamma_pos,
            gamma_neg,
            tau,
            ..Self::of_kind(LossKind::Asl)
        }
    }

    pub fn apl() -> Self {
        Self::of_kind(LossKind::Apl)
    }

    pub fn ral() -> Self {
        Self::of_kind(LossKind::Ral)
    }

    /// Replaces the positive-branch coefficients, keeping `m_terms` in sync.
    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Self {
        self.m_terms = alpha.len();
        self.alpha = alpha;
        self
    }

    /// Replaces the negative-branch coefficients, keeping `n_terms` in sync.
    pub fn with_beta(mut self, beta: Vec<f64>) -> Self {
        self.n_terms = beta.len();
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let bad = |msg: String| Err(LossError::InvalidConfig(msg));
        let nonneg = [
            ("gamma_pos", self.gamma_pos),
            ("gamma_neg", self.gamma_neg),
            ("focal_alpha_pos", self.focal_alpha_pos),
            ("focal_alpha_neg", self.focal_alpha_neg),
            ("focal_gamma", self.focal_gamma),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!(
                    "{name} must be a finite nonnegative number, got {v}"
                ));
            }
        }
        if !(self.tau.is_finite() && (0.0..1.0).contains(&self.tau)) {
            return bad(format!("tau must lie in [0, 1), got {}", self.tau));
        }
        if !self.lambda.is_finite() {
            return bad(format!("lambda must be finite, got {}", self.lambda));
        }
        if self.hill_enabled && self.lambda < 1.0 {
            return bad(format!(
                "lambda must be >= 1 when the Hill term is enabled, got {}",
                self.lambda
            ));
        }
        if self.m_terms == 0 || self.n_terms == 0 {
            return bad("m_terms and n_terms must be positive".into());
        }
        if self.alpha.len() != self.m_terms {
            return bad(format!(
                "alpha has {} entries but m_terms = {}",
                self.alpha.len(),
                self.m_terms
            ));
        }
        if self.beta.len() != self.n_terms {
            return bad(format!(
                "beta has {} entries but n_terms = {}",
                self.beta.len(),
                self.n_terms
            ));
        }
        if let Some(v) = self
            .alpha
            .iter()
            .chain(&self.beta)
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return bad(format!(
                "polynomial coefficients must be finite and nonnegative, got {v}"
            ));
        }
        Ok(())
    }

    /// Hill factor `ψ(p)`.
    #[inline]
    fn hill(&self, p: f64) -> f64 {
        self.lambda - p
    }

    /// Shifted probability `max(p - τ, 0)`.
    #[inline]
    fn shifted(&self, p: f64) -> f64 {
        (p - self.tau).max(0.0)
    }

    /// `Σ_m α_m (1-p)^(m+γ⁺)`
    fn poly_pos(&self, q: f64) -> f64 {
        self.alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a * pow0(q, (i + 1) as f64 + self.gamma_pos))
            .sum()
    }

    /// d/dq of `poly_pos`.
    fn poly_pos_deriv(&self, q: f64) -> f64 {
        self.alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a * dpow0(q, (i + 1) as f64 + self.gamma_pos))
            .sum()
    }

    /// `Σ_n β_n u^(n+γ⁻)`
    fn poly_neg(&self, u: f64) -> f64 {
        self.beta
            .iter()
            .enumerate()
            .map(|(i, b)| b * pow0(u, (i + 1) as f64 + self.gamma_neg))
            .sum()
    }

    fn poly_neg_deriv(&self, u: f64) -> f64 {
        self.beta
            .iter()
            .enumerate()
            .map(|(i, b)| b * dpow0(u, (i + 1) as f64 + self.gamma_neg))
            .sum()
    }

    /// Positive-branch loss for an already clamped probability.
    fn positive(&self, p: f64) -> f64 {
        let q = 1.0 - p;
        match self.kind {
            LossKind::Bce => -p.ln(),
            LossKind::Focal => self.focal_alpha_pos * pow0(q, self.focal_gamma) * -p.ln(),
            LossKind::Asl => pow0(q, self.gamma_pos) * -p.ln(),
            LossKind::Apl | LossKind::Ral => self.poly_pos(q),
        }
    }

    fn negative(&self, p: f64) -> f64 {
        match self.kind {
            LossKind::Bce => neg_log1m(p),
            LossKind::Focal => self.focal_alpha_neg * pow0(p, self.focal_gamma) * neg_log1m(p),
            LossKind::Asl => {
                let u = self.shifted(p);
                pow0(u, self.gamma_neg) * neg_log1m(u)
            }
            LossKind::Apl => self.poly_neg(self.shifted(p)),
            LossKind::Ral => {
                let s = self.poly_neg(self.shifted(p));
                if self.hill_enabled {
                    self.hill(p) * s
                } else {
                    s
                }
            }
        }
    }

    /// d/dp of the positive branch.
    fn positive_dp(&self, p: f64) -> f64 {
        let q = 1.0 - p;
        match self.kind {
            LossKind::Bce => -1.0 / p,
            LossKind::Focal => {
                let g = self.focal_gamma;
                self.focal_alpha_pos * (-dpow0(q, g) * -p.ln() - pow0(q, g) / p)
            }
            LossKind::Asl => {
                let g = self.gamma_pos;
                -dpow0(q, g) * -p.ln() - pow0(q, g) / p
            }
            LossKind::Apl | LossKind::Ral => -self.poly_pos_deriv(q),
        }
    }

    /// d/dp of the negative branch; zero on the rectified side `p <= τ`.
    fn negative_dp(&self, p: f64) -> f64 {
        match self.kind {
            LossKind::Bce => 1.0 / (1.0 - p),
            LossKind::Focal => {
                let g = self.focal_gamma;
                self.focal_alpha_neg * (dpow0(p, g) * neg_log1m(p) + pow0(p, g) / (1.0 - p))
            }
            LossKind::Asl => {
                if p <= self.tau {
                    return 0.0;
                }
                let u = p - self.tau;
                let g = self.gamma_neg;
                dpow0(u, g) * neg_log1m(u) + pow0(u, g) / (1.0 - u)
            }
            LossKind::Apl => {
                if p <= self.tau {
                    return 0.0;
                }
                self.poly_neg_deriv(p - self.tau)
            }
            LossKind::Ral => {
                if p <= self.tau {
                    return 0.0;
                }
                let u = p - self.tau;
                if self.hill_enabled {
                    -self.poly_neg(u) + self.hill(p) * self.poly_neg_deriv(u)
                } else {
                    self.poly_neg_deriv(u)
                }
            }
        }
    }
}

/// `base^exp` computed as `exp(exp · ln base)` with `0^e = 0` for `e > 0` and
/// `0^0 = 1`.
#[inline]
fn pow0(base: f64, exp: f64) -> f64 {
    if base <= 0.0 {
        if exp > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        (exp * base.ln()).exp()
    }
}

/// `d/dx x^e = e · x^(e-1)`, zero when `e = 0`.
#[inline]
fn dpow0(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        0.0
    } else {
        exp * pow0(base, exp - 1.0)
    }
}

/// `-ln(1 - x)`
#[inline]
fn neg_log1m(x: f64) -> f64 {
    -(-x).ln_1p()
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`] on `(0, 1)`.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn check_point(p: f64, y: f64) -> Result<bool, LossError> {
    let positive = if y == 1.0 {
        true
    } else if y == 0.0 {
        false
    } else {
        return Err(LossError::Domain(format!("target must be 0 or 1, got {y}")));
    };
    if !(p > 0.0 && p < 1.0) {
        return Err(LossError::Domain(format!(
            "probability must lie in (0, 1), got {p}"
        )));
    }
    Ok(positive)
}

/// Loss contribution of a single (probability, target) pair. The caller is
/// responsible for clamping `p`; see [`clamp_prob`].
pub fn elementwise_loss(config: &LossConfig, p: f64, y: f64) -> Result<f64, LossError> {
    Ok(if check_point(p, y)? {
        config.positive(p)
    } else {
        config.negative(p)
    })
}

/// d(elementwise loss)/dp.
pub fn elementwise_grad_prob(config: &LossConfig, p: f64, y: f64) -> Result<f64, LossError> {
    Ok(if check_point(p, y)? {
        config.positive_dp(p)
    } else {
        config.negative_dp(p)
    })
}

/// d(elementwise loss)/dz through the sigmoid, evaluated at probability `p`.
pub fn elementwise_grad_logit(config: &LossConfig, p: f64, y: f64) -> Result<f64, LossError> {
    Ok(elementwise_grad_prob(config, p, y)? * p * (1.0 - p))
}

/// Pre-sigmoid model outputs, `B × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch(Matrix);

impl LogitBatch {
    pub fn new(values: Matrix) -> Result<Self, LossError> {
        if !values.is_finite() {
            return Err(LossError::Domain("logits must be finite".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    /// Clamped sigmoid probabilities.
    pub fn probabilities(&self) -> Matrix {
        self.0.map(|z| clamp_prob(sigmoid(z)))
    }
}

/// Binary ground truth, `B × K`, entries in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBatch(Matrix);

impl TargetBatch {
    pub fn new(values: Matrix) -> Result<Self, LossError> {
        if let Some(v) = values.as_slice().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(LossError::Domain(format!(
                "targets must be 0 or 1, found {v}"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    #[inline]
    pub fn is_positive(&self, r: usize, c: usize) -> bool {
        self.0.get(r, c) == 1.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    /// Number of positives in each column.
    pub fn positives_per_class(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.cols()];
        for r in 0..self.rows() {
            for (c, n) in counts.iter_mut().enumerate() {
                if self.is_positive(r, c) {
                    *n += 1;
                }
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean over samples of the per-sample sum over classes.
    pub total: f64,
    /// Mean loss of each class over the batch.
    pub per_class: Vec<f64>,
    /// `∂(elementwise loss)/∂z`, not divided by the batch size.
    pub grad: Option<Matrix>,
}

/// Evaluates a loss over a batch: mean over samples, sum over classes.
pub fn batch_loss(
    config: &LossConfig,
    logits: &LogitBatch,
    targets: &TargetBatch,
    want_grad: bool,
) -> Result<LossOutput, LossError> {
    config.validate()?;
    let z = logits.values();
    let y = targets.values();
    if z.shape() != y.shape() {
        return Err(LossError::ShapeMismatch {
            logits: z.shape(),
            targets: y.shape(),
        });
    }
    let (rows, cols) = z.shape();
    let mut per_class = vec![0.0; cols];
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Matrix::zeros(rows, cols));
    for r in 0..rows {
        let mut row_sum = 0.0;
        for c in 0..cols {
            let p = clamp_prob(sigmoid(z.get(r, c)));
            let positive = targets.is_positive(r, c);
            let l = if positive {
                config.positive(p)
            } else {
                config.negative(p)
            };
            row_sum += l;
            per_class[c] += l;
            if let Some(g) = grad.as_mut() {
                let dp = if positive {
                    config.positive_dp(p)
                } else {
                    config.negative_dp(p)
                };
                g.set(r, c, dp * p * (1.0 - p));
            }
        }
        total += row_sum;
    }
    let n = rows.max(1) as f64;
    per_class.iter_mut().for_each(|v| *v /= n);
    Ok(LossOutput {
        total: total / n,
        per_class,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn batch(z: &[f64], y: &[f64]) -> (LogitBatch, TargetBatch) {
        let n = z.len();
        (
            LogitBatch::new(Matrix::from_vec(1, n, z.to_vec()).unwrap()).unwrap(),
            TargetBatch::new(Matrix::from_vec(1, n, y.to_vec()).unwrap()).unwrap(),
        )
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        // 1/(1+e^-3), evaluated with 30-digit arithmetic.
        assert!((sigmoid(3.0) - 0.952_574_126_822_433_2).abs() < 1e-15);
        for z in [-500.0, -40.0, 40.0, 500.0] {
            let s = sigmoid(z);
            assert!(s.is_finite() && (0.0..=1.0).contains(&s));
        }
    }

    proptest! {
        #[test]
        fn sigmoid_is_antisymmetric(z in -500.0f64..500.0) {
            prop_assert!((sigmoid(-z) - (1.0 - sigmoid(z))).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn bce_at_half() {
        let l = elementwise_loss(&LossConfig::bce(), 0.5, 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn asl_negative_vanishes_below_shift() {
        let cfg = LossConfig::asl(0.0, 4.0, 0.2);
        for p in [1e-7, 0.05, 0.1, 0.2] {
            assert_eq!(elementwise_loss(&cfg, p, 0.0).unwrap(), 0.0);
            assert_eq!(elementwise_grad_prob(&cfg, p, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn rectifier_kink_uses_lower_subgradient() {
        // With n + γ⁻ = 1 a naive derivative would give 1 at u = 0.
        let cfg = LossConfig {
            gamma_neg: 0.0,
            tau: 0.25,
            ..LossConfig::apl()
        }
        .with_beta(vec![1.0]);
        assert_eq!(elementwise_grad_prob(&cfg, 0.25, 0.0).unwrap(), 0.0);
        assert!(elementwise_grad_prob(&cfg, 0.2501, 0.0).unwrap() > 0.0);
    }

    #[test]
    fn domain_errors() {
        let cfg = LossConfig::ral();
        assert!(matches!(
            elementwise_loss(&cfg, 0.5, 0.5),
            Err(LossError::Domain(_))
        ));
        assert!(matches!(
            elementwise_loss(&cfg, 0.0, 1.0),
            Err(LossError::Domain(_))
        ));
        assert!(matches!(
            elementwise_loss(&cfg, 1.0, 0.0),
            Err(LossError::Domain(_))
        ));
        assert!(TargetBatch::new(Matrix::from_vec(1, 1, vec![2.0]).unwrap()).is_err());
        assert!(LogitBatch::new(Matrix::from_vec(1, 1, vec![f64::NAN]).unwrap()).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = LossConfig::ral();
        cfg.m_terms = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = LossConfig::ral();
        cfg.tau = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = LossConfig::ral();
        cfg.lambda = 0.9;
        assert!(cfg.validate().is_err());
        cfg.hill_enabled = false;
        assert!(cfg.validate().is_ok());
        let mut cfg = LossConfig::bce();
        cfg.gamma_neg = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn shape_mismatch() {
        let (z, _) = batch(&[0.0, 1.0], &[0.0, 1.0]);
        let (_, y) = batch(&[0.0], &[1.0]);
        assert!(matches!(
            batch_loss(&LossConfig::bce(), &z, &y, false),
            Err(LossError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn reduction_is_mean_of_row_sums() {
        let cfg = LossConfig::ral();
        let z = Matrix::from_rows(&[vec![0.3, -1.2, 2.0], vec![-0.4, 0.9, 0.1]]).unwrap();
        let y = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let out = batch_loss(
            &cfg,
            &LogitBatch::new(z.clone()).unwrap(),
            &TargetBatch::new(y.clone()).unwrap(),
            true,
        )
        .unwrap();
        let mut rows = [0.0; 2];
        for r in 0..2 {
            for c in 0..3 {
                let p = clamp_prob(sigmoid(z.get(r, c)));
                rows[r] += elementwise_loss(&cfg, p, y.get(r, c)).unwrap();
            }
        }
        assert!((out.total - (rows[0] + rows[1]) / 2.0).abs() < 1e-15);
        let per_class_sum: f64 = out.per_class.iter().sum();
        assert!((per_class_sum - out.total).abs() < 1e-14);
        assert!(out.grad.unwrap().is_finite());
    }

    #[test]
    fn json_uses_snake_case_and_rejects_unknown_fields() {
        let cfg = LossConfig::ral();
        let json = serde_json::to_value(&cfg).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        for k in [
            "kind",
            "gamma_pos",
            "gamma_neg",
            "tau",
            "lambda",
            "m_terms",
            "n_terms",
            "alpha",
            "beta",
            "focal_alpha_pos",
            "focal_alpha_neg",
            "focal_gamma",
            "hill_enabled",
        ] {
            assert!(keys.iter().any(|x| x == k), "missing {k}");
        }
        assert_eq!(json["kind"], "RAL");
        let back: LossConfig = serde_json::from_value(json.clone()).unwrap();
        assert_eq!(back, cfg);

        let mut extra = json;
        extra["temperature"] = serde_json::json!(1.0);
        assert!(serde_json::from_value::<LossConfig>(extra).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("ral".parse::<LossKind>().unwrap(), LossKind::Ral);
        assert_eq!("CE".parse::<LossKind>().unwrap(), LossKind::Bce);
        assert!("hinge".parse::<LossKind>().is_err());
    }
}
