//! Partial-label losses over softmax logits.
//!
//! All losses are functions of `p̂`, the probability assigned to a sample's
//! label set: the sum over the set for NLL+, the largest member for
//! NLL-max, and the single member for plain NLL. Log-probabilities are
//! formed as differences of log-sum-exp terms, so logits are never
//! exponentiated without first subtracting their maximum.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("label {label} out of range for {classes} logits")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("logit {index} is not finite")]
    NonFiniteLogit { index: usize },
    #[error("sample weight must be positive and finite, got {0}")]
    InvalidWeight(f64),
    #[error("plain NLL needs a single label, got {0}")]
    AmbiguousLabel(usize),
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
}

/// Logits, the permitted label set and a positive per-sample weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSample {
    logits: Vec<f64>,
    label_set: Vec<usize>,
    weight: f64,
}

impl LossSample {
    /// Validates the sample. The label set is sorted and deduplicated.
    pub fn new(logits: Vec<f64>, label_set: Vec<usize>, weight: f64) -> Result<Self, LossError> {
        if let Some(index) = logits.iter().position(|x| !x.is_finite()) {
            return Err(LossError::NonFiniteLogit { index });
        }
        let mut label_set = label_set;
        label_set.sort_unstable();
        label_set.dedup();
        if label_set.is_empty() {
            return Err(LossError::EmptyLabelSet);
        }
        if let Some(&label) = label_set.iter().find(|&&l| l >= logits.len()) {
            return Err(LossError::LabelOutOfRange {
                label,
                classes: logits.len(),
            });
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(LossError::InvalidWeight(weight));
        }
        Ok(Self {
            logits,
            label_set,
            weight,
        })
    }

    pub fn labeled(logits: Vec<f64>, label_set: Vec<usize>) -> Result<Self, LossError> {
        Self::new(logits, label_set, 1.0)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn label_set(&self) -> &[usize] {
        &self.label_set
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn is_labeled(&self, class: usize) -> bool {
        self.label_set.binary_search(&class).is_ok()
    }

    fn labeled_logits(&self) -> Vec<f64> {
        self.label_set.iter().map(|&u| self.logits[u]).collect()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Shift-invariant softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Standard negative log-likelihood; the label set must be a singleton.
pub fn nll(sample: &LossSample) -> Result<f64, LossError> {
    match *sample.label_set.as_slice() {
        [k] => Ok(log_sum_exp(&sample.logits) - sample.logits[k]),
        _ => Err(LossError::AmbiguousLabel(sample.label_set.len())),
    }
}

/// `-ln Σ_{u ∈ labels} p_u`.
pub fn nll_plus(sample: &LossSample) -> f64 {
    (log_sum_exp(&sample.logits) - log_sum_exp(&sample.labeled_logits())).max(0.0)
}

/// `∂/∂s_u = p_u − [u ∈ labels] · softmax(s restricted to labels)_u`.
pub fn nll_plus_grad(sample: &LossSample) -> Vec<f64> {
    let mut grad = softmax(&sample.logits);
    let restricted = softmax(&sample.labeled_logits());
    for (&u, q) in sample.label_set.iter().zip(restricted) {
        grad[u] -= q;
    }
    grad
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// The labeled class with the largest logit; the lowest index wins ties.
fn labeled_argmax(sample: &LossSample) -> usize {
    let mut best = sample.label_set[0];
    for &u in &sample.label_set[1..] {
        if sample.logits[u] > sample.logits[best] {
            best = u;
        }
    }
    best
}

/// `-ln max_{u ∈ labels} p_u`. The gradient flows through the winning
/// labeled logit only, which makes it the plain NLL gradient for that label.
pub fn nll_max(sample: &LossSample) -> LossValue {
    let k = labeled_argmax(sample);
    let mut grad = softmax(&sample.logits);
    grad[k] -= 1.0;
    LossValue {
        loss: log_sum_exp(&sample.logits) - sample.logits[k],
        grad,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Nll,
    NllMax,
    NllPlus,
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nll => "nll",
            Self::NllMax => "nllmax",
            Self::NllPlus => "nllplus",
        })
    }
}

impl FromStr for LossVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nll" => Ok(Self::Nll),
            "nllmax" | "nll-max" | "nll_max" => Ok(Self::NllMax),
            "nllplus" | "nll-plus" | "nll_plus" | "nll+" => Ok(Self::NllPlus),
            other => Err(format!(
                "unknown loss `{other}` (expected nll, nllmax or nllplus)"
            )),
        }
    }
}

/// Where the multiplicative weight `α` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Constant(f64),
    /// Use each sample's own weight.
    PerSample,
}

/// Boundary-aware compound loss settings:
/// `L = α · exp(γ (1 − p̂)) · (−ln p̂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub gamma: f64,
    pub alpha: AlphaMode,
    /// Treat `exp(γ (1 − p̂))` as a constant when differentiating.
    pub frozen_modulation: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::NllPlus,
            gamma: 0.5,
            alpha: AlphaMode::Constant(1.0),
            frozen_modulation: false,
        }
    }
}

impl LossConfig {
    /// Plain (unmodulated) loss of the given variant: `γ = 0`, `α = 1`.
    pub fn plain(variant: LossVariant) -> Self {
        Self {
            variant,
            gamma: 0.0,
            alpha: AlphaMode::Constant(1.0),
            frozen_modulation: false,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(LossError::InvalidConfig(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if let AlphaMode::Constant(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(LossError::InvalidConfig(format!(
                    "alpha must be > 0, got {a}"
                )));
            }
        }
        Ok(())
    }
}

/// `(ln p̂, ∂ ln p̂ / ∂s)` for the configured variant.
fn log_p_hat(sample: &LossSample, variant: LossVariant) -> Result<(f64, Vec<f64>), LossError> {
    match variant {
        LossVariant::NllPlus => {
            let g = nll_plus_grad(sample);
            Ok((-nll_plus(sample), g.into_iter().map(|x| -x).collect()))
        }
        LossVariant::NllMax => {
            let v = nll_max(sample);
            Ok((-v.loss, v.grad.into_iter().map(|x| -x).collect()))
        }
        LossVariant::Nll => {
            let loss = nll(sample)?;
            let mut g: Vec<f64> = softmax(&sample.logits).into_iter().map(|x| -x).collect();
            g[sample.label_set[0]] += 1.0;
            Ok((-loss, g))
        }
    }
}

/// Boundary-aware modulated loss and its gradient with respect to logits.
///
/// With `γ = 0` and `α = 1` this is exactly the unmodulated variant.
pub fn ba_loss(sample: &LossSample, config: &LossConfig) -> Result<LossValue, LossError> {
    config.validate()?;
    let alpha = match config.alpha {
        AlphaMode::Constant(a) => a,
        AlphaMode::PerSample => sample.weight,
    };
    let (ln_p, dln_p) = log_p_hat(sample, config.variant)?;
    let p_hat = ln_p.exp();
    let modulation = (config.gamma * (1.0 - p_hat)).exp();
    let nlog = -ln_p;
    let loss = alpha * modulation * nlog;
    // d/ds [α m (−ln p̂)] = −α m (1 − γ p̂ ln p̂) ∂ln p̂/∂s ; the product term vanishes when frozen.
    let factor = if config.frozen_modulation {
        -alpha * modulation
    } else {
        -alpha * modulation * (1.0 - config.gamma * p_hat * ln_p)
    };
    Ok(LossValue {
        loss,
        grad: dln_p.into_iter().map(|g| factor * g).collect(),
    })
}

/// Mean loss over a batch and the gradient of that mean for every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub mean: f64,
    pub grads: Vec<Vec<f64>>,
}

/// Mean of the per-sample losses, accumulated in index order.
pub fn batch_loss(samples: &[LossSample], config: &LossConfig) -> Result<BatchLoss, LossError> {
    if samples.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let scale = 1.0 / samples.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(samples.len());
    for s in samples {
        let v = ba_loss(s, config)?;
        total += v.loss;
        grads.push(v.grad.into_iter().map(|g| g * scale).collect());
    }
    Ok(BatchLoss {
        mean: total * scale,
        grads,
    })
}
