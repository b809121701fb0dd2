//! Finite-difference validation of the loss gradients.
//!
//! The numeric side only ever evaluates loss values, so it shares nothing
//! with the analytic gradient code it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::loss::{ba_loss, nll_max, nll_plus, nll_plus_grad, LossConfig, LossSample, LossVariant};
use crate::seed::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckedLoss {
    NllPlus,
    NllMax,
    /// Modulated NLL+ with `γ = 2`.
    BoundaryAware,
}

impl CheckedLoss {
    pub const ALL: [CheckedLoss; 3] = [Self::NllPlus, Self::NllMax, Self::BoundaryAware];

    fn config() -> LossConfig {
        LossConfig {
            gamma: 2.0,
            ..LossConfig::plain(LossVariant::NllPlus)
        }
    }

    pub fn value(self, sample: &LossSample) -> f64 {
        match self {
            Self::NllPlus => nll_plus(sample),
            Self::NllMax => nll_max(sample).loss,
            Self::BoundaryAware => ba_loss(sample, &Self::config()).expect("valid config").loss,
        }
    }

    pub fn analytic(self, sample: &LossSample) -> Vec<f64> {
        match self {
            Self::NllPlus => nll_plus_grad(sample),
            Self::NllMax => nll_max(sample).grad,
            Self::BoundaryAware => ba_loss(sample, &Self::config()).expect("valid config").grad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub samples: usize,
    pub max_dim: usize,
    pub max_labels: usize,
    pub logit_range: f64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 1000,
            max_dim: 16,
            max_labels: 5,
            logit_range: 4.0,
            step: 1e-5,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LossCheck {
    pub loss: CheckedLoss,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Samples whose NLL+ gradient is not positive off the label set and
    /// negative on it (only tracked for NLL+).
    pub sign_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    pub checks: Vec<LossCheck>,
    pub passed: bool,
}

/// Central difference of `f` at every logit.
pub fn finite_difference(sample: &LossSample, h: f64, f: impl Fn(&LossSample) -> f64) -> Vec<f64> {
    let base = sample.logits().to_vec();
    (0..base.len())
        .map(|i| {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let at = |logits: Vec<f64>| {
                f(
                    &LossSample::new(logits, sample.label_set().to_vec(), sample.weight())
                        .expect("perturbed sample"),
                )
            };
            (at(plus) - at(minus)) / (2.0 * h)
        })
        .collect()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)` over a whole gradient, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        return 0.0;
    }
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    diff / scale
}

/// Draws a sample with 2..=`max_dim` logits and a label set that is a proper
/// subset of 1..=`max_labels` classes. Labeled logits are kept at least
/// `min_label_gap` apart so the NLL-max argmax is stable under perturbation.
pub fn random_sample(
    rng: &mut impl Rng,
    config: &GradcheckConfig,
    min_label_gap: f64,
) -> LossSample {
    loop {
        let dim = rng.random_range(2..=config.max_dim.max(2));
        let labels = rng.random_range(1..=config.max_labels.min(dim - 1).max(1));
        let logits: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-config.logit_range..=config.logit_range))
            .collect();
        let mut classes: Vec<usize> = (0..dim).collect();
        for i in 0..labels {
            let j = rng.random_range(i..dim);
            classes.swap(i, j);
        }
        let label_set = classes[..labels].to_vec();
        let mut labeled: Vec<f64> = label_set.iter().map(|&u| logits[u]).collect();
        labeled.sort_by(|a, b| b.total_cmp(a));
        if labeled.len() > 1 && labeled[0] - labeled[1] < min_label_gap {
            continue;
        }
        return LossSample::labeled(logits, label_set).expect("valid random sample");
    }
}

/// Whether the NLL+ gradient is strictly positive off the label set and
/// strictly negative on it.
pub fn sign_structure_holds(sample: &LossSample, grad: &[f64]) -> bool {
    grad.iter().enumerate().all(|(u, &g)| {
        if sample.is_labeled(u) {
            g < 0.0
        } else {
            g > 0.0
        }
    })
}

/// Tampers with an analytic gradient in place.
pub type Corruption = dyn Fn(&mut [f64]);

/// Runs the check with an optional perturbation of the analytic gradient,
/// used to confirm that a broken gradient is caught.
pub fn run_with(config: &GradcheckConfig, corrupt: Option<&Corruption>) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(substream(config.seed, "gradcheck"));
    let samples: Vec<LossSample> = (0..config.samples)
        .map(|_| random_sample(&mut rng, config, 1e-3))
        .collect();
    let checks: Vec<LossCheck> = CheckedLoss::ALL
        .iter()
        .map(|&loss| {
            let mut check = LossCheck {
                loss,
                max_abs_err: 0.0,
                max_rel_err: 0.0,
                sign_violations: 0,
            };
            for s in &samples {
                let mut analytic = loss.analytic(s);
                if let Some(f) = corrupt {
                    f(&mut analytic);
                }
                let numeric = finite_difference(s, config.step, |x| loss.value(x));
                for (a, n) in analytic.iter().zip(&numeric) {
                    check.max_abs_err = check.max_abs_err.max((a - n).abs());
                }
                check.max_rel_err = check.max_rel_err.max(relative_error(&analytic, &numeric));
                if loss == CheckedLoss::NllPlus && !sign_structure_holds(s, &analytic) {
                    check.sign_violations += 1;
                }
            }
            check
        })
        .collect();
    let passed = checks
        .iter()
        .all(|c| c.max_rel_err < config.tolerance && c.sign_violations == 0);
    GradcheckReport {
        seed: config.seed,
        samples: config.samples,
        tolerance: config.tolerance,
        checks,
        passed,
    }
}

pub fn run(config: &GradcheckConfig) -> GradcheckReport {
    run_with(config, None)
}
