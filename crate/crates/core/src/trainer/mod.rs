//! Desk-scale training of a linear softmax model on synthetic multi-dataset
//! data, used to compare partial-label losses and label-space baselines.

mod experiment;
mod model;
mod optim;
mod sampling;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use experiment::{
    run_unlabeled_concept_experiment, unlabeled_concept_spec, ExperimentConfig, ExperimentReport,
    ModelResult, ModelVariant, FOCUS_CLASSES,
};
pub use model::LinearSoftmaxModel;
pub use optim::{cosine_lr, Adam, AdamConfig};
pub use sampling::balanced_batches;
pub use synth::{generate, LabeledSample, SyntheticData, SyntheticDataset, SyntheticSpec};

use crate::label_space::{LabelSpaceError, TrainingTaxonomy};
use crate::loss::{batch_loss, LossConfig, LossError, LossSample, LossVariant};
use crate::metrics::{EvalSample, MetricsError};
use crate::seed::substream;
use crate::taxonomy::{FlatTaxonomy, TaxonomyError, UniversalTaxonomy};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    LabelSpace(#[from] LabelSpaceError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("dataset `{dataset}` would get no samples of class `{class}`")]
    ZeroSamples { dataset: String, class: String },
    #[error("dataset {0} has no samples")]
    EmptyDataset(usize),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("no usable training samples")]
    NoTrainingSamples,
    #[error("loss diverged at epoch {epoch}, step {step}: {loss}")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Dataset class name to repeat count; samples of these classes enter
    /// each epoch's pool that many times. Empty means no oversampling.
    #[serde(default)]
    pub oversample: BTreeMap<String, usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 250,
            batch_size: 64,
            lr_max: 5e-4,
            lr_min: 6e-6,
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            seed: 0,
            oversample: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    /// Mean batch loss of every epoch.
    pub loss_trace: Vec<f64>,
    /// Samples left out because their label set was ambiguous for plain NLL.
    pub ignored: usize,
    pub steps: usize,
}

/// Label set of every sample under the training taxonomy.
pub fn label_sets(
    samples: &[LabeledSample],
    taxonomies: &[FlatTaxonomy],
    training: &TrainingTaxonomy,
) -> Result<Vec<Vec<usize>>, TrainError> {
    samples
        .iter()
        .map(|s| {
            let t = &taxonomies[s.dataset];
            Ok(training
                .label_set(&t.name, &t.classes[s.label].name)?
                .to_vec())
        })
        .collect()
}

/// Re-indexes test samples from concept to universal class; samples of
/// concepts no dataset covers are dropped.
pub fn universal_test_set(test: &[EvalSample], ut: &UniversalTaxonomy) -> Vec<EvalSample> {
    test.iter()
        .filter_map(|s| {
            let k = ut.classes.iter().position(|c| c.extent.contains(s.truth))?;
            Some(EvalSample {
                features: s.features.clone(),
                truth: k,
            })
        })
        .collect()
}

/// Mean loss over a batch and its gradient with respect to the model parameters.
pub fn batch_objective(
    model: &LinearSoftmaxModel,
    inputs: &[&[f64]],
    labels: &[&[usize]],
    config: &LossConfig,
) -> Result<(f64, Vec<f64>), TrainError> {
    let samples = inputs
        .iter()
        .zip(labels)
        .map(|(x, l)| LossSample::labeled(model.logits(x), l.to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    let batch = batch_loss(&samples, config)?;
    Ok((batch.mean, model.backward(inputs, &batch.grads)))
}

/// Trains with Adam under a cosine learning-rate schedule on
/// dataset-balanced mini-batches.
///
/// With the plain NLL variant, samples whose label set has more than one
/// class are ignored.
pub fn train(
    model: &mut LinearSoftmaxModel,
    samples: &[LabeledSample],
    taxonomies: &[FlatTaxonomy],
    training: &TrainingTaxonomy,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.loss.validate()?;
    let sets = label_sets(samples, taxonomies, training)?;
    let keep: Vec<usize> = (0..samples.len())
        .filter(|&i| config.loss.variant != LossVariant::Nll || sets[i].len() == 1)
        .collect();
    if keep.is_empty() {
        return Err(TrainError::NoTrainingSamples);
    }
    let ignored = samples.len() - keep.len();
    for class in config.oversample.keys() {
        if !taxonomies
            .iter()
            .any(|t| t.classes.iter().any(|c| &c.name == class))
        {
            log::warn!("oversampled class `{class}` is not a dataset class");
        }
    }
    let keep: Vec<usize> = keep
        .into_iter()
        .flat_map(|i| {
            let class = &taxonomies[samples[i].dataset].classes[samples[i].label].name;
            let repeats = config.oversample.get(class).copied().unwrap_or(1).max(1);
            std::iter::repeat_n(i, repeats)
        })
        .collect();

    // Dataset ids of the kept samples, renumbered densely.
    let mut present: Vec<usize> = keep.iter().map(|&i| samples[i].dataset).collect();
    present.sort_unstable();
    present.dedup();
    let dataset_of: Vec<usize> = keep
        .iter()
        .map(|&i| present.binary_search(&samples[i].dataset).expect("present"))
        .collect();

    let batches_per_epoch = keep.len().div_ceil(config.batch_size.max(1));
    let total_steps = config.epochs * batches_per_epoch;
    let mut adam = Adam::new(model.params().len(), config.adam);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let batches = balanced_batches(
            &dataset_of,
            config.batch_size,
            substream(config.seed, &format!("batches/{epoch}")),
        )?;
        let mut epoch_loss = 0.0;
        for batch in &batches {
            let inputs: Vec<&[f64]> = batch
                .iter()
                .map(|&k| samples[keep[k]].features.as_slice())
                .collect();
            let labels: Vec<&[usize]> = batch.iter().map(|&k| sets[keep[k]].as_slice()).collect();
            let (loss, grad) = batch_objective(model, &inputs, &labels, &config.loss)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { epoch, step, loss });
            }
            let lr = cosine_lr(step, total_steps, config.lr_max, config.lr_min)?;
            adam.step(model.params_mut(), &grad, lr);
            epoch_loss += loss;
            step += 1;
        }
        loss_trace.push(epoch_loss / batches.len() as f64);
    }
    if !model.is_finite() {
        return Err(TrainError::Diverged {
            epoch: config.epochs,
            step,
            loss: f64::NAN,
        });
    }
    Ok(TrainOutcome {
        loss_trace,
        ignored,
        steps: step,
    })
}
