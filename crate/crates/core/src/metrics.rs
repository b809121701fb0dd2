//! Confusion matrices and IoU scores.
//!
//! Predictions that map to no evaluation class land in an extra void
//! column. They are false negatives for the true class and false positives
//! for nobody.

use serde::Serialize;
use thiserror::Error;

use crate::label_space::{predict_dataset_class, LabelSpaceError, MappingMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("class index {index} out of range for {classes} classes")]
    OutOfRange { index: usize, classes: usize },
    #[error("no class has any ground truth or prediction")]
    NoDefinedClasses,
    #[error("confusion matrices have different sizes ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("model emits {model} outputs but the mapping expects {mapping}")]
    ShapeMismatch { model: usize, mapping: usize },
    #[error(transparent)]
    LabelSpace(#[from] LabelSpaceError),
}

/// Counts indexed by (true class, predicted class or void).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * (classes + 1)],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    fn void_col(&self) -> usize {
        self.classes
    }

    /// `predicted == None` records a void prediction.
    pub fn update(&mut self, truth: usize, predicted: Option<usize>) -> Result<(), MetricsError> {
        for index in std::iter::once(truth).chain(predicted) {
            if index >= self.classes {
                return Err(MetricsError::OutOfRange {
                    index,
                    classes: self.classes,
                });
            }
        }
        let col = predicted.unwrap_or(self.void_col());
        self.counts[truth * (self.classes + 1) + col] += 1;
        Ok(())
    }

    /// Count for a true class and a predicted class (`None` = void).
    pub fn count(&self, truth: usize, predicted: Option<usize>) -> u64 {
        let col = predicted.unwrap_or(self.void_col());
        self.counts[truth * (self.classes + 1) + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Cell-wise sum, for combining shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if other.classes != self.classes {
            return Err(MetricsError::SizeMismatch(self.classes, other.classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `(tp, fp, fn)` for class `c`; void predictions count toward `fn`.
    pub fn tp_fp_fn(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.count(c, Some(c));
        let row: u64 = (0..=self.classes)
            .map(|k| self.counts[c * (self.classes + 1) + k])
            .sum();
        let col: u64 = (0..self.classes).map(|t| self.count(t, Some(c))).sum();
        (tp, col - tp, row - tp)
    }

    /// `tp / (tp + fp + fn)`; `None` for a class that never occurs in
    /// ground truth or predictions.
    pub fn iou(&self, c: usize) -> Option<f64> {
        let (tp, fp, fn_) = self.tp_fp_fn(c);
        let denom = tp + fp + fn_;
        (denom > 0).then(|| tp as f64 / denom as f64)
    }

    /// Unweighted mean over classes with a defined IoU.
    pub fn miou(&self) -> Result<f64, MetricsError> {
        let defined: Vec<f64> = (0..self.classes).filter_map(|c| self.iou(c)).collect();
        if defined.is_empty() {
            return Err(MetricsError::NoDefinedClasses);
        }
        Ok(defined.iter().sum::<f64>() / defined.len() as f64)
    }

    pub fn report(&self, names: &[String]) -> Result<IouReport, MetricsError> {
        if names.len() != self.classes {
            return Err(MetricsError::SizeMismatch(self.classes, names.len()));
        }
        let per_class: Vec<ClassIou> = names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let support = (0..=self.classes)
                    .map(|k| self.counts[c * (self.classes + 1) + k])
                    .sum();
                ClassIou {
                    class: name.clone(),
                    iou: self.iou(c),
                    support,
                }
            })
            .collect();
        let undefined = per_class
            .iter()
            .filter(|c| c.iou.is_none())
            .map(|c| c.class.clone())
            .collect();
        Ok(IouReport {
            miou: self.miou()?,
            samples: self.total(),
            void_predictions: (0..self.classes).map(|t| self.count(t, None)).sum(),
            per_class,
            undefined,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassIou {
    pub class: String,
    /// `null` when the class is undefined (absent from truth and predictions).
    pub iou: Option<f64>,
    /// Ground-truth samples of this class.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IouReport {
    pub per_class: Vec<ClassIou>,
    pub miou: f64,
    pub samples: u64,
    pub void_predictions: u64,
    /// Classes excluded from the mean.
    pub undefined: Vec<String>,
}

impl IouReport {
    pub fn iou_of(&self, class: &str) -> Option<f64> {
        self.per_class
            .iter()
            .find(|c| c.class == class)
            .and_then(|c| c.iou)
    }
}

/// Anything producing a probability vector over training classes.
pub trait Classifier {
    fn num_outputs(&self) -> usize;
    fn probabilities(&self, features: &[f64]) -> Vec<f64>;
}

/// An evaluation sample: features and the index of its true class in the
/// evaluation taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub features: Vec<f64>,
    pub truth: usize,
}

/// Scores every sample through the evaluation mapping (sum over mapped
/// training classes, renormalize, argmax) and accumulates the confusion
/// matrix. A void-row argmax counts as a void prediction.
pub fn cross_eval_matrix<C: Classifier + ?Sized>(
    model: &C,
    samples: &[EvalSample],
    mapping: &MappingMatrix,
) -> Result<ConfusionMatrix, MetricsError> {
    if model.num_outputs() != mapping.n_cols() {
        return Err(MetricsError::ShapeMismatch {
            model: model.num_outputs(),
            mapping: mapping.n_cols(),
        });
    }
    let classes = mapping.n_rows() - usize::from(mapping.has_void());
    let mut cm = ConfusionMatrix::new(classes);
    for s in samples {
        let row = predict_dataset_class(&model.probabilities(&s.features), mapping)?;
        let predicted = (Some(row) != mapping.void_row()).then_some(row);
        cm.update(s.truth, predicted)?;
    }
    Ok(cm)
}

pub fn cross_eval<C: Classifier + ?Sized>(
    model: &C,
    samples: &[EvalSample],
    mapping: &MappingMatrix,
) -> Result<IouReport, MetricsError> {
    let names = &mapping.rows()[..mapping.n_rows() - usize::from(mapping.has_void())];
    cross_eval_matrix(model, samples, mapping)?.report(names)
}
