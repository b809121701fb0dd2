use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::loss::softmax;
use crate::metrics::Classifier;

/// `logits = W x + b`, with `W` stored row-major (one row per class)
/// followed by `b` in a single parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearSoftmaxModel {
    classes: usize,
    dim: usize,
    params: Vec<f64>,
}

impl LinearSoftmaxModel {
    /// All parameters start at zero.
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            params: vec![0.0; classes * (dim + 1)],
        }
    }

    /// Weights drawn from `N(0, std²)`, biases zero.
    pub fn random(classes: usize, dim: usize, std: f64, rng: &mut impl Rng) -> Self {
        let mut model = Self::zeros(classes, dim);
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite std");
            for w in &mut model.params[..classes * dim] {
                *w = normal.sample(rng);
            }
        }
        model
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self, class: usize, feature: usize) -> f64 {
        self.params[class * self.dim + feature]
    }

    pub fn bias(&self, class: usize) -> f64 {
        self.params[self.classes * self.dim + class]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let (w, b) = self.params.split_at(self.classes * self.dim);
        w.chunks_exact(self.dim)
            .zip(b)
            .map(|(row, bias)| row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias)
            .collect()
    }

    /// Parameter gradient given the loss gradient with respect to each
    /// sample's logits.
    pub fn backward(&self, inputs: &[&[f64]], logit_grads: &[Vec<f64>]) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let (gw, gb) = grad.split_at_mut(self.classes * self.dim);
        for (x, g) in inputs.iter().zip(logit_grads) {
            for (c, &gc) in g.iter().enumerate() {
                if gc == 0.0 {
                    continue;
                }
                for (w, xi) in gw[c * self.dim..(c + 1) * self.dim]
                    .iter_mut()
                    .zip(x.iter())
                {
                    *w += gc * xi;
                }
                gb[c] += gc;
            }
        }
        grad
    }
}

impl Classifier for LinearSoftmaxModel {
    fn num_outputs(&self) -> usize {
        self.classes
    }

    fn probabilities(&self, features: &[f64]) -> Vec<f64> {
        softmax(&self.logits(features))
    }
}
