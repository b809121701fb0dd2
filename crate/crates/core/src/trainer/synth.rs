//! Gaussian-cluster stand-in for multi-dataset segmentation data.
//!
//! Every universal class is a concept with an isotropic Gaussian cluster
//! centred on a scaled one-hot corner. Datasets label the same clusters
//! through their own flat taxonomies, so a coarse dataset class yields an
//! ambiguous label covering several clusters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::metrics::EvalSample;
use crate::seed::substream;
use crate::taxonomy::{
    ClassEntry, ConceptUniverse, DatasetEntry, FlatTaxonomy, TaxonomyFile, TaxonomySet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub name: String,
    pub classes: Vec<ClassEntry>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Universal classes; also the concept universe of every dataset.
    pub classes: Vec<String>,
    /// Relative class frequencies; uniform when absent.
    #[serde(default)]
    pub frequencies: Option<Vec<f64>>,
    /// Distance of each cluster centre from the origin.
    pub scale: f64,
    pub sigma: f64,
    /// Pure-noise feature dimensions appended after the class corners.
    #[serde(default)]
    pub extra_dims: usize,
    pub datasets: Vec<SyntheticDataset>,
    pub test_per_class: usize,
    pub seed: u64,
}

/// A training sample. `hidden` is the true universal class, kept for
/// evaluation and the oracle model only.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub dataset: usize,
    pub label: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub universe: ConceptUniverse,
    pub taxonomies: Vec<FlatTaxonomy>,
    pub train: Vec<LabeledSample>,
    /// Held-out samples labeled with their universal class.
    pub test: Vec<EvalSample>,
}

impl SyntheticSpec {
    pub fn feature_dim(&self) -> usize {
        self.classes.len() + self.extra_dims
    }

    pub fn taxonomy_set(&self) -> Result<TaxonomySet, TrainError> {
        let file = TaxonomyFile {
            notes: Vec::new(),
            universe: self.classes.clone(),
            datasets: self
                .datasets
                .iter()
                .map(|d| DatasetEntry {
                    name: d.name.clone(),
                    classes: d.classes.clone(),
                })
                .collect(),
            names: Default::default(),
            mappings: Default::default(),
        };
        Ok(TaxonomySet::from_file(&file)?)
    }

    fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidSpec(msg));
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        if let Some(f) = &self.frequencies {
            if f.len() != self.classes.len() {
                return bad(format!(
                    "{} frequencies for {} classes",
                    f.len(),
                    self.classes.len()
                ));
            }
            if f.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return bad("frequencies must be finite and non-negative".into());
            }
        }
        Ok(())
    }

    fn frequency(&self, class: usize) -> f64 {
        self.frequencies.as_ref().map_or(1.0, |f| f[class])
    }

    /// Cluster centre of universal class `k`.
    pub fn mean(&self, k: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.feature_dim()];
        m[k] = self.scale;
        m
    }
}

fn draw(spec: &SyntheticSpec, class: usize, normal: &Normal<f64>, rng: &mut impl Rng) -> Vec<f64> {
    spec.mean(class)
        .into_iter()
        .map(|m| m + normal.sample(rng))
        .collect()
}

/// Splits `total` over the weights by largest remainder (ties to the lower index).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Generates stratified training data for every dataset plus a test set
/// with `test_per_class` samples of each universal class. Each dataset and
/// the test set draw from their own seed sub-stream.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData, TrainError> {
    spec.validate()?;
    let set = spec.taxonomy_set()?;
    crate::taxonomy::validate_all(&set.taxonomies)?;
    let normal = Normal::new(0.0, spec.sigma).expect("sigma validated");

    let mut train = Vec::new();
    for (d, (t, entry)) in set.taxonomies.iter().zip(&spec.datasets).enumerate() {
        let coverage = t.coverage(spec.classes.len());
        let covered: Vec<usize> = coverage.iter().collect();
        let weights: Vec<f64> = covered.iter().map(|&k| spec.frequency(k)).collect();
        let counts = apportion(entry.samples, &weights);
        let mut rng =
            ChaCha8Rng::seed_from_u64(substream(spec.seed, &format!("generate/{}", t.name)));
        let mut samples = Vec::with_capacity(entry.samples);
        for (&hidden, &count) in covered.iter().zip(&counts) {
            if count == 0 {
                return Err(TrainError::ZeroSamples {
                    dataset: t.name.clone(),
                    class: spec.classes[hidden].clone(),
                });
            }
            let label = t
                .classes
                .iter()
                .position(|c| c.extent.contains(hidden))
                .expect("covered concept has a class");
            for _ in 0..count {
                samples.push(LabeledSample {
                    features: draw(spec, hidden, &normal, &mut rng),
                    dataset: d,
                    label,
                    hidden,
                });
            }
        }
        train.extend(samples);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, "generate/test"));
    let mut test = Vec::with_capacity(spec.classes.len() * spec.test_per_class);
    for k in 0..spec.classes.len() {
        for _ in 0..spec.test_per_class {
            test.push(EvalSample {
                features: draw(spec, k, &normal, &mut rng),
                truth: k,
            });
        }
    }

    Ok(SyntheticData {
        universe: set.universe,
        taxonomies: set.taxonomies,
        train,
        test,
    })
}
