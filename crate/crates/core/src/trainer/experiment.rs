//! Recognition of a concept that is never labeled on its own.
//!
//! Two dataset splits see the same clusters. Split A folds car, bus and
//! truck into `four-wheels-vehicle`; split B folds car, motorcycle and
//! bicycle into `personal-vehicle`. Cars therefore only ever appear inside
//! an aggregate label and can be recovered as the intersection of the two.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate, train, universal_test_set, LinearSoftmaxModel, SyntheticDataset, SyntheticSpec,
    TrainConfig, TrainError,
};
use crate::label_space::{
    build_naive_concat, build_partial_merge, eval_mapping, TaxonomyKind, TrainingTaxonomy,
};
use crate::loss::{AlphaMode, LossConfig, LossVariant};
use crate::metrics::{cross_eval, ClassIou};
use crate::taxonomy::{build_universal, ClassEntry, FlatTaxonomy};
use crate::trainer::synth::LabeledSample;

/// Vehicle classes reported in the summary table, car first.
pub const FOCUS_CLASSES: [&str; 5] = ["car", "bus", "truck", "motorcycle", "bicycle"];

const BACKGROUND: [&str; 14] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic-light",
    "traffic-sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "train",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Universal logits, plain NLL, aggregate labels ignored.
    NllBaseline,
    NllMax,
    NaiveConcat,
    PartialMerge,
    NllPlus,
    /// Universal logits trained on the hidden true classes.
    Oracle,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        Self::NllBaseline,
        Self::NllMax,
        Self::NaiveConcat,
        Self::PartialMerge,
        Self::NllPlus,
        Self::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NllBaseline => "nll-baseline",
            Self::NllMax => "nll-max",
            Self::NaiveConcat => "naive-concat",
            Self::PartialMerge => "partial-merge",
            Self::NllPlus => "nll-plus",
            Self::Oracle => "oracle",
        }
    }

    pub fn taxonomy_kind(self) -> TaxonomyKind {
        match self {
            Self::NaiveConcat => TaxonomyKind::NaiveConcat,
            Self::PartialMerge => TaxonomyKind::PartialMerge,
            _ => TaxonomyKind::Universal,
        }
    }

    pub fn loss(self) -> LossVariant {
        match self {
            Self::NllMax => LossVariant::NllMax,
            Self::NllPlus => LossVariant::NllPlus,
            _ => LossVariant::Nll,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nll" | "nll-baseline" => Ok(Self::NllBaseline),
            "nllmax" | "nll-max" => Ok(Self::NllMax),
            "naive" | "naive-concat" => Ok(Self::NaiveConcat),
            "merge" | "partial-merge" => Ok(Self::PartialMerge),
            "nllplus" | "nll-plus" | "nll+" => Ok(Self::NllPlus),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!("unknown model variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Background classes besides the five vehicles (at most 14).
    pub background: usize,
    pub scale: f64,
    pub sigma: f64,
    pub extra_dims: usize,
    /// Standard deviation of the initial weights.
    pub init_std: f64,
    /// Relative frequency of each vehicle class other than car.
    pub rare_frequency: f64,
    pub samples_per_split: usize,
    pub test_per_class: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub gamma: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            background: 14,
            scale: 2.0,
            sigma: 0.3,
            extra_dims: 0,
            init_std: 0.01,
            rare_frequency: 1.0,
            samples_per_split: 2000,
            test_per_class: 200,
            epochs: 200,
            batch_size: 64,
            lr_max: 5e-2,
            lr_min: 6e-4,
            gamma: 0.0,
        }
    }
}

impl ExperimentConfig {
    /// Distance between two cluster centres in units of `sigma`.
    pub fn separation(&self) -> f64 {
        self.scale * std::f64::consts::SQRT_2 / self.sigma
    }
}

fn entry(name: &str, concepts: &[&str]) -> ClassEntry {
    ClassEntry {
        name: name.to_string(),
        concepts: concepts.iter().map(|c| c.to_string()).collect(),
    }
}

/// Two splits over the vehicle classes plus `config.background` shared classes.
pub fn unlabeled_concept_spec(config: &ExperimentConfig) -> SyntheticSpec {
    let background = &BACKGROUND[..config.background.min(BACKGROUND.len())];
    let classes: Vec<String> = FOCUS_CLASSES
        .iter()
        .chain(background)
        .map(|c| c.to_string())
        .collect();
    let frequencies = classes
        .iter()
        .map(|c| {
            if FOCUS_CLASSES[1..].contains(&c.as_str()) {
                config.rare_frequency
            } else {
                1.0
            }
        })
        .collect();
    let shared = || background.iter().map(|c| entry(c, &[c]));
    let split_a = std::iter::once(entry("four-wheels-vehicle", &["car", "bus", "truck"]))
        .chain([
            entry("motorcycle", &["motorcycle"]),
            entry("bicycle", &["bicycle"]),
        ])
        .chain(shared())
        .collect();
    let split_b = std::iter::once(entry("personal-vehicle", &["car", "motorcycle", "bicycle"]))
        .chain([entry("bus", &["bus"]), entry("truck", &["truck"])])
        .chain(shared())
        .collect();
    SyntheticSpec {
        classes,
        frequencies: Some(frequencies),
        scale: config.scale,
        sigma: config.sigma,
        extra_dims: config.extra_dims,
        datasets: vec![
            SyntheticDataset {
                name: "split-a".into(),
                classes: split_a,
                samples: config.samples_per_split,
            },
            SyntheticDataset {
                name: "split-b".into(),
                classes: split_b,
                samples: config.samples_per_split,
            },
        ],
        test_per_class: config.test_per_class,
        seed: config.seed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelResult {
    pub model: ModelVariant,
    pub taxonomy: TaxonomyKind,
    pub loss: LossVariant,
    pub logits: usize,
    pub per_class: Vec<ClassIou>,
    pub miou: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub ignored_samples: usize,
}

impl ModelResult {
    pub fn iou(&self, class: &str) -> f64 {
        self.per_class
            .iter()
            .find(|c| c.class == class)
            .and_then(|c| c.iou)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub separation_sigmas: f64,
    pub classes: Vec<String>,
    pub results: Vec<ModelResult>,
}

impl ExperimentReport {
    pub fn result(&self, model: ModelVariant) -> Option<&ModelResult> {
        self.results.iter().find(|r| r.model == model)
    }

    /// Fixed-width IoU table (percent) over the vehicle classes and mIoU.
    pub fn table(&self) -> String {
        let mut out = format!("{:<14}", "model");
        for c in FOCUS_CLASSES {
            out.push_str(&format!("{c:>11}"));
        }
        out.push_str(&format!("{:>8}\n", "mIoU"));
        for r in &self.results {
            out.push_str(&format!("{:<14}", r.model.name()));
            for c in FOCUS_CLASSES {
                out.push_str(&format!("{:>11.1}", 100.0 * r.iou(c)));
            }
            out.push_str(&format!("{:>8.1}\n", 100.0 * r.miou));
        }
        out
    }
}

fn oracle_data(
    samples: &[LabeledSample],
    universal: &FlatTaxonomy,
) -> (Vec<LabeledSample>, Vec<FlatTaxonomy>) {
    let relabeled = samples
        .iter()
        .map(|s| LabeledSample {
            dataset: 0,
            label: s.hidden,
            ..s.clone()
        })
        .collect();
    (relabeled, vec![universal.clone()])
}

/// Trains the requested variants on one generated data set and evaluates
/// each on the universal classes through its evaluation mapping.
pub fn run_unlabeled_concept_experiment(
    config: &ExperimentConfig,
    variants: &[ModelVariant],
) -> Result<ExperimentReport, TrainError> {
    let spec = unlabeled_concept_spec(config);
    let data = generate(&spec)?;
    let ut = build_universal(&data.universe, &data.taxonomies)?;
    let eval_taxonomy = ut.as_flat("universal");
    let test = universal_test_set(&data.test, &ut);
    let (oracle_samples, oracle_taxonomies) = oracle_data(&data.train, &eval_taxonomy);

    let mut results = Vec::with_capacity(variants.len());
    for &variant in variants {
        let (samples, taxonomies) = match variant {
            ModelVariant::Oracle => (&oracle_samples, &oracle_taxonomies),
            _ => (&data.train, &data.taxonomies),
        };
        let training = match variant.taxonomy_kind() {
            TaxonomyKind::NaiveConcat => build_naive_concat(taxonomies)?,
            TaxonomyKind::PartialMerge => build_partial_merge(taxonomies)?,
            TaxonomyKind::Universal => {
                TrainingTaxonomy::universal(&build_universal(&data.universe, taxonomies)?)
            }
        };
        let train_config = TrainConfig {
            epochs: config.epochs,
            batch_size: config.batch_size,
            lr_max: config.lr_max,
            lr_min: config.lr_min,
            loss: LossConfig {
                variant: variant.loss(),
                gamma: config.gamma,
                alpha: AlphaMode::Constant(1.0),
                frozen_modulation: false,
            },
            seed: crate::seed::substream(config.seed, variant.name()),
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::substream(
            config.seed,
            &format!("init/{}", variant.name()),
        ));
        let mut model = LinearSoftmaxModel::random(
            training.len(),
            spec.feature_dim(),
            config.init_std,
            &mut rng,
        );
        let outcome = train(&mut model, samples, taxonomies, &training, &train_config)?;
        let mapping = eval_mapping(&training, &eval_taxonomy);
        let report = cross_eval(&model, &test, &mapping)?;
        results.push(ModelResult {
            model: variant,
            taxonomy: variant.taxonomy_kind(),
            loss: variant.loss(),
            logits: training.len(),
            per_class: report.per_class,
            miou: report.miou,
            initial_loss: outcome.loss_trace.first().copied().unwrap_or(f64::NAN),
            final_loss: outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
            ignored_samples: outcome.ignored,
        });
    }
    Ok(ExperimentReport {
        separation_sigmas: config.separation(),
        classes: spec.classes.clone(),
        config: config.clone(),
        results,
    })
}
