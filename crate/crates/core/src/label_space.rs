//! Training label spaces and the matrices that connect them to datasets.
//!
//! Three training taxonomies are supported: naive concatenation of every
//! dataset class, concatenation with equal extents merged, and the
//! universal taxonomy. Scores for dataset classes are sums of
//! training-class probabilities over the mapped columns.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{
    validate_all, ClassMapping, ConceptSet, DatasetMapping, FlatTaxonomy, TaxonomyError,
    UniversalTaxonomy,
};

/// Name of the extra evaluation row for predictions outside every dataset class.
pub const VOID: &str = "void";

#[derive(Debug, Error, PartialEq)]
pub enum LabelSpaceError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("dataset `{0}` is not part of the training taxonomy")]
    UnknownDataset(String),
    #[error("expected a vector of length {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("not a probability vector: {0}")]
    NotProbability(String),
    #[error("all scores are zero")]
    DegenerateScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyKind {
    NaiveConcat,
    PartialMerge,
    Universal,
}

impl TaxonomyKind {
    pub const ALL: [TaxonomyKind; 3] = [Self::NaiveConcat, Self::PartialMerge, Self::Universal];

    pub fn short_name(self) -> &'static str {
        match self {
            Self::NaiveConcat => "naive",
            Self::PartialMerge => "merge",
            Self::Universal => "universal",
        }
    }
}

impl fmt::Display for TaxonomyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TaxonomyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" | "naive_concat" | "naive-concat" => Ok(Self::NaiveConcat),
            "merge" | "partial_merge" | "partial-merge" => Ok(Self::PartialMerge),
            "universal" => Ok(Self::Universal),
            other => Err(format!(
                "unknown taxonomy kind `{other}` (expected naive, merge or universal)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingClass {
    pub name: String,
    pub extent: ConceptSet,
}

/// The label space a model is trained on, plus the label set of every
/// dataset class in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingTaxonomy {
    pub kind: TaxonomyKind,
    pub classes: Vec<TrainingClass>,
    pub train_mapping: Vec<DatasetMapping>,
}

impl TrainingTaxonomy {
    pub fn universal(ut: &UniversalTaxonomy) -> Self {
        Self {
            kind: TaxonomyKind::Universal,
            classes: ut
                .classes
                .iter()
                .map(|c| TrainingClass {
                    name: c.name.clone(),
                    extent: c.extent.clone(),
                })
                .collect(),
            train_mapping: ut.mappings.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn mapping(&self, dataset: &str) -> Result<&DatasetMapping, LabelSpaceError> {
        self.train_mapping
            .iter()
            .find(|m| m.dataset == dataset)
            .ok_or_else(|| LabelSpaceError::UnknownDataset(dataset.to_string()))
    }

    /// Training-class indices permitted for a dataset label.
    pub fn label_set(&self, dataset: &str, class: &str) -> Result<&[usize], LabelSpaceError> {
        self.mapping(dataset)?
            .targets_of(class)
            .ok_or_else(|| LabelSpaceError::UnknownDataset(format!("{dataset}/{class}")))
    }
}

/// One training class per dataset class, named `<dataset>-<class>`.
pub fn build_naive_concat(
    taxonomies: &[FlatTaxonomy],
) -> Result<TrainingTaxonomy, LabelSpaceError> {
    validate_all(taxonomies)?;
    let mut classes = Vec::new();
    let mut train_mapping = Vec::new();
    for t in taxonomies {
        let mut mapping = Vec::new();
        for c in &t.classes {
            mapping.push(ClassMapping {
                class: c.name.clone(),
                targets: vec![classes.len()],
            });
            classes.push(TrainingClass {
                name: format!("{}-{}", t.name, c.name),
                extent: c.extent.clone(),
            });
        }
        train_mapping.push(DatasetMapping {
            dataset: t.name.clone(),
            classes: mapping,
        });
    }
    Ok(TrainingTaxonomy {
        kind: TaxonomyKind::NaiveConcat,
        classes,
        train_mapping,
    })
}

/// Like [`build_naive_concat`], but classes with equal extents share one
/// training class regardless of their names.
///
/// A merged class takes the plain class name when all members agree on it
/// and that name is not otherwise taken; otherwise the prefixed member
/// names joined by `=`.
pub fn build_partial_merge(
    taxonomies: &[FlatTaxonomy],
) -> Result<TrainingTaxonomy, LabelSpaceError> {
    validate_all(taxonomies)?;
    let mut groups: Vec<(ConceptSet, Vec<(String, String)>)> = Vec::new();
    let mut by_extent: HashMap<ConceptSet, usize> = HashMap::new();
    let mut train_mapping = Vec::new();
    for t in taxonomies {
        let mut mapping = Vec::new();
        for c in &t.classes {
            let slot = *by_extent.entry(c.extent.clone()).or_insert_with(|| {
                groups.push((c.extent.clone(), Vec::new()));
                groups.len() - 1
            });
            groups[slot].1.push((t.name.clone(), c.name.clone()));
            mapping.push(ClassMapping {
                class: c.name.clone(),
                targets: vec![slot],
            });
        }
        train_mapping.push(DatasetMapping {
            dataset: t.name.clone(),
            classes: mapping,
        });
    }

    let prefixed = |members: &[(String, String)]| {
        members
            .iter()
            .map(|(d, c)| format!("{d}-{c}"))
            .collect::<Vec<_>>()
            .join("=")
    };
    let mut names: Vec<String> = groups
        .iter()
        .map(|(_, members)| {
            let plain = &members[0].1;
            if members.len() > 1 && members.iter().all(|(_, c)| c == plain) {
                plain.clone()
            } else {
                prefixed(members)
            }
        })
        .collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for n in &names {
        *counts.entry(n.clone()).or_default() += 1;
    }
    for (name, (_, members)) in names.iter_mut().zip(&groups) {
        if counts[name.as_str()] > 1 {
            *name = prefixed(members);
        }
    }

    let classes = groups
        .into_iter()
        .zip(names)
        .map(|((extent, _), name)| TrainingClass { name, extent })
        .collect();
    Ok(TrainingTaxonomy {
        kind: TaxonomyKind::PartialMerge,
        classes,
        train_mapping,
    })
}

pub fn build_training_taxonomy(
    kind: TaxonomyKind,
    universe: &crate::taxonomy::ConceptUniverse,
    taxonomies: &[FlatTaxonomy],
) -> Result<TrainingTaxonomy, LabelSpaceError> {
    match kind {
        TaxonomyKind::NaiveConcat => build_naive_concat(taxonomies),
        TaxonomyKind::PartialMerge => build_partial_merge(taxonomies),
        TaxonomyKind::Universal => Ok(TrainingTaxonomy::universal(
            &crate::taxonomy::build_universal(universe, taxonomies)?,
        )),
    }
}

/// Binary matrix with named rows (dataset classes, optionally a trailing
/// void row) and columns (training classes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingMatrix {
    rows: Vec<String>,
    cols: Vec<String>,
    entries: Vec<bool>,
    has_void: bool,
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: Vec<String>,
    cols: Vec<String>,
    matrix: Vec<Vec<u8>>,
}

impl MappingMatrix {
    fn new(rows: Vec<String>, cols: Vec<String>, has_void: bool) -> Self {
        let entries = vec![false; rows.len() * cols.len()];
        Self {
            rows,
            cols,
            entries,
            has_void,
        }
    }

    fn set(&mut self, r: usize, c: usize) {
        let n = self.cols.len();
        self.entries[r * n + c] = true;
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.entries[r * self.cols.len() + c]
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cols(&self) -> &[String] {
        &self.cols
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn has_void(&self) -> bool {
        self.has_void
    }

    /// Row index of the void row, if the matrix has one.
    pub fn void_row(&self) -> Option<usize> {
        self.has_void.then(|| self.rows.len() - 1)
    }

    /// Column indices set in row `r`.
    pub fn row_targets(&self, r: usize) -> Vec<usize> {
        (0..self.n_cols()).filter(|&c| self.get(r, c)).collect()
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.n_cols())
            .map(|c| (0..self.n_rows()).filter(|&r| self.get(r, c)).count())
            .collect()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let matrix = (0..self.n_rows())
            .map(|r| {
                (0..self.n_cols())
                    .map(|c| u8::from(self.get(r, c)))
                    .collect()
            })
            .collect();
        serde_json::to_value(MatrixJson {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            matrix,
        })
        .expect("matrix serializes")
    }

    /// Plain 0/1 grid, one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.n_rows() {
            let line: Vec<&str> = (0..self.n_cols())
                .map(|c| if self.get(r, c) { "1" } else { "0" })
                .collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Training direction: one row per class of `dataset`, 1 where the training
/// class belongs to the class's label set.
pub fn training_matrix(
    t: &TrainingTaxonomy,
    dataset: &str,
) -> Result<MappingMatrix, LabelSpaceError> {
    let mapping = t.mapping(dataset)?;
    let mut m = MappingMatrix::new(
        mapping.classes.iter().map(|c| c.class.clone()).collect(),
        t.class_names(),
        false,
    );
    for (r, c) in mapping.classes.iter().enumerate() {
        for &k in &c.targets {
            m.set(r, k);
        }
    }
    Ok(m)
}

/// Evaluation direction: each class of `eval` maps to every training class
/// it overlaps; a trailing void row takes the training classes that overlap
/// no class of `eval`.
pub fn eval_mapping(t: &TrainingTaxonomy, eval: &FlatTaxonomy) -> MappingMatrix {
    let mut rows: Vec<String> = eval.classes.iter().map(|c| c.name.clone()).collect();
    rows.push(VOID.to_string());
    let void = rows.len() - 1;
    let mut m = MappingMatrix::new(rows, t.class_names(), true);
    for (k, tc) in t.classes.iter().enumerate() {
        let mut hit = false;
        for (r, c) in eval.classes.iter().enumerate() {
            if !c.extent.is_disjoint(&tc.extent) {
                m.set(r, k);
                hit = true;
            }
        }
        if !hit {
            m.set(void, k);
        }
    }
    m
}

/// Per-row scores, one per row of the mapping matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Index of the largest score; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.0.iter().enumerate() {
            if s > self.0[best] {
                best = i;
            }
        }
        best
    }
}

const SIMPLEX_TOL: f64 = 1e-9;

/// `score(row) = Σ p[col]` over the columns set in that row.
pub fn dataset_scores(p: &[f64], m: &MappingMatrix) -> Result<ScoreVector, LabelSpaceError> {
    if p.len() != m.n_cols() {
        return Err(LabelSpaceError::ShapeMismatch {
            expected: m.n_cols(),
            actual: p.len(),
        });
    }
    if let Some(x) = p.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(LabelSpaceError::NotProbability(format!("entry {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(LabelSpaceError::NotProbability(format!("sums to {total}")));
    }
    Ok(ScoreVector(
        (0..m.n_rows())
            .map(|r| (0..m.n_cols()).filter(|&c| m.get(r, c)).map(|c| p[c]).sum())
            .collect(),
    ))
}

pub fn renormalize(s: &ScoreVector) -> Result<ScoreVector, LabelSpaceError> {
    let total = s.sum();
    if total.is_nan() || total <= 0.0 {
        return Err(LabelSpaceError::DegenerateScores);
    }
    Ok(ScoreVector(s.0.iter().map(|x| x / total).collect()))
}

/// Row with the largest renormalized score; may be the void row.
pub fn predict_dataset_class(p: &[f64], m: &MappingMatrix) -> Result<usize, LabelSpaceError> {
    let scores = dataset_scores(p, m)?;
    Ok(renormalize(&scores)?.argmax())
}
