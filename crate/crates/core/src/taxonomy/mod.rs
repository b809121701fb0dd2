//! Dataset taxonomies as sets over a finite concept universe.
//!
//! Every dataset class is identified with the set of atomic concepts it
//! covers. Relations between classes (equality, containment, overlap) are
//! then plain set relations, and a universal taxonomy is a partition of the
//! covered concepts in which every dataset class is a union of parts.

mod compile;
mod concept;
mod io;

use std::collections::HashSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

pub use compile::{
    build_universal, build_universal_traced, signature_partition, CompileTrace, Rewrite,
};
pub use concept::{ConceptSet, ConceptUniverse};
pub use io::{
    load_taxonomy_file, parse_taxonomy_json, universal_to_json, ClassEntry, DatasetEntry,
    TaxonomyFile, TaxonomySet,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaxonomyError {
    #[error("concept identifier at position {position} is empty")]
    EmptyConceptId { position: usize },
    #[error("concept `{0}` listed twice in the universe")]
    DuplicateConcept(String),
    #[error("dataset `{dataset}`, class `{class}`: unknown concept `{concept}`")]
    UnknownConcept {
        dataset: String,
        class: String,
        concept: String,
    },
    #[error("dataset `{dataset}`, class `{class}`: class has no concepts")]
    EmptyClass { dataset: String, class: String },
    #[error("relation is undefined for an empty concept set")]
    EmptySet,
    #[error("no taxonomies given")]
    NoTaxonomies,
    #[error("taxonomy `{dataset}` is not flat: {report}")]
    NotFlat { dataset: String, report: FlatReport },
    #[error("dataset name `{0}` used twice")]
    DuplicateDataset(String),
    #[error("taxonomies were built over different universes")]
    UniverseMismatch,
    #[error("name override for unknown universal class `{0}`")]
    UnknownOverride(String),
    #[error("universal class name `{0}` is not unique")]
    DuplicateUniversalName(String),
    #[error("invalid taxonomy JSON: {0}")]
    Json(String),
}

/// One class of a dataset taxonomy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetClass {
    pub dataset: String,
    pub name: String,
    pub extent: ConceptSet,
}

/// A dataset's list of classes. Flatness (pairwise disjoint extents and
/// unique names) is checked by [`validate_flat`], not on construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatTaxonomy {
    pub name: String,
    pub classes: Vec<DatasetClass>,
}

impl FlatTaxonomy {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            classes: Vec::new(),
        }
    }

    /// Appends a class. Empty extents are rejected.
    pub fn push(
        &mut self,
        name: impl Into<String>,
        extent: ConceptSet,
    ) -> Result<(), TaxonomyError> {
        let name = name.into();
        if extent.is_empty() {
            return Err(TaxonomyError::EmptyClass {
                dataset: self.name.clone(),
                class: name,
            });
        }
        self.classes.push(DatasetClass {
            dataset: self.name.clone(),
            name,
            extent,
        });
        Ok(())
    }

    pub fn with_class(
        mut self,
        name: impl Into<String>,
        extent: ConceptSet,
    ) -> Result<Self, TaxonomyError> {
        self.push(name, extent)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    /// Union of all class extents.
    pub fn coverage(&self, capacity: usize) -> ConceptSet {
        let mut all = ConceptSet::empty(capacity);
        for c in &self.classes {
            all.union_with(&c.extent);
        }
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ClassRelation {
    Equal,
    SupersetOf,
    SubsetOf,
    Overlap,
    Disjoint,
}

/// Relation of `a` to `b`. `SupersetOf` and `SubsetOf` are strict.
pub fn relate(a: &ConceptSet, b: &ConceptSet) -> Result<ClassRelation, TaxonomyError> {
    if a.is_empty() || b.is_empty() {
        return Err(TaxonomyError::EmptySet);
    }
    Ok(if a.is_disjoint(b) {
        ClassRelation::Disjoint
    } else if a == b {
        ClassRelation::Equal
    } else if b.is_subset(a) {
        ClassRelation::SupersetOf
    } else if a.is_subset(b) {
        ClassRelation::SubsetOf
    } else {
        ClassRelation::Overlap
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlatViolation {
    /// Two classes share concepts.
    Overlap {
        first: String,
        second: String,
        shared: Vec<usize>,
    },
    DuplicateName {
        name: String,
    },
    EmptyClass {
        name: String,
    },
}

/// Outcome of [`validate_flat`]: empty when the taxonomy is flat.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FlatReport {
    pub violations: Vec<FlatViolation>,
}

impl FlatReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for FlatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| match v {
                FlatViolation::Overlap { first, second, .. } => {
                    format!("`{first}` overlaps `{second}`")
                }
                FlatViolation::DuplicateName { name } => format!("duplicate class name `{name}`"),
                FlatViolation::EmptyClass { name } => format!("class `{name}` is empty"),
            })
            .collect();
        f.write_str(&parts.join("; "))
    }
}

/// Lists every overlapping class pair and every repeated class name.
pub fn validate_flat(taxonomy: &FlatTaxonomy) -> FlatReport {
    let mut report = FlatReport::default();
    let mut seen = HashSet::new();
    for c in &taxonomy.classes {
        if c.extent.is_empty() {
            report.violations.push(FlatViolation::EmptyClass {
                name: c.name.clone(),
            });
        }
        if !seen.insert(c.name.as_str()) {
            report.violations.push(FlatViolation::DuplicateName {
                name: c.name.clone(),
            });
        }
    }
    for (i, a) in taxonomy.classes.iter().enumerate() {
        for b in &taxonomy.classes[i + 1..] {
            if !a.extent.is_disjoint(&b.extent) {
                report.violations.push(FlatViolation::Overlap {
                    first: a.name.clone(),
                    second: b.name.clone(),
                    shared: a.extent.intersection(&b.extent).iter().collect(),
                });
            }
        }
    }
    report
}

pub(crate) fn validate_all(taxonomies: &[FlatTaxonomy]) -> Result<usize, TaxonomyError> {
    let first = taxonomies.first().ok_or(TaxonomyError::NoTaxonomies)?;
    let capacity = first
        .classes
        .first()
        .map(|c| c.extent.capacity())
        .unwrap_or(0);
    let mut names = HashSet::new();
    for t in taxonomies {
        if !names.insert(t.name.as_str()) {
            return Err(TaxonomyError::DuplicateDataset(t.name.clone()));
        }
        let report = validate_flat(t);
        if !report.is_ok() {
            return Err(TaxonomyError::NotFlat {
                dataset: t.name.clone(),
                report,
            });
        }
        if t.classes.iter().any(|c| c.extent.capacity() != capacity) {
            return Err(TaxonomyError::UniverseMismatch);
        }
    }
    Ok(capacity)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniversalClass {
    pub name: String,
    pub extent: ConceptSet,
}

/// Targets of one dataset class, as indices into a class list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMapping {
    pub class: String,
    pub targets: Vec<usize>,
}

/// Mapping of every class of one dataset, in dataset class order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetMapping {
    pub dataset: String,
    pub classes: Vec<ClassMapping>,
}

impl DatasetMapping {
    pub fn targets_of(&self, class: &str) -> Option<&[usize]> {
        self.classes
            .iter()
            .find(|m| m.class == class)
            .map(|m| m.targets.as_slice())
    }
}

/// Disjoint universal classes plus the map from each dataset class onto them.
///
/// Classes are ordered by their lowest concept index; mapping targets are
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniversalTaxonomy {
    pub classes: Vec<UniversalClass>,
    pub mappings: Vec<DatasetMapping>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum InvariantViolation {
    NotDisjoint {
        first: String,
        second: String,
    },
    CoverageMismatch,
    PartialOverlap {
        universal: String,
        dataset: String,
        class: String,
    },
    WrongMapping {
        dataset: String,
        class: String,
    },
    EmptyClass(String),
}

impl UniversalTaxonomy {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn mapping(&self, dataset: &str) -> Option<&DatasetMapping> {
        self.mappings.iter().find(|m| m.dataset == dataset)
    }

    /// Checks disjointness, coverage, the contained-or-disjoint property and
    /// the mappings against the source taxonomies, pair by pair.
    pub fn check_invariants(&self, taxonomies: &[FlatTaxonomy]) -> Vec<InvariantViolation> {
        let mut out = Vec::new();
        let Some(capacity) = self.classes.first().map(|c| c.extent.capacity()) else {
            if taxonomies.iter().any(|t| !t.is_empty()) {
                out.push(InvariantViolation::CoverageMismatch);
            }
            return out;
        };
        for (i, a) in self.classes.iter().enumerate() {
            if a.extent.is_empty() {
                out.push(InvariantViolation::EmptyClass(a.name.clone()));
            }
            for b in &self.classes[i + 1..] {
                if !a.extent.is_disjoint(&b.extent) {
                    out.push(InvariantViolation::NotDisjoint {
                        first: a.name.clone(),
                        second: b.name.clone(),
                    });
                }
            }
        }

        let mut universal = ConceptSet::empty(capacity);
        for u in &self.classes {
            universal.union_with(&u.extent);
        }
        let mut datasets = ConceptSet::empty(capacity);
        for t in taxonomies {
            datasets.union_with(&t.coverage(capacity));
        }
        if universal != datasets {
            out.push(InvariantViolation::CoverageMismatch);
        }

        for t in taxonomies {
            let mapping = self.mapping(&t.name);
            for c in &t.classes {
                let mut expected = Vec::new();
                for (k, u) in self.classes.iter().enumerate() {
                    if u.extent.is_subset(&c.extent) {
                        expected.push(k);
                    } else if !u.extent.is_disjoint(&c.extent) {
                        out.push(InvariantViolation::PartialOverlap {
                            universal: u.name.clone(),
                            dataset: t.name.clone(),
                            class: c.name.clone(),
                        });
                    }
                }
                let mut mapped = ConceptSet::empty(capacity);
                for &k in &expected {
                    mapped.union_with(&self.classes[k].extent);
                }
                let actual = mapping.and_then(|m| m.targets_of(&c.name));
                if actual != Some(expected.as_slice()) || mapped != c.extent {
                    out.push(InvariantViolation::WrongMapping {
                        dataset: t.name.clone(),
                        class: c.name.clone(),
                    });
                }
            }
        }
        out
    }

    /// The universal classes viewed as a single flat taxonomy.
    pub fn as_flat(&self, name: &str) -> FlatTaxonomy {
        FlatTaxonomy {
            name: name.to_string(),
            classes: self
                .classes
                .iter()
                .map(|u| DatasetClass {
                    dataset: name.to_string(),
                    name: u.name.clone(),
                    extent: u.extent.clone(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe() -> ConceptUniverse {
        ConceptUniverse::new(["truck", "pickup", "car", "sky", "road", "marking"]).unwrap()
    }

    fn set(u: &ConceptUniverse, names: &[&str]) -> ConceptSet {
        u.set_of(names.iter().copied()).unwrap()
    }

    #[test]
    fn relate_examples() {
        let u = universe();
        let viper_truck = set(&u, &["truck", "pickup"]);
        let vistas_car = set(&u, &["car", "pickup"]);
        assert_eq!(
            relate(&viper_truck, &vistas_car),
            Ok(ClassRelation::Overlap)
        );
        assert_eq!(
            viper_truck.intersection(&vistas_car),
            set(&u, &["pickup"]),
            "the intersection is the pickup concept"
        );
        assert_eq!(
            relate(&set(&u, &["sky"]), &set(&u, &["sky"])),
            Ok(ClassRelation::Equal)
        );
        assert_eq!(
            relate(&set(&u, &["road"]), &set(&u, &["car"])),
            Ok(ClassRelation::Disjoint)
        );
        assert_eq!(
            relate(&set(&u, &["road", "marking"]), &set(&u, &["marking"])),
            Ok(ClassRelation::SupersetOf)
        );
        assert_eq!(
            relate(&set(&u, &["marking"]), &set(&u, &["road", "marking"])),
            Ok(ClassRelation::SubsetOf)
        );
        assert_eq!(
            relate(&ConceptSet::empty(6), &set(&u, &["car"])),
            Err(TaxonomyError::EmptySet)
        );
    }

    #[test]
    fn validate_flat_reports_overlaps_and_duplicates() {
        let u = universe();
        let ok = FlatTaxonomy::new("d")
            .with_class("road", set(&u, &["road"]))
            .unwrap()
            .with_class("sky", set(&u, &["sky"]))
            .unwrap();
        assert!(validate_flat(&ok).is_ok());

        let overlap = FlatTaxonomy::new("d")
            .with_class("road", set(&u, &["road", "marking"]))
            .unwrap()
            .with_class("marking", set(&u, &["marking"]))
            .unwrap();
        let report = validate_flat(&overlap);
        assert_eq!(
            report.violations,
            vec![FlatViolation::Overlap {
                first: "road".into(),
                second: "marking".into(),
                shared: vec![5],
            }]
        );

        let dup = FlatTaxonomy::new("d")
            .with_class("car", set(&u, &["car"]))
            .unwrap()
            .with_class("car", set(&u, &["truck"]))
            .unwrap();
        assert_eq!(
            validate_flat(&dup).violations,
            vec![FlatViolation::DuplicateName { name: "car".into() }]
        );
    }

    #[test]
    fn empty_class_is_rejected_on_push() {
        let err = FlatTaxonomy::new("d").with_class("void", ConceptSet::empty(6));
        assert!(matches!(err, Err(TaxonomyError::EmptyClass { .. })));
    }
}
