#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use rand::Rng;
use unitax::taxonomy::{ConceptSet, ConceptUniverse, FlatTaxonomy, TaxonomySet};

/// Per dataset, the class slot of every concept (`None` = not covered).
pub type Assignment = Vec<Vec<Option<usize>>>;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load_fixture(name: &str) -> TaxonomySet {
    unitax::taxonomy::load_taxonomy_file(&fixture(name)).expect("fixture loads")
}

/// Builds flat taxonomies from slot assignments; empty slots are skipped
/// and a dataset that covers nothing gets concept 0 as its only class.
pub fn build_instance(assignment: &Assignment) -> (ConceptUniverse, Vec<FlatTaxonomy>) {
    let n = assignment[0].len();
    let universe = ConceptUniverse::new((0..n).map(|i| format!("c{i:02}"))).unwrap();
    let taxonomies = assignment
        .iter()
        .enumerate()
        .map(|(d, slots)| {
            let mut t = FlatTaxonomy::new(format!("D{d}"));
            let max = slots.iter().flatten().max().copied();
            for k in 0..=max.unwrap_or(0) {
                let extent = ConceptSet::from_indices(
                    n,
                    slots
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| **s == Some(k))
                        .map(|(i, _)| i),
                );
                if !extent.is_empty() {
                    t.push(format!("k{k}"), extent).unwrap();
                }
            }
            if t.is_empty() {
                t.push("k0", ConceptSet::from_indices(n, [0])).unwrap();
            }
            t
        })
        .collect();
    (universe, taxonomies)
}

/// 2–4 datasets over at most 32 concepts with at most 10 classes each.
pub fn assignment_strategy() -> impl Strategy<Value = Assignment> {
    (2..=4usize, 1..=32usize).prop_flat_map(|(d, n)| {
        prop::collection::vec(
            prop::collection::vec(prop::option::weighted(0.85, 0..10usize), n),
            d,
        )
    })
}

pub fn random_assignment(rng: &mut impl Rng) -> Assignment {
    let d = rng.random_range(2..=4);
    let n = rng.random_range(1..=32);
    (0..d)
        .map(|_| {
            (0..n)
                .map(|_| rng.random_bool(0.85).then(|| rng.random_range(0..10)))
                .collect()
        })
        .collect()
}

/// A point drawn uniformly from the probability simplex.
pub fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -rng.random::<f64>().max(1e-300).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}
