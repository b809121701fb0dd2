//! Compilation of a universal taxonomy from several flat taxonomies.

use std::collections::HashMap;

use serde::Serialize;

use super::{
    validate_all, ClassMapping, ConceptSet, ConceptUniverse, DatasetMapping, FlatTaxonomy,
    TaxonomyError, UniversalClass, UniversalTaxonomy,
};

/// A single rewrite applied to the working multiset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rewrite {
    /// Two equal classes merged into one.
    Merge { kept: usize, removed: usize },
    /// `superset` loses the concepts of `subset`.
    Split { superset: usize, subset: usize },
    /// Two overlapping classes replaced by both differences and the intersection.
    Intersect { first: usize, second: usize },
}

/// Rewrites in application order, with the total multiset cardinality
/// (sum of extent sizes) before the first and after every rewrite.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CompileTrace {
    pub rewrites: Vec<Rewrite>,
    pub potential: Vec<usize>,
}

struct Workspace {
    items: Vec<ConceptSet>,
    /// For every source class (in dataset, class order), the working items it maps to.
    maps: Vec<Vec<usize>>,
}

impl Workspace {
    fn potential(&self) -> usize {
        self.items.iter().map(ConceptSet::len).sum()
    }

    fn find<F>(&self, pred: F) -> Option<(usize, usize)>
    where
        F: Fn(&ConceptSet, &ConceptSet) -> bool,
    {
        let n = self.items.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .find(|&(i, j)| pred(&self.items[i], &self.items[j]))
    }

    fn next_rewrite(&self) -> Option<Rewrite> {
        if let Some((i, j)) = self.find(|a, b| a == b) {
            return Some(Rewrite::Merge {
                kept: i,
                removed: j,
            });
        }
        if let Some((i, j)) = self.find(|a, b| a != b && (a.is_subset(b) || b.is_subset(a))) {
            let (superset, subset) = if self.items[j].is_subset(&self.items[i]) {
                (i, j)
            } else {
                (j, i)
            };
            return Some(Rewrite::Split { superset, subset });
        }
        self.find(|a, b| !a.is_disjoint(b))
            .map(|(first, second)| Rewrite::Intersect { first, second })
    }

    fn apply(&mut self, rewrite: Rewrite) {
        match rewrite {
            Rewrite::Merge { kept, removed } => {
                self.items.remove(removed);
                for targets in &mut self.maps {
                    for t in targets.iter_mut() {
                        if *t == removed {
                            *t = kept;
                        } else if *t > removed {
                            *t -= 1;
                        }
                    }
                    targets.sort_unstable();
                    targets.dedup();
                }
            }
            Rewrite::Split { superset, subset } => {
                self.items[superset] = self.items[superset].difference(&self.items[subset]);
                for targets in &mut self.maps {
                    if targets.contains(&superset) && !targets.contains(&subset) {
                        targets.push(subset);
                    }
                }
            }
            Rewrite::Intersect { first, second } => {
                let common = self.items[first].intersection(&self.items[second]);
                self.items[first] = self.items[first].difference(&common);
                self.items[second] = self.items[second].difference(&common);
                let new = self.items.len();
                self.items.push(common);
                for targets in &mut self.maps {
                    if targets.contains(&first) || targets.contains(&second) {
                        targets.push(new);
                    }
                }
            }
        }
    }
}

/// Compiles the universal taxonomy by rewriting the multiset of all dataset
/// classes until its members are pairwise disjoint.
///
/// Pairs are scanned in (dataset, class) order with the rewrite list kept
/// stable: removed items close their gap, intersections are appended. Each
/// scan applies the first equal pair if any, else the first strict
/// containment, else the first overlap, then starts over.
pub fn build_universal(
    universe: &ConceptUniverse,
    taxonomies: &[FlatTaxonomy],
) -> Result<UniversalTaxonomy, TaxonomyError> {
    build_universal_traced(universe, taxonomies).map(|(u, _)| u)
}

pub fn build_universal_traced(
    universe: &ConceptUniverse,
    taxonomies: &[FlatTaxonomy],
) -> Result<(UniversalTaxonomy, CompileTrace), TaxonomyError> {
    check_inputs(universe, taxonomies)?;
    let items: Vec<ConceptSet> = taxonomies
        .iter()
        .flat_map(|t| t.classes.iter().map(|c| c.extent.clone()))
        .collect();
    let maps = (0..items.len()).map(|i| vec![i]).collect();
    let mut ws = Workspace { items, maps };
    let mut trace = CompileTrace {
        rewrites: Vec::new(),
        potential: vec![ws.potential()],
    };
    while let Some(rewrite) = ws.next_rewrite() {
        ws.apply(rewrite);
        trace.rewrites.push(rewrite);
        trace.potential.push(ws.potential());
        debug_assert!(ws.items.iter().all(|s| !s.is_empty()));
    }
    Ok((finish(universe, taxonomies, ws.items, ws.maps), trace))
}

/// Groups covered concepts by the exact set of dataset classes containing
/// them. Each group becomes one universal class; every dataset class maps
/// to the groups it contains.
pub fn signature_partition(
    universe: &ConceptUniverse,
    taxonomies: &[FlatTaxonomy],
) -> Result<UniversalTaxonomy, TaxonomyError> {
    let capacity = check_inputs(universe, taxonomies)?;
    let classes: Vec<&ConceptSet> = taxonomies
        .iter()
        .flat_map(|t| t.classes.iter().map(|c| &c.extent))
        .collect();
    let mut groups: Vec<ConceptSet> = Vec::new();
    let mut by_signature: HashMap<Vec<usize>, usize> = HashMap::new();
    for concept in 0..capacity {
        let signature: Vec<usize> = classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.contains(concept))
            .map(|(k, _)| k)
            .collect();
        if signature.is_empty() {
            continue;
        }
        let slot = *by_signature.entry(signature).or_insert_with(|| {
            groups.push(ConceptSet::empty(capacity));
            groups.len() - 1
        });
        groups[slot].insert(concept);
    }
    let maps = classes
        .iter()
        .map(|c| {
            groups
                .iter()
                .enumerate()
                .filter(|(_, g)| g.is_subset(c))
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    Ok(finish(universe, taxonomies, groups, maps))
}

fn check_inputs(
    universe: &ConceptUniverse,
    taxonomies: &[FlatTaxonomy],
) -> Result<usize, TaxonomyError> {
    let capacity = validate_all(taxonomies)?;
    if taxonomies.iter().any(|t| !t.is_empty()) && capacity != universe.len() {
        return Err(TaxonomyError::UniverseMismatch);
    }
    Ok(universe.len())
}

/// Orders items by their lowest concept, names them, and rewrites the maps
/// into per-dataset mappings with sorted targets.
fn finish(
    universe: &ConceptUniverse,
    taxonomies: &[FlatTaxonomy],
    items: Vec<ConceptSet>,
    maps: Vec<Vec<usize>>,
) -> UniversalTaxonomy {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by_key(|&i| items[i].first());
    let mut rank = vec![0; items.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let classes = order
        .iter()
        .map(|&i| UniversalClass {
            name: universe.canonical_name(&items[i]),
            extent: items[i].clone(),
        })
        .collect();

    let mut maps = maps.into_iter();
    let mappings = taxonomies
        .iter()
        .map(|t| DatasetMapping {
            dataset: t.name.clone(),
            classes: t
                .classes
                .iter()
                .map(|c| {
                    let mut targets: Vec<usize> = maps
                        .next()
                        .expect("one map per source class")
                        .into_iter()
                        .map(|i| rank[i])
                        .collect();
                    targets.sort_unstable();
                    ClassMapping {
                        class: c.name.clone(),
                        targets,
                    }
                })
                .collect(),
        })
        .collect();
    UniversalTaxonomy { classes, mappings }
}

impl UniversalTaxonomy {
    /// Replaces generated class names. Keys must be current class names and
    /// the resulting names must stay unique.
    pub fn rename<'a, I>(&mut self, overrides: I) -> Result<(), TaxonomyError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        for (from, to) in overrides {
            let class = self
                .classes
                .iter_mut()
                .find(|c| c.name == from)
                .ok_or_else(|| TaxonomyError::UnknownOverride(from.to_string()))?;
            class.name = to.to_string();
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.classes {
            if !seen.insert(c.name.as_str()) {
                return Err(TaxonomyError::DuplicateUniversalName(c.name.clone()));
            }
        }
        Ok(())
    }
}
