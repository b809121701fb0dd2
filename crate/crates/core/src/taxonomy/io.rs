//! JSON taxonomy files.
//!
//! ```json
//! {"universe": ["sky", "road"],
//!  "datasets": [{"name": "CS", "classes": [{"name": "sky", "concepts": ["sky"]}]}]}
//! ```
//!
//! A compiled universal taxonomy is written in the same layout, as a single
//! dataset named `universal`, followed by a `mappings` object from each
//! dataset class to the names of its universal classes. An optional `names`
//! object in the input renames generated universal classes.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{ConceptUniverse, FlatTaxonomy, TaxonomyError, UniversalTaxonomy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub concepts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub classes: Vec<ClassEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyFile {
    /// Free-form remarks; ignored by the compiler.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub universe: Vec<String>,
    pub datasets: Vec<DatasetEntry>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub names: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub mappings: IndexMap<String, IndexMap<String, Vec<String>>>,
}

/// A loaded taxonomy file: the universe plus one flat taxonomy per dataset.
#[derive(Debug, Clone)]
pub struct TaxonomySet {
    pub universe: ConceptUniverse,
    pub taxonomies: Vec<FlatTaxonomy>,
    /// Generated universal class name → display name.
    pub names: IndexMap<String, String>,
}

impl TaxonomySet {
    pub fn from_file(file: &TaxonomyFile) -> Result<Self, TaxonomyError> {
        let universe = ConceptUniverse::new(file.universe.iter().cloned())?;
        let mut taxonomies = Vec::with_capacity(file.datasets.len());
        for d in &file.datasets {
            let mut t = FlatTaxonomy::new(d.name.clone());
            for c in &d.classes {
                let extent = universe
                    .set_of(c.concepts.iter().map(String::as_str))
                    .map_err(|concept| TaxonomyError::UnknownConcept {
                        dataset: d.name.clone(),
                        class: c.name.clone(),
                        concept,
                    })?;
                t.push(c.name.clone(), extent)?;
            }
            taxonomies.push(t);
        }
        Ok(Self {
            universe,
            taxonomies,
            names: file.names.clone(),
        })
    }

    pub fn taxonomy(&self, name: &str) -> Option<&FlatTaxonomy> {
        self.taxonomies.iter().find(|t| t.name == name)
    }

    /// Runs the rewrite compiler and applies the display-name overrides.
    pub fn compile(&self) -> Result<UniversalTaxonomy, TaxonomyError> {
        let mut ut = super::build_universal(&self.universe, &self.taxonomies)?;
        ut.rename(self.names.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(ut)
    }
}

pub fn parse_taxonomy_json(text: &str) -> Result<TaxonomySet, TaxonomyError> {
    let file: TaxonomyFile =
        serde_json::from_str(text).map_err(|e| TaxonomyError::Json(e.to_string()))?;
    TaxonomySet::from_file(&file)
}

pub fn load_taxonomy_file(path: &Path) -> Result<TaxonomySet, TaxonomyError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TaxonomyError::Json(format!("{}: {e}", path.display())))?;
    parse_taxonomy_json(&text)
}

/// Serializes a compiled taxonomy; output ends with a newline.
pub fn universal_to_json(universe: &ConceptUniverse, ut: &UniversalTaxonomy) -> String {
    let file = TaxonomyFile {
        notes: Vec::new(),
        universe: universe.concepts().to_vec(),
        datasets: vec![DatasetEntry {
            name: "universal".to_string(),
            classes: ut
                .classes
                .iter()
                .map(|c| ClassEntry {
                    name: c.name.clone(),
                    concepts: universe.names_of(&c.extent),
                })
                .collect(),
        }],
        names: IndexMap::new(),
        mappings: ut
            .mappings
            .iter()
            .map(|m| {
                let classes = m
                    .classes
                    .iter()
                    .map(|c| {
                        let targets = c
                            .targets
                            .iter()
                            .map(|&k| ut.classes[k].name.clone())
                            .collect();
                        (c.class.clone(), targets)
                    })
                    .collect();
                (m.dataset.clone(), classes)
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("taxonomy serializes");
    text.push('\n');
    text
}
