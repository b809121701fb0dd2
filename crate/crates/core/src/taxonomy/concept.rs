use std::collections::HashMap;
use std::fmt;

use super::TaxonomyError;

/// An ordered list of atomic concept identifiers.
///
/// The position of a concept in this list is its index in every
/// [`ConceptSet`] built over the universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptUniverse {
    concepts: Vec<String>,
    index: HashMap<String, usize>,
}

impl ConceptUniverse {
    pub fn new<I, S>(concepts: I) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let concepts: Vec<String> = concepts.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(concepts.len());
        for (i, c) in concepts.iter().enumerate() {
            if c.is_empty() {
                return Err(TaxonomyError::EmptyConceptId { position: i });
            }
            if index.insert(c.clone(), i).is_some() {
                return Err(TaxonomyError::DuplicateConcept(c.clone()));
            }
        }
        Ok(Self { concepts, index })
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn index_of(&self, concept: &str) -> Option<usize> {
        self.index.get(concept).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.concepts[index]
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    /// Builds a set from concept identifiers; unknown identifiers are returned as `Err`.
    pub fn set_of<'a, I>(&self, names: I) -> Result<ConceptSet, String>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut set = ConceptSet::empty(self.len());
        for name in names {
            match self.index_of(name) {
                Some(i) => set.insert(i),
                None => return Err(name.to_string()),
            }
        }
        Ok(set)
    }

    /// Concept identifiers of `set` in universe order.
    pub fn names_of(&self, set: &ConceptSet) -> Vec<String> {
        set.iter().map(|i| self.concepts[i].clone()).collect()
    }

    /// The generated name of a class: its sorted concept identifiers joined by `+`.
    pub fn canonical_name(&self, set: &ConceptSet) -> String {
        let mut names = self.names_of(set);
        names.sort_unstable();
        names.join("+")
    }
}

const WORD: usize = 64;

/// A subset of a [`ConceptUniverse`], stored as a fixed-width bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ConceptSet {
    words: Vec<u64>,
    capacity: usize,
}

impl ConceptSet {
    pub fn empty(capacity: usize) -> Self {
        Self {
            words: vec![0; capacity.div_ceil(WORD)],
            capacity,
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(capacity: usize, indices: I) -> Self {
        let mut set = Self::empty(capacity);
        for i in indices {
            set.insert(i);
        }
        set
    }

    /// Universe size this set was created for.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn insert(&mut self, i: usize) {
        assert!(
            i < self.capacity,
            "concept index {i} out of range {}",
            self.capacity
        );
        self.words[i / WORD] |= 1 << (i % WORD);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.capacity && self.words[i / WORD] & (1 << (i % WORD)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn first(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(k, w)| k * WORD + w.trailing_zeros() as usize)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(u64, u64) -> u64) -> Self {
        debug_assert_eq!(self.capacity, other.capacity);
        Self {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            capacity: self.capacity,
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn union_with(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// Member indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * WORD + bit)
            })
        })
    }
}

impl fmt::Debug for ConceptSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
