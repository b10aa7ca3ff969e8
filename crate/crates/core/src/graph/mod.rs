//! Typed knowledge graphs: vocabularies, triples, and the entity type map.

mod adjacency;
pub mod io;
mod stats;
mod synth;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adjacency::{AdjacencyIndex, RelationEdges};
pub use io::{load_graph, LoadReport};
pub(crate) use stats::csv_field;
pub use stats::{compute_ltt, legitimate_signatures, relation_type_distribution, TypeMatrix};
pub use synth::{corrupt_type_labels, generate_synthetic_kg, inject_type_noise, random_patterns};

/// Name given to entities that the type file does not cover.
pub const UNTYPED: &str = "__untyped__";
/// Suffix appended to relation names by [`KnowledgeGraph::augment_reverse`].
pub const REVERSE_SUFFIX: &str = "_reverse";

macro_rules! id_newtype {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_newtype!(EntityId);
id_newtype!(RelationId);
id_newtype!(TypeId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }
}

/// `(head type, relation, tail type)`.
pub type Signature = (TypeId, RelationId, TypeId);

/// Bidirectional string ↔ dense index map, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Result<Self> {
        let mut v = Self::new();
        for n in names {
            if v.index.contains_key(&n) {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary entry `{n}`")));
            }
            v.intern(&n);
        }
        Ok(v)
    }

    /// Index of `name`, inserting it if new.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// A knowledge graph with one type per entity. Relations are their own type.
///
/// After [`augment_reverse`](Self::augment_reverse), relations
/// `R..2R` are the reverses of `0..R` and triple `n + i` is the reverse of
/// triple `i`.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    types: Vocab,
    triples: Vec<Triple>,
    type_of: Vec<TypeId>,
    augmented: bool,
    members: HashSet<Triple>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.relations == other.relations
            && self.types == other.types
            && self.triples == other.triples
            && self.type_of == other.type_of
            && self.augmented == other.augmented
    }
}

impl KnowledgeGraph {
    /// Builds a graph, dropping duplicate triples. Returns the graph and the
    /// number of duplicates removed.
    pub fn from_parts(
        entities: Vocab,
        relations: Vocab,
        types: Vocab,
        triples: Vec<Triple>,
        type_of: Vec<TypeId>,
    ) -> Result<(Self, usize)> {
        if type_of.len() != entities.len() {
            return Err(Error::InvalidArgument(format!(
                "type map covers {} of {} entities",
                type_of.len(),
                entities.len()
            )));
        }
        if let Some(c) = type_of.iter().find(|c| c.0 >= types.len()) {
            return Err(Error::InvalidArgument(format!("type id {c} out of range")));
        }
        let total = triples.len();
        let mut members = HashSet::with_capacity(total);
        let mut kept = Vec::with_capacity(total);
        for t in triples {
            if t.head.0 >= entities.len() || t.tail.0 >= entities.len() || t.relation.0 >= relations.len() {
                return Err(Error::InvalidArgument(format!("triple {t:?} references unknown ids")));
            }
            if members.insert(t) {
                kept.push(t);
            }
        }
        let duplicates = total - kept.len();
        let kg = Self {
            entities,
            relations,
            types,
            triples: kept,
            type_of,
            augmented: false,
            members,
        };
        Ok((kg, duplicates))
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn types(&self) -> &Vocab {
        &self.types
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn type_map(&self) -> &[TypeId] {
        &self.type_of
    }

    pub fn type_of(&self, e: EntityId) -> TypeId {
        self.type_of[e.0]
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.members.contains(t)
    }

    pub fn signature(&self, t: &Triple) -> Signature {
        (self.type_of[t.head.0], t.relation, self.type_of[t.tail.0])
    }

    /// Number of original (non-reverse) relations.
    pub fn num_forward_relations(&self) -> usize {
        if self.augmented {
            self.relations.len() / 2
        } else {
            self.relations.len()
        }
    }

    /// Number of original (non-reverse) triples.
    pub fn num_forward_triples(&self) -> usize {
        if self.augmented {
            self.triples.len() / 2
        } else {
            self.triples.len()
        }
    }

    /// Index of the forward triple that triple `i` is (or is the reverse of).
    pub fn forward_index(&self, i: usize) -> usize {
        i % self.num_forward_triples().max(1)
    }

    /// Index of the reverse counterpart of triple `i`, if augmented.
    pub fn reverse_index(&self, i: usize) -> Option<usize> {
        if !self.augmented {
            return None;
        }
        let n = self.num_forward_triples();
        Some(if i < n { i + n } else { i - n })
    }

    /// `|C| < |V|` holds; violations are reported as warnings, not errors.
    pub fn type_domain_is_smaller(&self) -> bool {
        self.types.len() < self.entities.len()
    }

    /// Adds `(t, r_reverse, h)` for every `(h, r, t)`.
    pub fn augment_reverse(&self) -> Result<Self> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        let r = self.relations.len();
        let mut relations = self.relations.clone();
        for i in 0..r {
            let name = format!("{}{REVERSE_SUFFIX}", self.relations.name(i));
            if relations.get(&name).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "relation `{name}` already exists; cannot add reverse relations"
                )));
            }
            relations.intern(&name);
        }
        let mut triples = self.triples.clone();
        triples.extend(self.triples.iter().map(|t| Triple {
            head: t.tail,
            relation: RelationId(t.relation.0 + r),
            tail: t.head,
        }));
        let members = triples.iter().copied().collect();
        Ok(Self {
            entities: self.entities.clone(),
            relations,
            types: self.types.clone(),
            triples,
            type_of: self.type_of.clone(),
            augmented: true,
            members,
        })
    }

    /// Drops all reverse triples and relations, undoing [`augment_reverse`](Self::augment_reverse).
    pub fn strip_reverse(&self) -> Result<Self> {
        if !self.augmented {
            return Err(Error::NotAugmented);
        }
        let r = self.num_forward_relations();
        let n = self.num_forward_triples();
        let relations = Vocab::from_names(self.relations.names()[..r].iter().cloned())?;
        let triples: Vec<Triple> = self.triples[..n].to_vec();
        Ok(Self {
            entities: self.entities.clone(),
            relations,
            types: self.types.clone(),
            members: triples.iter().copied().collect(),
            triples,
            type_of: self.type_of.clone(),
            augmented: false,
        })
    }

    /// Same graph with a different type map.
    pub fn with_type_map(&self, type_of: Vec<TypeId>) -> Result<Self> {
        if type_of.len() != self.entities.len() || type_of.iter().any(|c| c.0 >= self.types.len()) {
            return Err(Error::InvalidArgument("type map does not fit the graph".into()));
        }
        let mut out = self.clone();
        out.type_of = type_of;
        Ok(out)
    }

    /// Appends triples that are not yet present; returns how many were new.
    pub(crate) fn extend_triples(&mut self, extra: impl IntoIterator<Item = Triple>) -> usize {
        let before = self.triples.len();
        for t in extra {
            if self.members.insert(t) {
                self.triples.push(t);
            }
        }
        self.triples.len() - before
    }

    /// Whether two graphs share entity, relation, and type vocabularies.
    pub fn same_vocabularies(&self, other: &Self) -> bool {
        self.entities == other.entities && self.relations == other.relations && self.types == other.types
    }

    pub fn triple_names(&self, t: &Triple) -> (&str, &str, &str) {
        (
            self.entities.name(t.head.0),
            self.relations.name(t.relation.0),
            self.entities.name(t.tail.0),
        )
    }

    /// Resolves a triple given by names, if every name is known.
    pub fn lookup(&self, head: &str, relation: &str, tail: &str) -> Option<Triple> {
        Some(Triple {
            head: EntityId(self.entities.get(head)?),
            relation: RelationId(self.relations.get(relation)?),
            tail: EntityId(self.entities.get(tail)?),
        })
    }

    pub(crate) fn set_augmented_unchecked(&mut self, augmented: bool) {
        self.augmented = augmented;
    }
}

/// Ground-truth set of planted noise triples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseLabelSet {
    noisy: BTreeSet<Triple>,
}

impl NoiseLabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        Self {
            noisy: triples.into_iter().collect(),
        }
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        self.noisy.insert(t)
    }

    pub fn is_noise(&self, t: &Triple) -> bool {
        self.noisy.contains(t)
    }

    pub fn len(&self) -> usize {
        self.noisy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Triple> {
        self.noisy.iter()
    }

    /// Every labeled triple belongs to `kg`.
    pub fn is_subset_of(&self, kg: &KnowledgeGraph) -> bool {
        self.noisy.iter().all(|t| kg.contains(t))
    }
}
