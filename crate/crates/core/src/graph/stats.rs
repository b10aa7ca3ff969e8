use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{KnowledgeGraph, RelationId, Signature};

/// Distinct `(head type, relation, tail type)` signatures present in `kg`.
pub fn legitimate_signatures(kg: &KnowledgeGraph) -> BTreeSet<Signature> {
    kg.triples().iter().map(|t| kg.signature(t)).collect()
}

/// Fraction of the `|C|·|R|·|C|` signature grid realized by at least one triple.
pub fn compute_ltt(kg: &KnowledgeGraph) -> f64 {
    let grid = kg.num_types() * kg.num_relations() * kg.num_types();
    if grid == 0 {
        return 0.0;
    }
    legitimate_signatures(kg).len() as f64 / grid as f64
}

/// Head-type × tail-type counts for one relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeMatrix {
    pub relation: RelationId,
    n_types: usize,
    counts: Vec<usize>,
}

impl TypeMatrix {
    pub fn get(&self, head_type: usize, tail_type: usize) -> usize {
        self.counts[head_type * self.n_types + tail_type]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    /// CSV with a header row and first column of type names.
    pub fn to_csv(&self, type_names: &[String]) -> String {
        let mut out = String::from("head_type\\tail_type");
        for n in type_names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push('\n');
        for (i, n) in type_names.iter().enumerate() {
            out.push_str(&csv_field(n));
            for j in 0..self.n_types {
                let _ = write!(out, ",{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn relation_type_distribution(kg: &KnowledgeGraph, relation: RelationId) -> TypeMatrix {
    let n = kg.num_types();
    let mut counts = vec![0; n * n];
    for t in kg.triples().iter().filter(|t| t.relation == relation) {
        let (ch, _, ct) = kg.signature(t);
        counts[ch.0 * n + ct.0] += 1;
    }
    TypeMatrix {
        relation,
        n_types: n,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{KnowledgeGraph, Triple, TypeId, Vocab};

    fn graph(n_types: usize, n_rel: usize, type_of: Vec<usize>, triples: Vec<Triple>) -> KnowledgeGraph {
        let ents = Vocab::from_names((0..type_of.len()).map(|i| format!("e{i}"))).unwrap();
        let rels = Vocab::from_names((0..n_rel).map(|i| format!("r{i}"))).unwrap();
        let types = Vocab::from_names((0..n_types).map(|i| format!("T{i}"))).unwrap();
        KnowledgeGraph::from_parts(ents, rels, types, triples, type_of.into_iter().map(TypeId).collect())
            .unwrap()
            .0
    }

    #[test]
    fn single_pattern_over_two_types() {
        // e0:A, e1:B, e2:A, e3:B; every triple is (A, r, B)
        let kg = graph(
            2,
            1,
            vec![0, 1, 0, 1],
            vec![Triple::new(0, 0, 1), Triple::new(2, 0, 3), Triple::new(0, 0, 3)],
        );
        assert_eq!(compute_ltt(&kg), 0.25);
    }

    #[test]
    fn full_grid_is_one() {
        let kg = graph(
            2,
            1,
            vec![0, 1, 0],
            vec![
                Triple::new(0, 0, 2),
                Triple::new(0, 0, 1),
                Triple::new(1, 0, 0),
                Triple::new(1, 0, 1),
            ],
        );
        assert_eq!(compute_ltt(&kg), 1.0);
    }

    #[test]
    fn distribution_cells() {
        let kg = graph(2, 2, vec![0, 1], vec![Triple::new(0, 0, 1)]);
        let m = relation_type_distribution(&kg, RelationId(0));
        assert_eq!(m.get(0, 1), 1);
        assert_eq!(m.total(), 1);
        assert_eq!(relation_type_distribution(&kg, RelationId(1)).total(), 0);
        let csv = m.to_csv(kg.types().names());
        assert_eq!(csv, "head_type\\tail_type,T0,T1\nT0,0,1\nT1,0,0\n");
    }
}
