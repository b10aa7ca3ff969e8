use std::sync::Arc;

use super::{EntityId, KnowledgeGraph, RelationId};

/// Edges of a single relation. Messages flow tail → head, so the heads
/// listed here are the receiving entities and `N_h^r` is the set of tails
/// paired with `h`.
#[derive(Debug, Clone)]
pub struct RelationEdges {
    pub heads: Arc<[usize]>,
    pub tails: Arc<[usize]>,
    /// Index of each edge's triple in the graph.
    pub triples: Arc<[usize]>,
    /// `1 / |N_h^r|` for each edge's head.
    pub inv_degree: Vec<f64>,
}

impl RelationEdges {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

/// Per-relation edge lists plus per-entity neighbor lookup.
#[derive(Debug, Clone)]
pub struct AdjacencyIndex {
    by_relation: Vec<RelationEdges>,
    // per head entity: (relation, tail, triple index), sorted by relation then insertion
    by_entity: Vec<Vec<(usize, usize, usize)>>,
    num_entities: usize,
}

impl AdjacencyIndex {
    pub fn new(kg: &KnowledgeGraph) -> Self {
        let n_rel = kg.num_relations();
        let n_ent = kg.num_entities();
        let mut heads = vec![Vec::new(); n_rel];
        let mut tails = vec![Vec::new(); n_rel];
        let mut idx = vec![Vec::new(); n_rel];
        let mut by_entity = vec![Vec::new(); n_ent];
        for (i, t) in kg.triples().iter().enumerate() {
            let r = t.relation.0;
            heads[r].push(t.head.0);
            tails[r].push(t.tail.0);
            idx[r].push(i);
            by_entity[t.head.0].push((r, t.tail.0, i));
        }
        for list in &mut by_entity {
            list.sort_by_key(|&(r, _, i)| (r, i));
        }
        let mut degree = vec![0usize; n_ent];
        let by_relation = (0..n_rel)
            .map(|r| {
                for &h in &heads[r] {
                    degree[h] += 1;
                }
                let inv_degree = heads[r].iter().map(|&h| 1.0 / degree[h] as f64).collect();
                for &h in &heads[r] {
                    degree[h] = 0;
                }
                RelationEdges {
                    heads: Arc::from(std::mem::take(&mut heads[r])),
                    tails: Arc::from(std::mem::take(&mut tails[r])),
                    triples: Arc::from(std::mem::take(&mut idx[r])),
                    inv_degree,
                }
            })
            .collect();
        Self {
            by_relation,
            by_entity,
            num_entities: n_ent,
        }
    }

    pub fn relation(&self, r: RelationId) -> &RelationEdges {
        &self.by_relation[r.0]
    }

    pub fn relations(&self) -> &[RelationEdges] {
        &self.by_relation
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_edges(&self) -> usize {
        self.by_relation.iter().map(RelationEdges::len).sum()
    }

    fn range(&self, h: EntityId, r: RelationId) -> &[(usize, usize, usize)] {
        let list = &self.by_entity[h.0];
        let lo = list.partition_point(|&(rr, _, _)| rr < r.0);
        let hi = list.partition_point(|&(rr, _, _)| rr <= r.0);
        &list[lo..hi]
    }

    /// `N_h^r`: tails `t` with `(h, r, t)` in the graph.
    pub fn neighbors(&self, h: EntityId, r: RelationId) -> Vec<EntityId> {
        self.range(h, r).iter().map(|&(_, t, _)| EntityId(t)).collect()
    }

    /// Triple indices backing [`neighbors`](Self::neighbors), in the same order.
    pub fn neighbor_triples(&self, h: EntityId, r: RelationId) -> Vec<usize> {
        self.range(h, r).iter().map(|&(_, _, i)| i).collect()
    }

    pub fn degree(&self, h: EntityId, r: RelationId) -> usize {
        self.range(h, r).len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Triple, TypeId, Vocab};

    #[test]
    fn neighbor_lists_and_normalizers() {
        let ents = Vocab::from_names(["a", "b", "c"].map(String::from)).unwrap();
        let rels = Vocab::from_names(["r", "s"].map(String::from)).unwrap();
        let types = Vocab::from_names(["T".to_string()]).unwrap();
        let triples = vec![
            Triple::new(0, 0, 1),
            Triple::new(0, 0, 2),
            Triple::new(0, 1, 2),
            Triple::new(2, 0, 0),
        ];
        let kg = KnowledgeGraph::from_parts(ents, rels, types, triples, vec![TypeId(0); 3])
            .unwrap()
            .0;
        let adj = AdjacencyIndex::new(&kg);
        assert_eq!(
            adj.neighbors(EntityId(0), RelationId(0)),
            vec![EntityId(1), EntityId(2)]
        );
        assert_eq!(adj.neighbor_triples(EntityId(0), RelationId(1)), vec![2]);
        assert_eq!(adj.degree(EntityId(1), RelationId(0)), 0);
        assert_eq!(adj.num_edges(), kg.num_triples());
        assert_eq!(adj.relation(RelationId(0)).inv_degree, vec![0.5, 0.5, 1.0]);
    }
}
