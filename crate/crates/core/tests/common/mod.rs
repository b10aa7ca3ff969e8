#![allow(dead_code)]

use kgd_core::autodiff::{ParamStore, Tensor};
use kgd_core::graph::{EntityId, KnowledgeGraph, RelationId, Triple, TypeId, Vocab};
use kgd_core::rgcn::{Activation, RgcnConfig, RgcnParams};
use kgd_core::trainer::TrainConfig;
use rand::Rng;

pub fn graph(type_of: &[usize], n_types: usize, n_rel: usize, triples: Vec<Triple>) -> KnowledgeGraph {
    let ents = Vocab::from_names((0..type_of.len()).map(|i| format!("e{i}"))).unwrap();
    let rels = Vocab::from_names((0..n_rel).map(|i| format!("r{i}"))).unwrap();
    let types = Vocab::from_names((0..n_types).map(|i| format!("T{i}"))).unwrap();
    KnowledgeGraph::from_parts(ents, rels, types, triples, type_of.iter().map(|&c| TypeId(c)).collect())
        .unwrap()
        .0
}

/// Random graph with every entity typed and at least one triple.
pub fn random_graph<R: Rng>(
    rng: &mut R,
    n_ent: usize,
    n_types: usize,
    n_rel: usize,
    n_triples: usize,
) -> KnowledgeGraph {
    let type_of: Vec<usize> = (0..n_ent).map(|_| rng.gen_range(0..n_types)).collect();
    let triples = (0..n_triples)
        .map(|_| {
            Triple::new(
                rng.gen_range(0..n_ent),
                rng.gen_range(0..n_rel),
                rng.gen_range(0..n_ent),
            )
        })
        .collect();
    graph(&type_of, n_types, n_rel, triples)
}

pub fn tiny_rgcn() -> RgcnConfig {
    RgcnConfig {
        layers: 2,
        hidden_dim: 4,
        num_blocks: 2,
        dropout: 0.0,
        activation: Activation::Relu,
    }
}

pub fn tiny_train() -> TrainConfig {
    let mut c = TrainConfig {
        epochs: 2,
        batch_size: 64,
        negatives: 2,
        ..TrainConfig::default()
    };
    c.model.rgcn = tiny_rgcn();
    c
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn dense_weight(t: &Tensor, block_diagonal: bool) -> Vec<Vec<f64>> {
    if !block_diagonal {
        return rows(t);
    }
    let (nb, s) = (t.shape()[0], t.shape()[1]);
    let d = nb * s;
    let mut w = vec![vec![0.0; d]; d];
    for b in 0..nb {
        for i in 0..s {
            for j in 0..s {
                w[b * s + i][b * s + j] = t.data()[(b * s + i) * s + j];
            }
        }
    }
    w
}

fn vec_mat(x: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let out = w[0].len();
    (0..out)
        .map(|j| x.iter().zip(w).map(|(a, row)| a * row[j]).sum())
        .collect()
}

/// Straight-loop relational convolution. Messages run along `edges`
/// (tail → head, scaled by the edge weight) and are divided by the head's
/// per-relation degree in `degree_graph`.
pub fn reference_encode(
    store: &ParamStore,
    params: &RgcnParams,
    config: &RgcnConfig,
    degree_graph: &KnowledgeGraph,
    edges: &[(Triple, f64)],
) -> Vec<Vec<f64>> {
    let n = degree_graph.num_entities();
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|e| {
            let mut row = vec![0.0; degree_graph.num_types()];
            row[degree_graph.type_of(EntityId(e)).0] = 1.0;
            row
        })
        .collect();
    let degree = |h: usize, r: usize| {
        degree_graph
            .triples()
            .iter()
            .filter(|t| t.head.0 == h && t.relation == RelationId(r))
            .count() as f64
    };
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let w0 = rows(&store.get(layer.self_weight).value);
        let wr: Vec<Vec<Vec<f64>>> = layer
            .relation_weights
            .iter()
            .map(|&id| dense_weight(&store.get(id).value, layer.block_diagonal))
            .collect();
        let mut next: Vec<Vec<f64>> = x.iter().map(|row| vec_mat(row, &w0)).collect();
        for (t, w) in edges {
            let (h, r, j) = (t.head.0, t.relation.0, t.tail.0);
            let msg = vec_mat(&x[j], &wr[r]);
            let c = degree(h, r);
            for (o, m) in next[h].iter_mut().zip(msg) {
                *o += w / c * m;
            }
        }
        if l != last && config.activation == Activation::Relu {
            for v in next.iter_mut().flatten() {
                *v = v.max(0.0);
            }
        }
        x = next;
    }
    x
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn distmult(z: &[Vec<f64>], rel: &Tensor, t: &Triple) -> f64 {
    let r = rel.row(t.relation.0);
    (0..r.len()).map(|k| z[t.head.0][k] * r[k] * z[t.tail.0][k]).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
