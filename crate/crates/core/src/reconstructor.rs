//! Decoder: an R-GCN whose edges are weighted by the mask, scored with a
//! bilinear-diagonal (DistMult) head.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{sigmoid, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{csv_field, KnowledgeGraph, Triple};
use crate::rgcn::{encode, GraphContext, RgcnConfig, RgcnParams};

pub(crate) const PREFIX: &str = "recon";

/// Standard normal entries scaled by 0.1.
pub(crate) fn relation_embedding_init<R: Rng>(rng: &mut R, num_relations: usize, dim: usize) -> Tensor {
    let normal = Normal::new(0.0, 0.1).expect("valid deviation");
    let data = (0..num_relations * dim).map(|_| normal.sample(rng)).collect();
    Tensor::new(vec![num_relations, dim], data).expect("sized")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconParams {
    pub rgcn: RgcnParams,
    pub relation_embeddings: ParamId,
}

impl ReconParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        num_types: usize,
        num_relations: usize,
        config: &RgcnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let rgcn = RgcnParams::init(store, &format!("{PREFIX}.rgcn"), num_types, num_relations, config, rng)?;
        let rel = relation_embedding_init(rng, num_relations, config.hidden_dim);
        let relation_embeddings = store.add(format!("{PREFIX}.relations"), rel);
        Ok(Self {
            rgcn,
            relation_embeddings,
        })
    }

    pub fn locate(store: &ParamStore, num_relations: usize, config: &RgcnConfig) -> Result<Self> {
        let name = format!("{PREFIX}.relations");
        Ok(Self {
            rgcn: RgcnParams::locate(store, &format!("{PREFIX}.rgcn"), num_relations, config)?,
            relation_embeddings: store
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?,
        })
    }
}

/// Entity embeddings `Z` from the mask-weighted graph.
///
/// `mask` must be an `n_triples×1` column aligned with the graph's triples.
pub fn decode_embeddings(
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &GraphContext,
    params: &ReconParams,
    config: &RgcnConfig,
    mask: Var,
    dropout_masks: Option<&[Arc<Tensor>]>,
) -> Result<Var> {
    let shape = tape.shape(mask);
    if shape.len() != 2 || shape[1] != 1 || shape[0] != ctx.num_triples() {
        return Err(Error::MaskMismatch {
            expected: ctx.num_triples(),
            found: shape.iter().product(),
        });
    }
    encode(tape, store, ctx, &params.rgcn, config, Some(mask), dropout_masks)
}

/// `Σ_k Z[h]_k · R[r]_k · Z[t]_k` for each `(h, r, t)` column entry, as an `n×1` column.
pub fn distmult_logits(
    tape: &mut Tape,
    entities: Var,
    relations: Var,
    heads: Arc<[usize]>,
    rels: Arc<[usize]>,
    tails: Arc<[usize]>,
) -> Result<Var> {
    let zh = tape.gather_rows(entities, heads)?;
    let zr = tape.gather_rows(relations, rels)?;
    let zt = tape.gather_rows(entities, tails)?;
    let hr = tape.mul(zh, zr)?;
    let hrt = tape.mul(hr, zt)?;
    tape.row_sum(hrt)
}

/// Detached embeddings for scoring arbitrary triples without a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub entities: Tensor,
    pub relations: Tensor,
}

impl Embeddings {
    pub fn logit(&self, t: &Triple) -> f64 {
        let h = self.entities.row(t.head.0);
        let r = self.relations.row(t.relation.0);
        let tl = self.entities.row(t.tail.0);
        h.iter().zip(r).zip(tl).map(|((a, b), c)| a * b * c).sum()
    }

    /// Reconstruction score `σ(⟨z_h, r, z_t⟩)` in `(0, 1)`.
    pub fn score(&self, t: &Triple) -> f64 {
        sigmoid(self.logit(t))
    }

    pub fn num_entities(&self) -> usize {
        self.entities.rows()
    }
}

/// CSV `head,relation,tail,score` for `triples`.
pub fn scores_csv(kg: &KnowledgeGraph, triples: &[Triple], scores: &[f64]) -> String {
    let mut out = String::from("head,relation,tail,score\n");
    for (t, s) in triples.iter().zip(scores) {
        let (h, r, tl) = kg.triple_names(t);
        out.push_str(&format!("{},{},{},{}\n", csv_field(h), csv_field(r), csv_field(tl), s));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityId, RelationId};

    #[test]
    fn distmult_tape_matches_detached() {
        let ent = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]]);
        let rel = Tensor::from_rows(&[vec![0.5, -1.0]]);
        let mut tape = Tape::new();
        let e = tape.constant(ent.clone());
        let r = tape.constant(rel.clone());
        let out = distmult_logits(&mut tape, e, r, Arc::from([0, 2]), Arc::from([0, 0]), Arc::from([1, 0])).unwrap();
        let emb = Embeddings {
            entities: ent,
            relations: rel,
        };
        // 1·0.5·(−1) + 2·(−1)·0.5 = −1.5
        assert!((tape.value(out).data()[0] + 1.5).abs() < 1e-15);
        let t = Triple {
            head: EntityId(2),
            relation: RelationId(0),
            tail: EntityId(0),
        };
        assert!((tape.value(out).data()[1] - emb.logit(&t)).abs() < 1e-15);
        assert!((emb.score(&t) - sigmoid(emb.logit(&t))).abs() < 1e-15);
    }
}
