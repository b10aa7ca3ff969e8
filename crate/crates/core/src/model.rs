//! The masked auto-encoder: masker and reconstructor parameters in one store.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, ParamStore, Tape};
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::masker::{score_mask, GumbelConfig, MaskScores, MaskerParams};
use crate::reconstructor::{decode_embeddings, Embeddings, ReconParams};
use crate::rgcn::{GraphContext, RgcnConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelConfig {
    pub rgcn: RgcnConfig,
    pub gumbel: GumbelConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.rgcn.validate()?;
        self.gumbel.validate()
    }
}

/// Vocabularies a model was built for, in id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSnapshot {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
    pub types: Vec<String>,
}

impl VocabSnapshot {
    pub fn of(kg: &KnowledgeGraph) -> Self {
        Self {
            entities: kg.entities().names().to_vec(),
            relations: kg.relations().names().to_vec(),
            types: kg.types().names().to_vec(),
        }
    }

    /// Errors unless `kg` has exactly these vocabularies.
    pub fn check(&self, kg: &KnowledgeGraph) -> Result<()> {
        let pairs = [
            ("entity", &self.entities, kg.entities().names()),
            ("relation", &self.relations, kg.relations().names()),
            ("type", &self.types, kg.types().names()),
        ];
        for (what, ours, theirs) in pairs {
            if ours.as_slice() != theirs {
                return Err(Error::VocabularyMismatch(format!(
                    "{what} vocabulary differs: model has {}, graph has {}",
                    ours.len(),
                    theirs.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMeta {
    config: ModelConfig,
    vocab: VocabSnapshot,
}

#[derive(Debug, Clone)]
pub struct RaeModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub masker: MaskerParams,
    pub recon: ReconParams,
    pub vocab: VocabSnapshot,
}

/// Deterministic outputs of one inference pass (noise frozen, no dropout).
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub mask: MaskScores,
    pub embeddings: Embeddings,
}

impl Inference {
    pub fn score(&self, t: &Triple) -> f64 {
        self.embeddings.score(t)
    }
}

impl RaeModel {
    /// Fresh parameters sized to `kg`. Masker weights are drawn first, then
    /// the reconstructor's, from one stream seeded by `seed`.
    pub fn init(kg: &KnowledgeGraph, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (c, r) = (kg.num_types(), kg.num_relations());
        let masker = MaskerParams::init(&mut store, c, r, &config.rgcn, &mut rng)?;
        let recon = ReconParams::init(&mut store, c, r, &config.rgcn, &mut rng)?;
        Ok(Self {
            config,
            store,
            masker,
            recon,
            vocab: VocabSnapshot::of(kg),
        })
    }

    pub fn infer(&self, kg: &KnowledgeGraph) -> Result<Inference> {
        self.vocab.check(kg)?;
        self.infer_in(&GraphContext::new(kg))
    }

    /// Like [`infer`](Self::infer) with a prebuilt context; skips the vocabulary check.
    pub fn infer_in(&self, ctx: &GraphContext) -> Result<Inference> {
        let cfg = &self.config;
        let mask = score_mask(&self.store, ctx, &self.masker, &cfg.rgcn, &cfg.gumbel)?;
        let mut tape = Tape::new();
        let b = tape.constant(mask.weights());
        let z = decode_embeddings(&mut tape, &self.store, ctx, &self.recon, &cfg.rgcn, b, None)?;
        tape.check_finite()?;
        let embeddings = Embeddings {
            entities: tape.value(z).clone(),
            relations: self.store.get(self.recon.relation_embeddings).value.clone(),
        };
        Ok(Inference { mask, embeddings })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_value(ModelMeta {
            config: self.config,
            vocab: self.vocab.clone(),
        })?;
        checkpoint::to_bytes_with_meta(&self.store, Some(meta))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (store, meta) = checkpoint::from_bytes_with_meta(bytes)?;
        let meta: ModelMeta = serde_json::from_value(
            meta.ok_or_else(|| Error::Checkpoint("checkpoint carries no model metadata".into()))?,
        )?;
        meta.config.validate()?;
        let n_rel = meta.vocab.relations.len();
        let masker = MaskerParams::locate(&store, n_rel, &meta.config.rgcn)?;
        let recon = ReconParams::locate(&store, n_rel, &meta.config.rgcn)?;
        Ok(Self {
            config: meta.config,
            store,
            masker,
            recon,
            vocab: meta.vocab,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(Error::at(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(Error::at(path))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::toy;

    #[test]
    fn save_load_round_trip() {
        let kg = toy().augment_reverse().unwrap();
        let cfg = ModelConfig {
            rgcn: RgcnConfig {
                hidden_dim: 8,
                num_blocks: 2,
                ..RgcnConfig::default()
            },
            ..ModelConfig::default()
        };
        let m = RaeModel::init(&kg, cfg, 3).unwrap();
        let back = RaeModel::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back.masker, m.masker);
        assert_eq!(back.recon, m.recon);
        assert_eq!(back.infer(&kg).unwrap(), m.infer(&kg).unwrap());
        let other = toy();
        assert!(matches!(back.infer(&other), Err(Error::VocabularyMismatch(_))));
    }
}
