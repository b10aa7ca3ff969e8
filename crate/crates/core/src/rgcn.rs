//! Relational graph convolution over typed entities.
//!
//! Layer 0 consumes the one-hot type matrix through a dense `|C|×d` map per
//! relation; deeper layers use block-diagonal `d×d` relation weights. An
//! entity `h` receives
//! `act( Σ_r Σ_{j∈N_h^r} (w_hrj / |N_h^r|) · z_j W_r + z_h W_0 )`
//! where `w` are optional per-triple edge weights (all ones if absent).

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{AdjacencyIndex, EntityId, KnowledgeGraph, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgcnConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub dropout: f64,
    /// Applied after every layer but the last, which stays linear.
    pub activation: Activation,
}

impl Default for RgcnConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden_dim: 32,
            num_blocks: 4,
            dropout: 0.1,
            activation: Activation::Relu,
        }
    }
}

impl RgcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::InvalidArgument("R-GCN needs at least one layer".into()));
        }
        if self.hidden_dim == 0 || self.num_blocks == 0 || !self.hidden_dim.is_multiple_of(self.num_blocks) {
            return Err(Error::InvalidArgument(format!(
                "hidden_dim {} must be a positive multiple of num_blocks {}",
                self.hidden_dim, self.num_blocks
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn block_size(&self) -> usize {
        self.hidden_dim / self.num_blocks
    }
}

/// Graph-derived constants shared by every forward pass.
#[derive(Debug, Clone)]
pub struct GraphContext {
    pub adjacency: AdjacencyIndex,
    pub type_features: Tensor,
    pub heads: Arc<[usize]>,
    pub relations: Arc<[usize]>,
    pub tails: Arc<[usize]>,
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_types: usize,
}

impl GraphContext {
    pub fn new(kg: &KnowledgeGraph) -> Self {
        let (heads, relations, tails) = triple_columns(kg.triples());
        Self {
            adjacency: AdjacencyIndex::new(kg),
            type_features: init_type_features(kg),
            heads,
            relations,
            tails,
            num_entities: kg.num_entities(),
            num_relations: kg.num_relations(),
            num_types: kg.num_types(),
        }
    }

    pub fn num_triples(&self) -> usize {
        self.heads.len()
    }
}

/// Head, relation and tail id columns.
pub(crate) type Columns = (Arc<[usize]>, Arc<[usize]>, Arc<[usize]>);

pub(crate) fn triple_columns(triples: &[Triple]) -> Columns {
    (
        triples.iter().map(|t| t.head.0).collect(),
        triples.iter().map(|t| t.relation.0).collect(),
        triples.iter().map(|t| t.tail.0).collect(),
    )
}

/// `|V|×|C|` one-hot rows of each entity's type.
pub fn init_type_features(kg: &KnowledgeGraph) -> Tensor {
    let c = kg.num_types();
    let mut t = Tensor::zeros(&[kg.num_entities(), c]);
    let data = t.data_mut();
    for e in 0..kg.num_entities() {
        data[e * c + kg.type_of(EntityId(e)).0] = 1.0;
    }
    t
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerParams {
    /// One weight per relation: dense `in×out` for layer 0, `[B, s, s]` blocks after.
    pub relation_weights: Vec<ParamId>,
    pub self_weight: ParamId,
    pub block_diagonal: bool,
    pub input_dim: usize,
    pub output_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgcnParams {
    pub layers: Vec<LayerParams>,
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches length")
}

impl RgcnParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        num_types: usize,
        num_relations: usize,
        config: &RgcnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let (nb, s) = (config.num_blocks, config.block_size());
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let input_dim = if l == 0 { num_types } else { d };
            let block_diagonal = l > 0;
            let relation_weights = (0..num_relations)
                .map(|r| {
                    let value = if block_diagonal {
                        glorot(rng, &[nb, s, s], s, s)
                    } else {
                        glorot(rng, &[input_dim, d], input_dim, d)
                    };
                    store.add(format!("{prefix}.layer{l}.rel{r}"), value)
                })
                .collect();
            let self_weight = store.add(
                format!("{prefix}.layer{l}.self"),
                glorot(rng, &[input_dim, d], input_dim, d),
            );
            layers.push(LayerParams {
                relation_weights,
                self_weight,
                block_diagonal,
                input_dim,
                output_dim: d,
            });
        }
        Ok(Self { layers })
    }

    /// Recovers the parameter handles of a stack stored under `prefix`.
    pub fn locate(store: &ParamStore, prefix: &str, num_relations: usize, config: &RgcnConfig) -> Result<Self> {
        let find = |name: String| {
            store
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
        };
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let relation_weights = (0..num_relations)
                .map(|r| find(format!("{prefix}.layer{l}.rel{r}")))
                .collect::<Result<Vec<_>>>()?;
            let self_weight = find(format!("{prefix}.layer{l}.self"))?;
            let sw = store.get(self_weight).value.shape().to_vec();
            layers.push(LayerParams {
                relation_weights,
                self_weight,
                block_diagonal: l > 0,
                input_dim: sw[0],
                output_dim: sw[1],
            });
        }
        Ok(Self { layers })
    }
}

/// Inverted-dropout masks for each layer's `|V|×d` pre-activation, sampled
/// up front so a forward pass can be replayed exactly.
pub fn sample_dropout_masks<R: Rng>(rng: &mut R, config: &RgcnConfig, num_entities: usize) -> Vec<Arc<Tensor>> {
    let p = config.dropout;
    let keep = 1.0 / (1.0 - p);
    (0..config.layers)
        .map(|_| {
            let data = (0..num_entities * config.hidden_dim)
                .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                .collect();
            Arc::new(Tensor::new(vec![num_entities, config.hidden_dim], data).expect("sized"))
        })
        .collect()
}

/// One relational convolution.
///
/// `edge_weights`, if given, is an `n_triples×1` column indexed by triple.
#[allow(clippy::too_many_arguments)]
pub fn layer_forward(
    tape: &mut Tape,
    store: &ParamStore,
    features: Var,
    adjacency: &AdjacencyIndex,
    layer: &LayerParams,
    edge_weights: Option<Var>,
    dropout_mask: Option<Arc<Tensor>>,
    activation: Activation,
) -> Result<Var> {
    let width = tape.shape(features).get(1).copied().unwrap_or(0);
    if width != layer.input_dim {
        return Err(Error::shape("layer_forward", tape.shape(features), &[layer.input_dim]));
    }
    let n = adjacency.num_entities();
    let w0 = tape.param(store, layer.self_weight);
    let mut agg = tape.matmul(features, w0)?;
    // fixed relation order keeps the summation deterministic
    for (edges, &wid) in adjacency.relations().iter().zip(&layer.relation_weights) {
        if edges.is_empty() {
            continue;
        }
        let mut w = tape.param(store, wid);
        if layer.block_diagonal {
            w = tape.block_diag(w)?;
        }
        let projected = tape.matmul(features, w)?;
        let norm = tape.fixed(Tensor::column(edges.inv_degree.clone()));
        let coef = match edge_weights {
            Some(ew) => {
                let picked = tape.gather_rows(ew, edges.triples.clone())?;
                tape.mul(picked, norm)?
            }
            None => norm,
        };
        let summed = tape.spmm(projected, coef, edges.heads.clone(), edges.tails.clone(), n)?;
        agg = tape.add(agg, summed)?;
    }
    if let Some(mask) = dropout_mask {
        agg = tape.dropout(agg, mask)?;
    }
    Ok(activation.apply(tape, agg))
}

/// Runs the full stack from the one-hot type features; returns the last layer.
pub fn encode(
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &GraphContext,
    params: &RgcnParams,
    config: &RgcnConfig,
    edge_weights: Option<Var>,
    dropout_masks: Option<&[Arc<Tensor>]>,
) -> Result<Var> {
    if let Some(ew) = edge_weights {
        if tape.shape(ew) != [ctx.num_triples(), 1] {
            return Err(Error::shape("encode", tape.shape(ew), &[ctx.num_triples(), 1]));
        }
    }
    let mut x = tape.fixed(ctx.type_features.clone());
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let act = if l == last {
            Activation::Identity
        } else {
            config.activation
        };
        let mask = dropout_masks.and_then(|m| m.get(l).cloned());
        x = layer_forward(tape, store, x, &ctx.adjacency, layer, edge_weights, mask, act)?;
    }
    Ok(x)
}
