//! Triple masking: an R-GCN encoder plus MLP scorer produces one logit per
//! observed triple, which a Gumbel relaxation pushes towards {0, 1}.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rgcn::{encode, glorot, GraphContext, RgcnConfig, RgcnParams};

/// Default guard against `log` of non-positive values.
pub const DEFAULT_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GumbelVariant {
    /// `σ(q)+p` and `σ(1−q)+p′` inside the logarithms.
    AdditiveNoise,
    /// Binary Gumbel-Softmax over `(log σ(q) + p, log(1−σ(q)) + p′)`.
    #[default]
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelConfig {
    pub temperature: f64,
    pub epsilon: f64,
    pub variant: GumbelVariant,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            epsilon: DEFAULT_EPSILON,
            variant: GumbelVariant::Standard,
        }
    }
}

impl GumbelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature {} must be > 0",
                self.temperature
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::InvalidArgument(format!(
                "epsilon {} outside (0, 1e-6]",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One standard Gumbel draw, `−log(−log u)` with `u` uniform in `(ε, 1−ε)`.
pub fn gumbel_draw<R: Rng>(rng: &mut R, epsilon: f64) -> f64 {
    let u = epsilon + (1.0 - 2.0 * epsilon) * rng.gen::<f64>();
    -(-u.ln()).ln()
}

pub fn sample_gumbel<R: Rng>(rng: &mut R, n: usize, epsilon: f64) -> Vec<f64> {
    (0..n).map(|_| gumbel_draw(rng, epsilon)).collect()
}

/// Scalar relaxation of one logit with noise `(p, p′)`.
pub fn gumbel_discretize(q: f64, p: f64, p_prime: f64, config: &GumbelConfig) -> f64 {
    let tau = config.temperature;
    match config.variant {
        GumbelVariant::AdditiveNoise => {
            let eps = config.epsilon;
            let num = ((sigmoid(q) + p).max(eps).ln() / tau).exp();
            let other = ((sigmoid(1.0 - q) + p_prime).max(eps).ln() / tau).exp();
            num / (num + other)
        }
        GumbelVariant::Standard => {
            let a = (sigmoid(q).ln() + p) / tau;
            let b = ((1.0 - sigmoid(q)).ln() + p_prime) / tau;
            // softmax first component, shifted for stability
            let m = a.max(b);
            let ea = (a - m).exp();
            ea / (ea + (b - m).exp())
        }
    }
}

/// Noise for one relaxation of `n` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelNoise {
    pub p: Vec<f64>,
    pub p_prime: Vec<f64>,
}

impl GumbelNoise {
    pub fn sample<R: Rng>(rng: &mut R, n: usize, epsilon: f64) -> Self {
        let p = sample_gumbel(rng, n, epsilon);
        let p_prime = sample_gumbel(rng, n, epsilon);
        Self { p, p_prime }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            p: vec![0.0; n],
            p_prime: vec![0.0; n],
        }
    }
}

/// Tape version of [`gumbel_discretize`] over an `n×1` logit column.
///
/// `num / (num + other)` is evaluated as `σ(log num − log other)`, the same
/// quantity without overflow at small temperatures. `noise = None` freezes
/// the noise at zero.
pub fn discretize_on_tape(
    tape: &mut Tape,
    logits: Var,
    noise: Option<&GumbelNoise>,
    config: &GumbelConfig,
) -> Result<Var> {
    let n = tape.shape(logits)[0];
    if let Some(nz) = noise {
        if nz.p.len() != n || nz.p_prime.len() != n {
            return Err(Error::shape("gumbel", &[n, 1], &[nz.p.len(), 1]));
        }
    }
    let inv_tau = 1.0 / config.temperature;
    match config.variant {
        GumbelVariant::AdditiveNoise => {
            let eps = config.epsilon;
            let s = tape.sigmoid(logits);
            let flipped = tape.scale(logits, -1.0);
            let flipped = tape.add_scalar(flipped, 1.0);
            let s_other = tape.sigmoid(flipped);
            let (a, b) = match noise {
                Some(nz) => {
                    let p = tape.fixed(Tensor::column(nz.p.clone()));
                    let pp = tape.fixed(Tensor::column(nz.p_prime.clone()));
                    (tape.add(s, p)?, tape.add(s_other, pp)?)
                }
                None => (s, s_other),
            };
            let a = tape.clamp_min(a, eps);
            let b = tape.clamp_min(b, eps);
            let la = tape.log(a);
            let lb = tape.log(b);
            let diff = tape.sub(la, lb)?;
            let diff = tape.scale(diff, inv_tau);
            Ok(tape.sigmoid(diff))
        }
        GumbelVariant::Standard => {
            // log σ(q) − log(1 − σ(q)) = q
            let shifted = match noise {
                Some(nz) => {
                    let delta: Vec<f64> = nz.p.iter().zip(&nz.p_prime).map(|(a, b)| a - b).collect();
                    let d = tape.fixed(Tensor::column(delta));
                    tape.add(logits, d)?
                }
                None => logits,
            };
            let z = tape.scale(shifted, inv_tau);
            Ok(tape.sigmoid(z))
        }
    }
}

/// Encoder parameters: an R-GCN stack, relation embeddings, and a
/// one-hidden-layer MLP over `[H[h] ‖ H[r] ‖ H[t]]`.
///
/// The MLP's first weight is kept as three `d×d` slices (head, relation,
/// tail) so per-entity projections can be computed once and gathered;
/// stacking them row-wise gives the usual `3d×d` matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskerParams {
    pub rgcn: RgcnParams,
    pub relation_embeddings: ParamId,
    pub mlp_head: ParamId,
    pub mlp_relation: ParamId,
    pub mlp_tail: ParamId,
    pub mlp_bias: ParamId,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
}

pub(crate) const PREFIX: &str = "masker";

impl MaskerParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        num_types: usize,
        num_relations: usize,
        config: &RgcnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let rgcn = RgcnParams::init(store, &format!("{PREFIX}.rgcn"), num_types, num_relations, config, rng)?;
        let d = config.hidden_dim;
        let rel = crate::reconstructor::relation_embedding_init(rng, num_relations, d);
        let relation_embeddings = store.add(format!("{PREFIX}.relations"), rel);
        // the three slices share the fan-in of the full 3d×d matrix
        let mlp_head = store.add(format!("{PREFIX}.mlp.head"), glorot(rng, &[d, d], 3 * d, d));
        let mlp_relation = store.add(format!("{PREFIX}.mlp.relation"), glorot(rng, &[d, d], 3 * d, d));
        let mlp_tail = store.add(format!("{PREFIX}.mlp.tail"), glorot(rng, &[d, d], 3 * d, d));
        let mlp_bias = store.add(format!("{PREFIX}.mlp.bias"), Tensor::zeros(&[1, d]));
        let out_weight = store.add(format!("{PREFIX}.out.weight"), glorot(rng, &[d, 1], d, 1));
        let out_bias = store.add(format!("{PREFIX}.out.bias"), Tensor::zeros(&[1, 1]));
        Ok(Self {
            rgcn,
            relation_embeddings,
            mlp_head,
            mlp_relation,
            mlp_tail,
            mlp_bias,
            out_weight,
            out_bias,
        })
    }

    pub fn locate(store: &ParamStore, num_relations: usize, config: &RgcnConfig) -> Result<Self> {
        let find = |name: &str| {
            let full = format!("{PREFIX}.{name}");
            store
                .find(&full)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{full}`")))
        };
        Ok(Self {
            rgcn: RgcnParams::locate(store, &format!("{PREFIX}.rgcn"), num_relations, config)?,
            relation_embeddings: find("relations")?,
            mlp_head: find("mlp.head")?,
            mlp_relation: find("mlp.relation")?,
            mlp_tail: find("mlp.tail")?,
            mlp_bias: find("mlp.bias")?,
            out_weight: find("out.weight")?,
            out_bias: find("out.bias")?,
        })
    }
}

/// Mask logits `q` (`n_triples×1`) for every observed triple, computed over
/// the full unweighted graph.
pub fn mask_logits(
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &GraphContext,
    params: &MaskerParams,
    config: &RgcnConfig,
    dropout_masks: Option<&[Arc<Tensor>]>,
) -> Result<Var> {
    let h = encode(tape, store, ctx, &params.rgcn, config, None, dropout_masks)?;
    let rel = tape.param(store, params.relation_embeddings);
    let wh = tape.param(store, params.mlp_head);
    let wr = tape.param(store, params.mlp_relation);
    let wt = tape.param(store, params.mlp_tail);
    let ph = tape.matmul(h, wh)?;
    let pr = tape.matmul(rel, wr)?;
    let pt = tape.matmul(h, wt)?;
    let b1 = tape.param(store, params.mlp_bias);
    let bias_index: Arc<[usize]> = vec![0; ctx.num_triples()].into();
    let hidden = tape.gather_sum(vec![
        (ph, ctx.heads.clone()),
        (pr, ctx.relations.clone()),
        (pt, ctx.tails.clone()),
        (b1, bias_index),
    ])?;
    let hidden = tape.relu(hidden);
    let w2 = tape.param(store, params.out_weight);
    let b2 = tape.param(store, params.out_bias);
    let q = tape.matmul(hidden, w2)?;
    tape.add_row(q, b2)
}

/// Per-triple mask values, defined only for the observed triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskScores {
    pub logits: Vec<f64>,
    pub sigmoid: Vec<f64>,
    pub discretized: Vec<f64>,
}

impl MaskScores {
    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn mean_discretized(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.discretized.iter().sum::<f64>() / self.len() as f64
        }
    }

    /// Column of discretized values for weighting decoder edges.
    pub fn weights(&self) -> Tensor {
        Tensor::column(self.discretized.clone())
    }
}

/// Deterministic (noise-free, dropout-free) mask for every observed triple.
pub fn score_mask(
    store: &ParamStore,
    ctx: &GraphContext,
    params: &MaskerParams,
    config: &RgcnConfig,
    gumbel: &GumbelConfig,
) -> Result<MaskScores> {
    let mut tape = Tape::new();
    let q = mask_logits(&mut tape, store, ctx, params, config, None)?;
    let logits = tape.value(q).data().to_vec();
    let sig = logits.iter().map(|&v| sigmoid(v)).collect();
    let b = discretize_on_tape(&mut tape, q, None, gumbel)?;
    tape.check_finite()?;
    Ok(MaskScores {
        sigmoid: sig,
        discretized: tape.value(b).data().to_vec(),
        logits,
    })
}

/// CSV `head,relation,tail,logit,sigmoid,discretized` with names from `kg`.
pub fn mask_csv(kg: &crate::graph::KnowledgeGraph, mask: &MaskScores) -> String {
    use crate::graph::csv_field;
    let mut out = String::from("head,relation,tail,logit,sigmoid,discretized\n");
    for (i, t) in kg.triples().iter().enumerate() {
        let (h, r, tl) = kg.triple_names(t);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(h),
            csv_field(r),
            csv_field(tl),
            mask.logits[i],
            mask.sigmoid[i],
            mask.discretized[i]
        ));
    }
    out
}
