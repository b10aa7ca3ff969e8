//! Joint optimization of masker and reconstructor.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{mcp_value, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, Triple};
use crate::masker::{discretize_on_tape, mask_logits, GumbelNoise, MaskScores, MaskerParams};
use crate::model::{ModelConfig, RaeModel};
use crate::reconstructor::{decode_embeddings, distmult_logits, ReconParams};
use crate::rgcn::{sample_dropout_masks, triple_columns, GraphContext};

/// Probability clamp applied before taking logarithms in the loss.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Sparsity strength.
    pub gamma: f64,
    pub mcp_alpha: f64,
    pub mcp_lambda: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Negatives per positive.
    pub negatives: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            gamma: 0.5,
            mcp_alpha: 10.0,
            mcp_lambda: 1.0,
            learning_rate: 1e-3,
            weight_decay: 5e-5,
            epochs: 10,
            batch_size: 1024,
            negatives: 10,
            seed: 41504,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be >= 0", self.gamma));
        }
        if !(self.mcp_alpha > 0.0 && self.mcp_lambda > 0.0) {
            return bad("MCP alpha and lambda must be > 0".into());
        }
        if !(self.learning_rate > 0.0 && self.weight_decay >= 0.0) {
            return bad("learning rate must be > 0 and weight decay >= 0".into());
        }
        if self.negatives == 0 {
            return bad("need at least one negative per positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }
}

/// `λ|x| − x²/(2α)` for `|x| ≤ αλ`, else `αλ²/2`.
pub fn mcp_penalty(x: f64, alpha: f64, lambda: f64) -> f64 {
    mcp_value(x, alpha, lambda)
}

/// Mean penalty over the discretized mask values.
pub fn sparsity_term(mask: &MaskScores, alpha: f64, lambda: f64) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.discretized
        .iter()
        .map(|&b| mcp_penalty(b, alpha, lambda))
        .sum::<f64>()
        / mask.len() as f64
}

/// `k` corruptions of `positive` with uniformly drawn tails, none of which
/// is an observed triple.
pub fn negative_sample<R: Rng>(kg: &KnowledgeGraph, positive: &Triple, k: usize, rng: &mut R) -> Result<Vec<Triple>> {
    let n = kg.num_entities();
    if k > 0 && n < 2 {
        return Err(Error::InvalidArgument(
            "negative sampling needs at least two entities".into(),
        ));
    }
    let limit = 100 * k;
    let mut out = Vec::with_capacity(k);
    let mut attempts = 0;
    while out.len() < k {
        if attempts == limit {
            return Err(Error::SamplingExhausted {
                head: positive.head.0,
                relation: positive.relation.0,
                tail: positive.tail.0,
                attempts,
            });
        }
        attempts += 1;
        let cand = Triple {
            tail: EntityId(rng.gen_range(0..n)),
            ..*positive
        };
        if !kg.contains(&cand) {
            out.push(cand);
        }
    }
    Ok(out)
}

/// `log` of a probability clamped into `[PROB_CLAMP, 1 − PROB_CLAMP]`.
fn clamped_log(tape: &mut Tape, p: Var) -> Var {
    let lo = tape.clamp_min(p, PROB_CLAMP);
    let comp = tape.scale(lo, -1.0);
    let comp = tape.add_scalar(comp, 1.0);
    let comp = tape.clamp_min(comp, PROB_CLAMP);
    let hi = tape.scale(comp, -1.0);
    let hi = tape.add_scalar(hi, 1.0);
    tape.log(hi)
}

/// Binary cross-entropy over positive and negative DistMult logits.
///
/// With exactly `k` negatives per positive this equals
/// `−mean_pos[log s⁺ + Σ log(1 − s⁻)/k]`.
pub fn reconstruction_loss(tape: &mut Tape, positive_logits: Var, negative_logits: Var) -> Result<Var> {
    let sp = tape.sigmoid(positive_logits);
    let lp = clamped_log(tape, sp);
    let pos = tape.reduce_mean(lp);
    let flipped = tape.scale(negative_logits, -1.0);
    let sn = tape.sigmoid(flipped);
    let ln = clamped_log(tape, sn);
    let neg = tape.reduce_mean(ln);
    let both = tape.add(pos, neg)?;
    Ok(tape.scale(both, -1.0))
}

/// Everything random about one optimization step, drawn up front.
#[derive(Debug, Clone)]
pub struct StepInputs {
    pub positives: Vec<Triple>,
    pub negatives: Vec<Triple>,
    /// `None` freezes the Gumbel noise at zero.
    pub noise: Option<GumbelNoise>,
    pub masker_dropout: Option<Vec<Arc<Tensor>>>,
    pub recon_dropout: Option<Vec<Arc<Tensor>>>,
}

impl StepInputs {
    /// Deterministic inputs: frozen noise, no dropout.
    pub fn frozen(positives: Vec<Triple>, negatives: Vec<Triple>) -> Self {
        Self {
            positives,
            negatives,
            noise: None,
            masker_dropout: None,
            recon_dropout: None,
        }
    }
}

/// Tape handles for the pieces of the objective.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub loss: Var,
    pub reconstruction: Var,
    pub sparsity: Var,
    pub mask: Var,
}

/// Records `reconstruction + γ·sparsity` on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn objective(
    tape: &mut Tape,
    store: &ParamStore,
    ctx: &GraphContext,
    masker: &MaskerParams,
    recon: &ReconParams,
    config: &TrainConfig,
    inputs: &StepInputs,
) -> Result<Objective> {
    let rc = &config.model.rgcn;
    let q = mask_logits(tape, store, ctx, masker, rc, inputs.masker_dropout.as_deref())?;
    let mask = discretize_on_tape(tape, q, inputs.noise.as_ref(), &config.model.gumbel)?;
    let z = decode_embeddings(tape, store, ctx, recon, rc, mask, inputs.recon_dropout.as_deref())?;
    let rel = tape.param(store, recon.relation_embeddings);
    let (ph, pr, pt) = triple_columns(&inputs.positives);
    let pos = distmult_logits(tape, z, rel, ph, pr, pt)?;
    let (nh, nr, nt) = triple_columns(&inputs.negatives);
    let neg = distmult_logits(tape, z, rel, nh, nr, nt)?;
    let reconstruction = reconstruction_loss(tape, pos, neg)?;
    let pen = tape.mcp(mask, config.mcp_alpha, config.mcp_lambda);
    let sparsity = tape.reduce_mean(pen);
    let weighted = tape.scale(sparsity, config.gamma);
    let loss = tape.add(reconstruction, weighted)?;
    Ok(Objective {
        loss,
        reconstruction,
        sparsity,
        mask,
    })
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            second: zeros.clone(),
            first: zeros,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let g = p.grad.data().to_vec();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *w -= self.learning_rate * (mhat / (vhat.sqrt() + self.epsilon) + self.weight_decay * *w);
            }
        }
    }
}

/// Per-epoch averages over the epoch's steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon_loss: f64,
    pub sparsity_loss: f64,
    /// `recon_loss + γ·sparsity_loss`.
    pub total: f64,
    /// Mean discretized mask value seen during the epoch's steps.
    pub mean_mask: f64,
}

pub fn metrics_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,recon_loss,sparsity_loss,total,mean_mask\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.recon_loss, r.sparsity_loss, r.total, r.mean_mask
        ));
    }
    out
}

/// JSON record written next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub config: TrainConfig,
    pub seed: u64,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RaeModel,
    pub history: Vec<EpochRecord>,
}

/// Trains on an augmented graph. See [`train_with`] for per-epoch hooks.
pub fn train(kg: &KnowledgeGraph, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(kg, config, |_, _, _| Ok(()))
}

/// Trains and calls `on_epoch(epoch, model, history)` after every epoch.
///
/// Parameters are initialized from `config.seed`; shuffling, dropout,
/// Gumbel noise and negatives come from a second stream of the same seed.
pub fn train_with<F>(kg: &KnowledgeGraph, config: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &RaeModel, &[EpochRecord]) -> Result<()>,
{
    if !kg.is_augmented() {
        return Err(Error::NotAugmented);
    }
    config.validate()?;
    let mut model = RaeModel::init(kg, config.model, config.seed)?;
    let ctx = GraphContext::new(kg);
    let mut adam = Adam::new(&model.store, config.learning_rate, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let rc = config.model.rgcn;
    let eps = config.model.gumbel.epsilon;
    let n_ent = kg.num_entities();
    let mut order: Vec<usize> = (0..kg.num_triples()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut recon_sum, mut sparse_sum, mut mask_sum, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let positives: Vec<Triple> = chunk.iter().map(|&i| kg.triples()[i]).collect();
            let mut negatives = Vec::with_capacity(positives.len() * config.negatives);
            for p in &positives {
                negatives.extend(negative_sample(kg, p, config.negatives, &mut rng)?);
            }
            let dropout = rc.dropout > 0.0;
            let inputs = StepInputs {
                positives,
                negatives,
                masker_dropout: dropout.then(|| sample_dropout_masks(&mut rng, &rc, n_ent)),
                recon_dropout: dropout.then(|| sample_dropout_masks(&mut rng, &rc, n_ent)),
                noise: Some(GumbelNoise::sample(&mut rng, ctx.num_triples(), eps)),
            };
            let abort = |e: Error| Error::TrainingAborted {
                epoch,
                step,
                source: Box::new(e),
            };
            let mut tape = Tape::new();
            let obj = objective(
                &mut tape,
                &model.store,
                &ctx,
                &model.masker,
                &model.recon,
                config,
                &inputs,
            )
            .map_err(abort)?;
            let loss = tape.value(obj.loss).item();
            if !loss.is_finite() {
                let err = tape.check_finite().err().unwrap_or(Error::NonFinite {
                    op: "loss",
                    node: obj.loss.index(),
                });
                return Err(abort(err));
            }
            let grads = tape.backward(obj.loss).map_err(abort)?;
            model.store.zero_grad();
            grads.accumulate(&mut model.store);
            adam.step(&mut model.store);

            recon_sum += tape.value(obj.reconstruction).item();
            sparse_sum += tape.value(obj.sparsity).item();
            let m = tape.value(obj.mask);
            mask_sum += m.data().iter().sum::<f64>() / m.len().max(1) as f64;
            steps += 1;
        }
        let denom = steps.max(1) as f64;
        let (recon_loss, sparsity_loss) = (recon_sum / denom, sparse_sum / denom);
        history.push(EpochRecord {
            epoch,
            recon_loss,
            sparsity_loss,
            total: recon_loss + config.gamma * sparsity_loss,
            mean_mask: mask_sum / denom,
        });
        on_epoch(epoch, &model, &history)?;
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::toy;

    #[test]
    fn mcp_closed_forms() {
        assert_eq!(mcp_penalty(0.0, 10.0, 1.0), 0.0);
        assert!((mcp_penalty(0.5, 10.0, 1.0) - 0.4875).abs() < 1e-15);
        assert!((mcp_penalty(10.0, 10.0, 1.0) - 5.0).abs() < 1e-12);
        assert_eq!(mcp_penalty(20.0, 10.0, 1.0), 5.0);
    }

    #[test]
    fn bce_at_one_half() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::column(vec![0.0; 4]));
        let n = tape.constant(Tensor::column(vec![0.0; 40]));
        let l = reconstruction_loss(&mut tape, p, n).unwrap();
        assert!((tape.value(l).item() - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn negatives_avoid_observed() {
        let kg = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos = kg.triples()[0];
        assert!(negative_sample(&kg, &pos, 0, &mut rng).unwrap().is_empty());
        let neg = negative_sample(&kg, &pos, 20, &mut rng).unwrap();
        assert_eq!(neg.len(), 20);
        assert!(neg
            .iter()
            .all(|t| !kg.contains(t) && t.head == pos.head && t.relation == pos.relation));
    }

    #[test]
    fn requires_augmented_graph() {
        assert!(matches!(
            train(&toy(), &TrainConfig::default()),
            Err(Error::NotAugmented)
        ));
    }
}
