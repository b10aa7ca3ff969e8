mod common;

use common::*;
use kgd_core::autodiff::{Tape, Tensor};
use kgd_core::detector::{
    complete_from_inference, compress_from_mask, evaluate, fit_from_inference, report_from_inference, Convention,
    NoiseReport, TripleVerdict, REPORT_SCHEMA,
};
use kgd_core::graph::{NoiseLabelSet, Triple};
use kgd_core::masker::{
    gumbel_discretize, mask_logits, sample_gumbel, score_mask, GumbelConfig, GumbelVariant, MaskScores, DEFAULT_EPSILON,
};
use kgd_core::model::{Inference, ModelConfig, RaeModel};
use kgd_core::reconstructor::{decode_embeddings, distmult_logits, Embeddings};
use kgd_core::rgcn::{encode, GraphContext};
use kgd_core::trainer::{objective, reconstruction_loss, Adam, StepInputs, PROB_CLAMP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy() -> kgd_core::graph::KnowledgeGraph {
    graph(
        &[0, 1, 0, 2, 1],
        3,
        2,
        vec![
            Triple::new(0, 0, 1),
            Triple::new(2, 0, 1),
            Triple::new(0, 1, 3),
            Triple::new(4, 1, 3),
            Triple::new(2, 0, 4),
        ],
    )
}

fn tiny_model(kg: &kgd_core::graph::KnowledgeGraph, seed: u64) -> RaeModel {
    let cfg = ModelConfig {
        rgcn: tiny_rgcn(),
        ..ModelConfig::default()
    };
    RaeModel::init(kg, cfg, seed).unwrap()
}

#[test]
fn encoder_matches_loop_reference() {
    let kg = toy().augment_reverse().unwrap();
    let m = tiny_model(&kg, 4);
    let ctx = GraphContext::new(&kg);
    let mut tape = Tape::new();
    let h = encode(&mut tape, &m.store, &ctx, &m.masker.rgcn, &m.config.rgcn, None, None).unwrap();
    let edges: Vec<(Triple, f64)> = kg.triples().iter().map(|&t| (t, 1.0)).collect();
    let reference = reference_encode(&m.store, &m.masker.rgcn, &m.config.rgcn, &kg, &edges);
    let flat: Vec<f64> = reference.into_iter().flatten().collect();
    assert!(max_abs_diff(tape.value(h).data(), &flat) < 1e-12);
}

#[test]
fn mask_mlp_matches_literal_concatenation() {
    let kg = toy();
    let m = tiny_model(&kg, 9);
    let ctx = GraphContext::new(&kg);
    let mut tape = Tape::new();
    let q = mask_logits(&mut tape, &m.store, &ctx, &m.masker, &m.config.rgcn, None).unwrap();
    let got = tape.value(q).data().to_vec();

    let edges: Vec<(Triple, f64)> = kg.triples().iter().map(|&t| (t, 1.0)).collect();
    let h = reference_encode(&m.store, &m.masker.rgcn, &m.config.rgcn, &kg, &edges);
    let v = |id| m.store.get(id).value.clone();
    let rel = v(m.masker.relation_embeddings);
    // stack the three slices into the 3d×d first-layer matrix
    let w1: Vec<Vec<f64>> = [v(m.masker.mlp_head), v(m.masker.mlp_relation), v(m.masker.mlp_tail)]
        .iter()
        .flat_map(|t| (0..t.rows()).map(|i| t.row(i).to_vec()).collect::<Vec<_>>())
        .collect();
    let b1 = v(m.masker.mlp_bias);
    let w2 = v(m.masker.out_weight);
    let b2 = v(m.masker.out_bias).item();
    let d = m.config.rgcn.hidden_dim;
    let expected: Vec<f64> = kg
        .triples()
        .iter()
        .map(|t| {
            let x: Vec<f64> = h[t.head.0]
                .iter()
                .chain(rel.row(t.relation.0))
                .chain(&h[t.tail.0])
                .copied()
                .collect();
            assert_eq!(x.len(), 3 * d);
            let hidden: Vec<f64> = (0..d)
                .map(|j| (b1.data()[j] + (0..3 * d).map(|i| x[i] * w1[i][j]).sum::<f64>()).max(0.0))
                .collect();
            b2 + (0..d).map(|j| hidden[j] * w2.data()[j]).sum::<f64>()
        })
        .collect();
    assert!(max_abs_diff(&got, &expected) < 1e-12);

    let scores = score_mask(&m.store, &ctx, &m.masker, &m.config.rgcn, &m.config.gumbel).unwrap();
    for (b, &l) in scores.discretized.iter().zip(&expected) {
        assert!((b - gumbel_discretize(l, 0.0, 0.0, &m.config.gumbel)).abs() < 1e-12);
    }
}

#[test]
fn unit_embeddings_score_sigmoid_two() {
    let mut rel = Tensor::zeros(&[1, 3]);
    rel.data_mut()[0] = 2.0;
    let mut ent = Tensor::zeros(&[2, 3]);
    ent.data_mut()[0] = 1.0;
    ent.data_mut()[3] = 1.0;
    let e = Embeddings {
        entities: ent,
        relations: rel,
    };
    assert!((e.score(&Triple::new(0, 0, 1)) - 0.88080).abs() < 5e-6);
    assert!((e.score(&Triple::new(0, 0, 1)) - sigmoid(2.0)).abs() < 1e-15);
}

#[test]
fn gumbel_samples_have_euler_mascheroni_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = sample_gumbel(&mut rng, 100_000, DEFAULT_EPSILON);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((mean - 0.5772).abs() < 0.02, "{mean}");
}

#[test]
fn gumbel_variants_hand_values() {
    let additive = GumbelConfig {
        variant: GumbelVariant::AdditiveNoise,
        ..GumbelConfig::default()
    };
    // 0.5 / (0.5 + σ(1))
    assert!((gumbel_discretize(0.0, 0.0, 0.0, &additive) - 0.40616).abs() < 1e-5);
    // with zero noise the standard relaxation at τ = 1 is σ(q)
    let std = GumbelConfig::default();
    for q in [-3.0, -0.2, 0.0, 1.7] {
        assert!((gumbel_discretize(q, 0.0, 0.0, &std) - sigmoid(q)).abs() < 1e-12);
    }
}

#[test]
fn bce_matches_straight_line_reference() {
    let pos = [2.0, -1.0, 40.0, 0.3];
    let neg = [-0.5, 1.5, -40.0, 0.0, 3.0, -2.0, 0.7, 0.1];
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::column(pos.to_vec()));
    let n = tape.constant(Tensor::column(neg.to_vec()));
    let loss = reconstruction_loss(&mut tape, p, n).unwrap();
    let clamp = |s: f64| s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let lp: f64 = pos.iter().map(|&x| clamp(sigmoid(x)).ln()).sum::<f64>() / pos.len() as f64;
    let ln: f64 = neg.iter().map(|&x| clamp(1.0 - sigmoid(x)).ln()).sum::<f64>() / neg.len() as f64;
    assert!((tape.value(loss).item() - (-lp - ln)).abs() < 1e-12);
}

#[test]
fn one_adam_step_lowers_frozen_objective() {
    let kg = toy().augment_reverse().unwrap();
    let cfg = tiny_train();
    let mut m = RaeModel::init(&kg, cfg.model, 2).unwrap();
    let ctx = GraphContext::new(&kg);
    let pos = kg.triples().to_vec();
    let neg: Vec<Triple> = pos
        .iter()
        .map(|t| Triple::new(t.head.0, t.relation.0, (t.tail.0 + 2) % 5))
        .collect();
    let inputs = StepInputs::frozen(pos, neg);
    let eval = |m: &RaeModel| {
        let mut tape = Tape::new();
        let o = objective(&mut tape, &m.store, &ctx, &m.masker, &m.recon, &cfg, &inputs).unwrap();
        (tape.value(o.loss).item(), tape, o.loss)
    };
    let (before, tape, loss) = eval(&m);
    let mut adam = Adam::new(&m.store, 1e-4, 0.0);
    m.store.zero_grad();
    tape.backward(loss).unwrap().accumulate(&mut m.store);
    adam.step(&mut m.store);
    let (after, _, _) = eval(&m);
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn binary_mask_decode_equals_explicit_subgraph() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let kg = random_graph(&mut rng, 9, 3, 2, 20).augment_reverse().unwrap();
    let m = tiny_model(&kg, 1);
    let ctx = GraphContext::new(&kg);
    let bits: Vec<f64> = (0..kg.num_triples()).map(|_| f64::from(rng.gen_bool(0.5))).collect();
    let mut tape = Tape::new();
    let b = tape.constant(Tensor::column(bits.clone()));
    let z = decode_embeddings(&mut tape, &m.store, &ctx, &m.recon, &m.config.rgcn, b, None).unwrap();
    let kept: Vec<(Triple, f64)> = kg
        .triples()
        .iter()
        .zip(&bits)
        .filter(|(_, &b)| b == 1.0)
        .map(|(&t, _)| (t, 1.0))
        .collect();
    let reference = reference_encode(&m.store, &m.recon.rgcn, &m.config.rgcn, &kg, &kept);
    let flat: Vec<f64> = reference.into_iter().flatten().collect();
    assert!(max_abs_diff(tape.value(z).data(), &flat) < 1e-12);
}

#[test]
fn distmult_on_tape_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let rel = Tensor::from_rows(&[vec![0.2, -0.4, 1.1], vec![-0.3, 0.8, 0.5]]);
    let triples = [Triple::new(0, 1, 3), Triple::new(2, 0, 2), Triple::new(3, 1, 0)];
    let mut tape = Tape::new();
    let ent = tape.constant(Tensor::from_rows(&z));
    let r = tape.constant(rel.clone());
    let col = |f: fn(&Triple) -> usize| triples.iter().map(f).collect::<Vec<_>>().into();
    let out = distmult_logits(
        &mut tape,
        ent,
        r,
        col(|t| t.head.0),
        col(|t| t.relation.0),
        col(|t| t.tail.0),
    )
    .unwrap();
    let expected: Vec<f64> = triples.iter().map(|t| distmult(&z, &rel, t)).collect();
    assert!(max_abs_diff(tape.value(out).data(), &expected) < 1e-15);
}

fn random_inference(rng: &mut ChaCha8Rng, n_ent: usize, n_rel: usize, n_triples: usize) -> Inference {
    let d = 3;
    let mut t = |r: usize| {
        let rows: Vec<Vec<f64>> = (0..r)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        Tensor::from_rows(&rows)
    };
    let entities = t(n_ent);
    let relations = t(n_rel);
    Inference {
        mask: MaskScores {
            logits: vec![0.0; n_triples],
            sigmoid: vec![0.5; n_triples],
            discretized: vec![0.5; n_triples],
        },
        embeddings: Embeddings { entities, relations },
    }
}

#[test]
fn fit_score_matches_brute_force() {
    // every (h, r) misses exactly one tail, so every sampled corruption is forced
    let n = 4;
    let type_of = [0, 1, 1, 0];
    let mut triples = Vec::new();
    for h in 0..n {
        for r in 0..2 {
            let missing = (h + r + 1) % n;
            triples.extend((0..n).filter(|&t| t != missing).map(|t| Triple::new(h, r, t)));
        }
    }
    let kg = graph(&type_of, 2, 2, triples);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inf = random_inference(&mut rng, n, 2, kg.num_triples());
    let fit = fit_from_inference(&kg, &inf, 99).unwrap();

    let mut total = 0;
    for e in &fit.entries {
        let members: Vec<&Triple> = kg
            .triples()
            .iter()
            .filter(|t| {
                let (h, r, tl) = (kg.type_of(t.head), t.relation, kg.type_of(t.tail));
                kg.types().name(h.0) == e.head_type
                    && kg.relations().name(r.0) == e.relation
                    && kg.types().name(tl.0) == e.tail_type
            })
            .collect();
        assert_eq!(members.len(), e.frequency);
        total += members.len();
        let brute = members
            .iter()
            .map(|t| {
                let missing = Triple::new(t.head.0, t.relation.0, (t.head.0 + t.relation.0 + 1) % n);
                inf.score(t) - inf.score(&missing)
            })
            .sum::<f64>()
            / members.len() as f64;
        assert!((e.fit_score - brute).abs() < 1e-12, "{e:?} vs {brute}");
    }
    assert_eq!(total, kg.num_triples());
    assert!(fit.entries.windows(2).all(|w| w[0].frequency >= w[1].frequency));
}

#[test]
fn compression_shrinks_as_threshold_rises() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kg = random_graph(&mut rng, 12, 3, 3, 40);
    let mask: Vec<f64> = (0..kg.num_triples()).map(|_| rng.gen()).collect();
    let mut prev = compress_from_mask(&kg, &mask, 0.0);
    assert_eq!(prev.len(), kg.num_triples());
    for th in [0.1, 0.3, 0.5, 0.7, 0.9, 1.01] {
        let cur = compress_from_mask(&kg, &mask, th);
        assert!(cur.iter().all(|t| prev.contains(t)));
        prev = cur;
    }
    assert!(prev.is_empty());
}

#[test]
fn completion_top_candidate_is_exhaustive_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let kg = random_graph(&mut rng, 10, 2, 2, 15);
    let inf = random_inference(&mut rng, 10, 2, kg.num_triples());
    for h in 0..10 {
        for r in 0..2 {
            let cands: Vec<Triple> = (0..10).map(|t| Triple::new(h, r, t)).collect();
            let got = complete_from_inference(&kg, &inf, &cands, 0.0);
            let best = got.iter().max_by(|a, b| a.1.total_cmp(&b.1)).map(|x| x.0);
            let z: Vec<Vec<f64>> = (0..10).map(|e| inf.embeddings.entities.row(e).to_vec()).collect();
            let brute = cands
                .iter()
                .filter(|t| !kg.contains(t))
                .max_by(|a, b| {
                    distmult(&z, &inf.embeddings.relations, a).total_cmp(&distmult(&z, &inf.embeddings.relations, b))
                })
                .copied();
            assert_eq!(best, brute);
        }
    }
    assert!(complete_from_inference(&kg, &inf, &[], 0.0).is_empty());
}

#[test]
fn confusion_matrix_by_hand() {
    // 20 triples: flagged ids 0..5, noisy ids {0, 1, 2, 5, 6, 7, 8}
    let triples: Vec<TripleVerdict> = (0..20)
        .map(|i| TripleVerdict {
            triple: Triple::new(i, 0, i),
            head: format!("e{i}"),
            relation: "r".into(),
            tail: format!("e{i}"),
            score: 0.5,
            mask: 1.0,
            reverse_score: None,
            reverse_mask: None,
            is_noise: i < 5,
        })
        .collect();
    let report = NoiseReport {
        schema: REPORT_SCHEMA,
        threshold: 0.5,
        convention: Convention::LowScoreIsNoise,
        flagged: 5,
        triples,
    };
    let labels = NoiseLabelSet::from_triples([0, 1, 2, 5, 6, 7, 8].map(|i| Triple::new(i, 0, i)));
    let e = evaluate(&report, &labels);
    assert_eq!(
        (e.true_positives, e.false_positives, e.true_negatives, e.false_negatives),
        (3, 2, 11, 4)
    );
    assert!((e.precision - 0.6).abs() < 1e-15);
    assert!((e.recall - 3.0 / 7.0).abs() < 1e-15);
    assert!((e.true_negative_rate - 11.0 / 13.0).abs() < 1e-15);
}

#[test]
fn recall_grows_with_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let kg = random_graph(&mut rng, 30, 3, 2, 120).augment_reverse().unwrap();
    let inf = random_inference(&mut rng, 30, 4, kg.num_triples());
    let report = report_from_inference(&kg, &inf, 0.0, Convention::LowScoreIsNoise);
    let fwd = &kg.triples()[..kg.num_forward_triples()];
    let labels = NoiseLabelSet::from_triples(fwd.iter().step_by(7).copied());
    let mut last = -1.0;
    let mut last_flagged = 0;
    for i in 0..=20 {
        let r = report.rethreshold(i as f64 / 20.0 + 1e-9);
        let e = evaluate(&r, &labels);
        assert!(e.recall >= last);
        assert!(r.flagged >= last_flagged);
        last = e.recall;
        last_flagged = r.flagged;
    }
    assert_eq!(last, 1.0);
}
