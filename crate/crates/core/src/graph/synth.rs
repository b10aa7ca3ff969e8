//! Synthetic typed graphs, planted type-inconsistent noise, and type-label corruption.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stats::legitimate_signatures;
use super::{EntityId, KnowledgeGraph, NoiseLabelSet, RelationId, Signature, Triple, TypeId, Vocab};
use crate::error::{Error, Result};

fn ratio_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

/// `per_relation` distinct `(head type, tail type)` pairs for every relation.
pub fn random_patterns(
    n_types: usize,
    n_relations: usize,
    per_relation: usize,
    seed: u64,
) -> Result<BTreeSet<Signature>> {
    let grid = n_types * n_types;
    if per_relation > grid {
        return Err(Error::InvalidArgument(format!(
            "{per_relation} patterns per relation exceed the {grid} type pairs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeSet::new();
    for r in 0..n_relations {
        for i in index::sample(&mut rng, grid, per_relation) {
            out.insert((TypeId(i / n_types), RelationId(r), TypeId(i % n_types)));
        }
    }
    Ok(out)
}

/// Typed graph whose triples all follow `legal_patterns`.
///
/// Entity `i` gets type `i % n_types`. The requested triples are split
/// evenly over the patterns (earlier patterns take the remainder) and each
/// pattern's share is drawn uniformly without replacement from its
/// compatible, non-self-loop entity pairs.
pub fn generate_synthetic_kg(
    n_types: usize,
    n_relations: usize,
    n_entities: usize,
    legal_patterns: &BTreeSet<Signature>,
    n_triples: usize,
    seed: u64,
) -> Result<KnowledgeGraph> {
    if n_types == 0 || n_relations == 0 {
        return Err(Error::InvalidArgument("need at least one type and one relation".into()));
    }
    for &(ch, r, ct) in legal_patterns {
        if ch.0 >= n_types || ct.0 >= n_types || r.0 >= n_relations {
            return Err(Error::InvalidArgument(format!(
                "pattern ({ch}, {r}, {ct}) references unknown ids"
            )));
        }
    }
    if n_triples > 0 && legal_patterns.is_empty() {
        return Err(Error::InvalidArgument("no legal patterns to sample from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_type: Vec<Vec<usize>> = (0..n_types)
        .map(|c| (c..n_entities).step_by(n_types).collect())
        .collect();

    let n_pat = legal_patterns.len().max(1);
    let mut triples = Vec::with_capacity(n_triples);
    for (k, &(ch, r, ct)) in legal_patterns.iter().enumerate() {
        let quota = n_triples / n_pat + usize::from(k < n_triples % n_pat);
        let heads = &by_type[ch.0];
        let tails = &by_type[ct.0];
        let same = ch == ct;
        let tail_choices = if same {
            tails.len().saturating_sub(1)
        } else {
            tails.len()
        };
        let capacity = heads.len() * tail_choices;
        if quota > capacity {
            return Err(Error::CapacityExhausted {
                head_type: ch.0,
                relation: r.0,
                tail_type: ct.0,
                capacity,
                requested: quota,
            });
        }
        for i in index::sample(&mut rng, capacity, quota) {
            let hi = i / tail_choices;
            let mut ti = i % tail_choices;
            if same && ti >= hi {
                ti += 1;
            }
            triples.push(Triple::new(heads[hi], r.0, tails[ti]));
        }
    }
    // interleave patterns so file order carries no structure
    for i in (1..triples.len()).rev() {
        let j = rng.gen_range(0..=i);
        triples.swap(i, j);
    }

    let entities = Vocab::from_names((0..n_entities).map(|i| format!("e{i}")))?;
    let relations = Vocab::from_names((0..n_relations).map(|r| format!("rel{r}")))?;
    let types = Vocab::from_names((0..n_types).map(|c| format!("type{c}")))?;
    let type_of = (0..n_entities).map(|i| TypeId(i % n_types)).collect();
    let (kg, dups) = KnowledgeGraph::from_parts(entities, relations, types, triples, type_of)?;
    debug_assert_eq!(dups, 0);
    Ok(kg)
}

/// Appends `round(rate·|triples|)` triples whose type signature does not
/// occur in `kg`, each made by replacing the head or tail of a random
/// existing triple. Returns the noisy graph and the injected triples.
pub fn inject_type_noise(kg: &KnowledgeGraph, rate: f64, seed: u64) -> Result<(KnowledgeGraph, NoiseLabelSet)> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise rate {rate} must be a finite ratio >= 0"
        )));
    }
    if kg.is_augmented() {
        return Err(Error::InvalidArgument(
            "inject noise before reverse augmentation".into(),
        ));
    }
    let count = ratio_count(rate, kg.num_triples());
    if count == 0 {
        return Ok((kg.clone(), NoiseLabelSet::new()));
    }
    let legit = legitimate_signatures(kg);
    let present_types: BTreeSet<TypeId> = kg.type_map().iter().copied().collect();
    let constructible = legit.iter().any(|&(ch, r, ct)| {
        present_types
            .iter()
            .any(|&x| !legit.contains(&(x, r, ct)) || !legit.contains(&(ch, r, x)))
    });
    if !constructible || kg.num_entities() < 2 {
        return Err(Error::NoIllegitimateSignature);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = kg.triples();
    let n_ent = kg.num_entities();
    let mut seen: HashSet<Triple> = HashSet::with_capacity(count);
    let mut injected = Vec::with_capacity(count);
    let max_attempts = 1000 * count + 10_000;
    let mut attempts = 0;
    while injected.len() < count {
        if attempts == max_attempts {
            return Err(Error::InvalidArgument(format!(
                "only {} of {count} noise triples could be constructed",
                injected.len()
            )));
        }
        attempts += 1;
        let src = base[rng.gen_range(0..base.len())];
        let e = EntityId(rng.gen_range(0..n_ent));
        let cand = if rng.gen_bool(0.5) {
            Triple { head: e, ..src }
        } else {
            Triple { tail: e, ..src }
        };
        if cand.head == cand.tail || legit.contains(&kg.signature(&cand)) || kg.contains(&cand) || !seen.insert(cand) {
            continue;
        }
        injected.push(cand);
    }
    let mut noisy = kg.clone();
    let added = noisy.extend_triples(injected.iter().copied());
    debug_assert_eq!(added, count);
    Ok((noisy, NoiseLabelSet::from_triples(injected)))
}

/// Gives `round(fraction·|V|)` distinct random entities a different random type.
pub fn corrupt_type_labels(kg: &KnowledgeGraph, fraction: f64, seed: u64) -> Result<KnowledgeGraph> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "corruption fraction {fraction} outside [0, 1]"
        )));
    }
    let n = ratio_count(fraction, kg.num_entities());
    if n == 0 {
        return Ok(kg.clone());
    }
    let n_types = kg.num_types();
    if n_types < 2 {
        return Err(Error::InvalidArgument(
            "type corruption needs at least two types".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut type_of = kg.type_map().to_vec();
    for e in index::sample(&mut rng, kg.num_entities(), n) {
        let old = type_of[e].0;
        let mut c = rng.gen_range(0..n_types - 1);
        if c >= old {
            c += 1;
        }
        type_of[e] = TypeId(c);
    }
    kg.with_type_map(type_of)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::compute_ltt;

    fn patterns() -> BTreeSet<Signature> {
        random_patterns(4, 3, 2, 7).unwrap()
    }

    #[test]
    fn zero_triples_gives_empty_graph() {
        let kg = generate_synthetic_kg(4, 3, 20, &patterns(), 0, 1).unwrap();
        assert_eq!(kg.num_triples(), 0);
        assert_eq!(kg.num_entities(), 20);
        assert_eq!(kg.num_types(), 4);
    }

    #[test]
    fn generated_triples_follow_patterns() {
        let pats = patterns();
        let kg = generate_synthetic_kg(4, 3, 40, &pats, 300, 3).unwrap();
        assert_eq!(kg.num_triples(), 300);
        assert!(kg.triples().iter().all(|t| pats.contains(&kg.signature(t))));
        let expected = pats.len() as f64 / (4.0 * 4.0 * 3.0);
        assert_eq!(compute_ltt(&kg), expected);
    }

    #[test]
    fn capacity_error_names_pattern() {
        let mut pats = BTreeSet::new();
        pats.insert((TypeId(0), RelationId(0), TypeId(0)));
        // 2 entities of type 0 → 2 ordered non-loop pairs
        let err = generate_synthetic_kg(2, 1, 4, &pats, 3, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::CapacityExhausted {
                head_type: 0,
                relation: 0,
                tail_type: 0,
                capacity: 2,
                ..
            }
        ));
    }

    #[test]
    fn noise_rate_zero_is_identity() {
        let kg = generate_synthetic_kg(4, 3, 40, &patterns(), 200, 3).unwrap();
        let (noisy, labels) = inject_type_noise(&kg, 0.0, 9).unwrap();
        assert!(labels.is_empty());
        assert_eq!(noisy, kg);
    }

    #[test]
    fn injected_triples_are_illegitimate_and_labeled() {
        let kg = generate_synthetic_kg(4, 3, 60, &patterns(), 400, 3).unwrap();
        let legit = legitimate_signatures(&kg);
        let (noisy, labels) = inject_type_noise(&kg, 0.05, 9).unwrap();
        assert_eq!(labels.len(), 20);
        assert_eq!(noisy.num_triples(), 420);
        assert!(labels.is_subset_of(&noisy));
        for t in labels.iter() {
            assert!(!legit.contains(&noisy.signature(t)));
        }
        let again = inject_type_noise(&kg, 0.05, 9).unwrap();
        assert_eq!(again.0, noisy);
        assert_eq!(again.1, labels);
    }

    #[test]
    fn fully_legitimate_graph_cannot_take_noise() {
        let mut pats = BTreeSet::new();
        pats.insert((TypeId(0), RelationId(0), TypeId(0)));
        let kg = generate_synthetic_kg(1, 1, 10, &pats, 20, 0).unwrap();
        assert!(matches!(
            inject_type_noise(&kg, 0.5, 0),
            Err(Error::NoIllegitimateSignature)
        ));
    }

    #[test]
    fn corruption_counts() {
        let pats = random_patterns(5, 2, 3, 1).unwrap();
        let kg = generate_synthetic_kg(5, 2, 1000, &pats, 500, 2).unwrap();
        let same = corrupt_type_labels(&kg, 0.0, 4).unwrap();
        assert_eq!(same.type_map(), kg.type_map());
        let c = corrupt_type_labels(&kg, 0.01, 4).unwrap();
        let diff = kg.type_map().iter().zip(c.type_map()).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 10);
        assert_eq!(c.triples(), kg.triples());
        assert_eq!(corrupt_type_labels(&kg, 0.01, 4).unwrap(), c);
    }

    #[test]
    fn corruption_needs_two_types() {
        let mut pats = BTreeSet::new();
        pats.insert((TypeId(0), RelationId(0), TypeId(0)));
        let kg = generate_synthetic_kg(1, 1, 10, &pats, 5, 0).unwrap();
        assert!(corrupt_type_labels(&kg, 0.5, 0).is_err());
        assert!(corrupt_type_labels(&kg, 0.0, 0).is_ok());
    }
}
