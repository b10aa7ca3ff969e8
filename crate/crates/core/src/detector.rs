//! Inference on a trained model: noise verdicts, per-signature fit,
//! compression and completion.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{csv_field, KnowledgeGraph, NoiseLabelSet, Signature, Triple};
use crate::model::{Inference, RaeModel};
use crate::trainer::negative_sample;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Negatives per positive when computing fit scores.
pub const FIT_NEGATIVES: usize = 10;
pub const REPORT_SCHEMA: u32 = 1;

/// Which side of the threshold counts as noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// Noise iff reconstruction score `< threshold`.
    #[default]
    LowScoreIsNoise,
    /// Noise iff reconstruction score `≥ threshold`.
    HighScoreIsNoise,
}

impl Convention {
    pub fn flags(self, score: f64, threshold: f64) -> bool {
        match self {
            Convention::LowScoreIsNoise => score < threshold,
            Convention::HighScoreIsNoise => score >= threshold,
        }
    }
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::LowScoreIsNoise => "low-score-is-noise",
            Convention::HighScoreIsNoise => "high-score-is-noise",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low-score-is-noise" => Ok(Convention::LowScoreIsNoise),
            "high-score-is-noise" => Ok(Convention::HighScoreIsNoise),
            other => Err(Error::InvalidArgument(format!("unknown convention `{other}`"))),
        }
    }
}

/// Verdict for one forward triple, merged over both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleVerdict {
    pub triple: Triple,
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub score: f64,
    pub mask: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reverse_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reverse_mask: Option<f64>,
    pub is_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub schema: u32,
    pub threshold: f64,
    pub convention: Convention,
    /// Number of flagged forward triples.
    pub flagged: usize,
    pub triples: Vec<TripleVerdict>,
}

impl NoiseReport {
    pub fn noisy(&self) -> impl Iterator<Item = &TripleVerdict> {
        self.triples.iter().filter(|v| v.is_noise)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Flagged triples, lowest score first.
    pub fn flagged_tsv(&self) -> String {
        let mut rows: Vec<&TripleVerdict> = self.noisy().collect();
        rows.sort_by(|a, b| a.min_score().total_cmp(&b.min_score()).then(a.triple.cmp(&b.triple)));
        let mut out = String::from("head\trelation\ttail\tscore\treverse_score\tmask\n");
        for v in rows {
            let rev = v.reverse_score.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                v.head, v.relation, v.tail, v.score, rev, v.mask
            ));
        }
        out
    }

    /// Re-applies the report's convention at another threshold.
    pub fn rethreshold(&self, threshold: f64) -> NoiseReport {
        let mut out = self.clone();
        out.threshold = threshold;
        for v in &mut out.triples {
            v.is_noise = self.convention.flags(v.score, threshold)
                || v.reverse_score.is_some_and(|s| self.convention.flags(s, threshold));
        }
        out.flagged = out.triples.iter().filter(|v| v.is_noise).count();
        out
    }
}

impl TripleVerdict {
    fn min_score(&self) -> f64 {
        self.reverse_score.map_or(self.score, |r| r.min(self.score))
    }
}

/// Scores every observed triple and reports verdicts per forward triple.
pub fn detect_noise(
    kg: &KnowledgeGraph,
    model: &RaeModel,
    threshold: f64,
    convention: Convention,
) -> Result<NoiseReport> {
    let inf = model.infer(kg)?;
    Ok(report_from_inference(kg, &inf, threshold, convention))
}

pub fn report_from_inference(
    kg: &KnowledgeGraph,
    inf: &Inference,
    threshold: f64,
    convention: Convention,
) -> NoiseReport {
    let n_fwd = kg.num_forward_triples();
    let triples: Vec<TripleVerdict> = (0..n_fwd)
        .map(|i| {
            let t = kg.triples()[i];
            let score = inf.score(&t);
            let rev = kg.reverse_index(i);
            let reverse_score = rev.map(|j| inf.score(&kg.triples()[j]));
            let is_noise =
                convention.flags(score, threshold) || reverse_score.is_some_and(|s| convention.flags(s, threshold));
            let (h, r, tl) = kg.triple_names(&t);
            TripleVerdict {
                triple: t,
                head: h.to_string(),
                relation: r.to_string(),
                tail: tl.to_string(),
                score,
                mask: inf.mask.discretized[i],
                reverse_score,
                reverse_mask: rev.map(|j| inf.mask.discretized[j]),
                is_noise,
            }
        })
        .collect();
    NoiseReport {
        schema: REPORT_SCHEMA,
        threshold,
        convention,
        flagged: triples.iter().filter(|v| v.is_noise).count(),
        triples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub head_type: String,
    pub relation: String,
    pub tail_type: String,
    pub frequency: usize,
    pub fit_score: f64,
}

/// Fit score per forward triple type, most frequent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub entries: Vec<FitEntry>,
}

impl FitReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("head_type,relation,tail_type,frequency,fit_score\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&e.head_type),
                csv_field(&e.relation),
                csv_field(&e.tail_type),
                e.frequency,
                e.fit_score
            ));
        }
        out
    }

    pub fn get(&self, head_type: &str, relation: &str, tail_type: &str) -> Option<&FitEntry> {
        self.entries
            .iter()
            .find(|e| e.head_type == head_type && e.relation == relation && e.tail_type == tail_type)
    }
}

/// For each forward signature, the mean over its triples of
/// `score(triple) − mean score of FIT_NEGATIVES tail corruptions`.
pub fn fit_frequency(kg: &KnowledgeGraph, model: &RaeModel, seed: u64) -> Result<FitReport> {
    let inf = model.infer(kg)?;
    fit_from_inference(kg, &inf, seed)
}

pub fn fit_from_inference(kg: &KnowledgeGraph, inf: &Inference, seed: u64) -> Result<FitReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc: BTreeMap<Signature, (usize, f64)> = BTreeMap::new();
    for t in &kg.triples()[..kg.num_forward_triples()] {
        let negs = negative_sample(kg, t, FIT_NEGATIVES, &mut rng)?;
        let neg_mean = negs.iter().map(|n| inf.score(n)).sum::<f64>() / FIT_NEGATIVES as f64;
        let e = acc.entry(kg.signature(t)).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += inf.score(t) - neg_mean;
    }
    let mut entries: Vec<FitEntry> = acc
        .into_iter()
        .map(|((ch, r, ct), (n, sum))| FitEntry {
            head_type: kg.types().name(ch.0).to_string(),
            relation: kg.relations().name(r.0).to_string(),
            tail_type: kg.types().name(ct.0).to_string(),
            frequency: n,
            fit_score: sum / n as f64,
        })
        .collect();
    // stable sort keeps signature order among ties
    entries.sort_by_key(|e| std::cmp::Reverse(e.frequency));
    Ok(FitReport { entries })
}

/// Observed triples whose mask value is at least `threshold`.
pub fn compress(kg: &KnowledgeGraph, model: &RaeModel, threshold: f64) -> Result<Vec<Triple>> {
    let inf = model.infer(kg)?;
    Ok(compress_from_mask(kg, &inf.mask.discretized, threshold))
}

pub fn compress_from_mask(kg: &KnowledgeGraph, mask: &[f64], threshold: f64) -> Vec<Triple> {
    kg.triples()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m >= threshold)
        .map(|(t, _)| *t)
        .collect()
}

/// Unobserved candidates scoring at least `threshold`, in candidate order.
pub fn complete(
    kg: &KnowledgeGraph,
    model: &RaeModel,
    candidates: &[Triple],
    threshold: f64,
) -> Result<Vec<(Triple, f64)>> {
    let inf = model.infer(kg)?;
    Ok(complete_from_inference(kg, &inf, candidates, threshold))
}

pub fn complete_from_inference(
    kg: &KnowledgeGraph,
    inf: &Inference,
    candidates: &[Triple],
    threshold: f64,
) -> Vec<(Triple, f64)> {
    candidates
        .iter()
        .filter(|t| !kg.contains(t))
        .map(|t| (*t, inf.score(t)))
        .filter(|&(_, s)| s >= threshold)
        .collect()
}

/// Confusion counts with "noise" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub true_negative_rate: f64,
}

impl Evaluation {
    /// Empty denominators: recall and TNR are 1; precision is 1 when nothing
    /// was missed and 0 otherwise.
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize, empty: f64| if a + b == 0 { empty } else { a as f64 / (a + b) as f64 };
        Self {
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_,
            precision: ratio(tp, fp, if fn_ == 0 { 1.0 } else { 0.0 }),
            recall: ratio(tp, fn_, 1.0),
            true_negative_rate: ratio(tn, fp, 1.0),
        }
    }
}

pub fn evaluate(report: &NoiseReport, labels: &NoiseLabelSet) -> Evaluation {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for v in &report.triples {
        match (v.is_noise, labels.is_noise(&v.triple)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Evaluation::from_counts(tp, fp, tn, fn_)
}
