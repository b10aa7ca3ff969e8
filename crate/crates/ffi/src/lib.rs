//! C ABI over `kgd-core`.
//!
//! Every fallible function returns a [`KgdStatus`]; on failure the message is
//! available from [`kgd_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use kgd_core::detector::{detect_noise, evaluate, Convention, NoiseReport};
use kgd_core::graph::{
    compute_ltt, generate_synthetic_kg, inject_type_noise, load_graph, random_patterns, KnowledgeGraph, NoiseLabelSet,
};
use kgd_core::masker::GumbelVariant;
use kgd_core::model::RaeModel;
use kgd_core::trainer::{train, TrainConfig};
use kgd_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    Shape = 6,
    TrainingFailed = 7,
    VocabularyMismatch = 8,
    Checkpoint = 9,
    Internal = 10,
}

impl From<&Error> for KgdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io(_) | Error::File { .. } => KgdStatus::Io,
            Error::Parse { .. } | Error::Json(_) | Error::EmptyGraph(_) => KgdStatus::Parse,
            Error::Shape { .. } | Error::NonScalarLoss(_) | Error::MaskMismatch { .. } => KgdStatus::Shape,
            Error::TrainingAborted { .. } | Error::NonFinite { .. } => KgdStatus::TrainingFailed,
            Error::VocabularyMismatch(_) => KgdStatus::VocabularyMismatch,
            Error::Checkpoint(_) => KgdStatus::Checkpoint,
            _ => KgdStatus::InvalidArgument,
        }
    }
}

/// A loaded knowledge graph.
pub struct KgdGraph(KnowledgeGraph);
/// A trained model.
pub struct KgdModel(RaeModel);
/// A noise report from [`kgd_detect`].
pub struct KgdReport(NoiseReport);
/// Planted-noise labels from [`kgd_graph_inject_noise`].
pub struct KgdLabels(NoiseLabelSet);

/// Training settings; fill with [`kgd_train_options_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KgdTrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub layers: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub seed: u64,
    pub gamma: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub dropout: f64,
    /// 0 = standard, 1 = additive noise.
    pub gumbel_variant: u32,
}

/// One forward triple's verdict. `reverse_score` is NaN when the graph has no reverse edge.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KgdVerdict {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    pub score: f64,
    pub reverse_score: f64,
    pub mask: f64,
    pub is_noise: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KgdEvaluation {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub true_negative_rate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), KgdStatus>) -> KgdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            KgdStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            KgdStatus::Internal
        }
    }
}

fn fail(e: Error) -> KgdStatus {
    let s = KgdStatus::from(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> KgdStatus {
    set_error(format!("{what} is null"));
    KgdStatus::NullPointer
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, KgdStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        KgdStatus::InvalidUtf8
    })
}

unsafe fn out_arg<T>(out: *mut *mut T, value: T) -> Result<(), KgdStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, KgdStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kgd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn kgd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_load(
    triples_path: *const c_char,
    types_path: *const c_char,
    out: *mut *mut KgdGraph,
) -> KgdStatus {
    guard(|| {
        let t = path_arg(triples_path, "triples_path")?;
        let c = path_arg(types_path, "types_path")?;
        let (kg, _) = load_graph(&t, &c).map_err(fail)?;
        out_arg(out, KgdGraph(kg))
    })
}

/// Synthetic graph whose triples follow `patterns_per_relation` random type pairs per relation.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_synthetic(
    num_types: usize,
    num_relations: usize,
    num_entities: usize,
    patterns_per_relation: usize,
    num_triples: usize,
    seed: u64,
    out: *mut *mut KgdGraph,
) -> KgdStatus {
    guard(|| {
        let pats = random_patterns(num_types, num_relations, patterns_per_relation, seed).map_err(fail)?;
        let kg =
            generate_synthetic_kg(num_types, num_relations, num_entities, &pats, num_triples, seed).map_err(fail)?;
        out_arg(out, KgdGraph(kg))
    })
}

/// # Safety
/// `graph` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_inject_noise(
    graph: *const KgdGraph,
    rate: f64,
    seed: u64,
    out_graph: *mut *mut KgdGraph,
    out_labels: *mut *mut KgdLabels,
) -> KgdStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        if out_graph.is_null() || out_labels.is_null() {
            return Err(null("output pointer"));
        }
        let (noisy, labels) = inject_type_noise(&g.0, rate, seed).map_err(fail)?;
        out_arg(out_graph, KgdGraph(noisy))?;
        out_arg(out_labels, KgdLabels(labels))
    })
}

/// Copy of `graph` with reverse relations added.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_augment(graph: *const KgdGraph, out: *mut *mut KgdGraph) -> KgdStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        out_arg(out, KgdGraph(g.0.augment_reverse().map_err(fail)?))
    })
}

/// Fraction of possible type signatures that occur, in `[0, 1]`.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_ltt(graph: *const KgdGraph, out: *mut f64) -> KgdStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = compute_ltt(&g.0);
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_num_entities(graph: *const KgdGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_entities())
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_num_relations(graph: *const KgdGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_relations())
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_num_types(graph: *const KgdGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_types())
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_num_triples(graph: *const KgdGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_triples())
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgd_graph_free(graph: *mut KgdGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `labels` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgd_labels_len(labels: *const KgdLabels) -> usize {
    labels.as_ref().map_or(0, |l| l.0.len())
}

/// # Safety
/// `labels` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgd_labels_free(labels: *mut KgdLabels) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_train_options_default(out: *mut KgdTrainOptions) -> KgdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let c = TrainConfig::default();
        *out = KgdTrainOptions {
            epochs: c.epochs,
            batch_size: c.batch_size,
            negatives: c.negatives,
            layers: c.model.rgcn.layers,
            hidden_dim: c.model.rgcn.hidden_dim,
            num_blocks: c.model.rgcn.num_blocks,
            seed: c.seed,
            gamma: c.gamma,
            temperature: c.model.gumbel.temperature,
            learning_rate: c.learning_rate,
            dropout: c.model.rgcn.dropout,
            gumbel_variant: match c.model.gumbel.variant {
                GumbelVariant::Standard => 0,
                GumbelVariant::AdditiveNoise => 1,
            },
        };
        Ok(())
    })
}

/// Trains on an augmented graph (see [`kgd_graph_augment`]).
///
/// # Safety
/// `graph` and `options` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_train(
    graph: *const KgdGraph,
    options: *const KgdTrainOptions,
    out: *mut *mut KgdModel,
) -> KgdStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let o = handle(options, "options")?;
        let mut c = TrainConfig {
            epochs: o.epochs,
            batch_size: o.batch_size,
            negatives: o.negatives,
            seed: o.seed,
            gamma: o.gamma,
            learning_rate: o.learning_rate,
            ..TrainConfig::default()
        };
        c.model.rgcn.layers = o.layers;
        c.model.rgcn.hidden_dim = o.hidden_dim;
        c.model.rgcn.num_blocks = o.num_blocks;
        c.model.rgcn.dropout = o.dropout;
        c.model.gumbel.temperature = o.temperature;
        c.model.gumbel.variant = match o.gumbel_variant {
            0 => GumbelVariant::Standard,
            1 => GumbelVariant::AdditiveNoise,
            v => return Err(fail(Error::InvalidArgument(format!("unknown gumbel variant {v}")))),
        };
        let outcome = train(&g.0, &c).map_err(fail)?;
        out_arg(out, KgdModel(outcome.model))
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kgd_model_save(model: *const KgdModel, path: *const c_char) -> KgdStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let p = path_arg(path, "path")?;
        m.0.save(&p).map_err(fail)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_model_load(path: *const c_char, out: *mut *mut KgdModel) -> KgdStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        out_arg(out, KgdModel(RaeModel::load(&p).map_err(fail)?))
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgd_model_free(model: *mut KgdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `convention`: 0 = low score is noise, 1 = high score is noise.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_detect(
    graph: *const KgdGraph,
    model: *const KgdModel,
    threshold: f64,
    convention: u32,
    out: *mut *mut KgdReport,
) -> KgdStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        let m = handle(model, "model")?;
        let conv = match convention {
            0 => Convention::LowScoreIsNoise,
            1 => Convention::HighScoreIsNoise,
            v => return Err(fail(Error::InvalidArgument(format!("unknown convention {v}")))),
        };
        out_arg(out, KgdReport(detect_noise(&g.0, &m.0, threshold, conv).map_err(fail)?))
    })
}

/// Number of flagged forward triples.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgd_report_flagged(report: *const KgdReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.flagged)
}

/// Number of forward triples in the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgd_report_len(report: *const KgdReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.triples.len())
}

/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_report_entry(report: *const KgdReport, index: usize, out: *mut KgdVerdict) -> KgdStatus {
    guard(|| {
        let r = handle(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = r.0.triples.get(index).ok_or_else(|| {
            fail(Error::InvalidArgument(format!(
                "index {index} out of range for {} entries",
                r.0.triples.len()
            )))
        })?;
        *out = KgdVerdict {
            head: v.triple.head.0,
            relation: v.triple.relation.0,
            tail: v.triple.tail.0,
            score: v.score,
            reverse_score: v.reverse_score.unwrap_or(f64::NAN),
            mask: v.mask,
            is_noise: v.is_noise,
        };
        Ok(())
    })
}

/// Serializes the report; release the string with [`kgd_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgd_report_to_json(report: *const KgdReport, out: *mut *mut c_char) -> KgdStatus {
    guard(|| {
        let r = handle(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = r.0.to_json().map_err(fail)?;
        *out = CString::new(json)
            .map_err(|_| fail(Error::InvalidArgument("report contains NUL".into())))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kgd_report_free(report: *mut KgdReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// Handles must be live; `out` must be writable. Label ids refer to the
/// graph the labels were created from, which shares ids with its augmentation.
#[no_mangle]
pub unsafe extern "C" fn kgd_evaluate(
    report: *const KgdReport,
    labels: *const KgdLabels,
    out: *mut KgdEvaluation,
) -> KgdStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let l = handle(labels, "labels")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = evaluate(&r.0, &l.0);
        *out = KgdEvaluation {
            true_positives: e.true_positives,
            false_positives: e.false_positives,
            true_negatives: e.true_negatives,
            false_negatives: e.false_negatives,
            precision: e.precision,
            recall: e.recall,
            true_negative_rate: e.true_negative_rate,
        };
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn kgd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
