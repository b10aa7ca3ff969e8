use std::ffi::{CStr, CString};
use std::ptr;

use kgd_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(kgd_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn small_graph() -> *mut KgdGraph {
    let mut g = ptr::null_mut();
    let s = unsafe { kgd_graph_synthetic(4, 3, 60, 2, 400, 7, &mut g) };
    assert_eq!(s, KgdStatus::Ok, "{}", last_error());
    g
}

fn small_options() -> KgdTrainOptions {
    let mut o = std::mem::MaybeUninit::uninit();
    assert_eq!(unsafe { kgd_train_options_default(o.as_mut_ptr()) }, KgdStatus::Ok);
    let mut o = unsafe { o.assume_init() };
    o.epochs = 2;
    o.batch_size = 128;
    o.negatives = 2;
    o.hidden_dim = 8;
    o.num_blocks = 2;
    o
}

#[test]
fn version_is_nonempty() {
    let v = unsafe { CStr::from_ptr(kgd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn synthetic_graph_counts() {
    let g = small_graph();
    unsafe {
        assert_eq!(kgd_graph_num_types(g), 4);
        assert_eq!(kgd_graph_num_relations(g), 3);
        assert_eq!(kgd_graph_num_triples(g), 400);
        assert!(kgd_graph_num_entities(g) <= 60);
        let mut ltt = -1.0;
        assert_eq!(kgd_graph_ltt(g, &mut ltt), KgdStatus::Ok);
        assert!((0.0..=1.0).contains(&ltt));
        let mut aug = ptr::null_mut();
        assert_eq!(kgd_graph_augment(g, &mut aug), KgdStatus::Ok);
        assert_eq!(kgd_graph_num_relations(aug), 6);
        assert_eq!(kgd_graph_num_triples(aug), 800);
        kgd_graph_free(aug);
        kgd_graph_free(g);
    }
}

#[test]
fn full_pipeline() {
    let clean = small_graph();
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let (mut noisy, mut labels) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            kgd_graph_inject_noise(clean, 0.05, 3, &mut noisy, &mut labels),
            KgdStatus::Ok
        );
        assert_eq!(kgd_labels_len(labels), 20);
        let mut aug = ptr::null_mut();
        assert_eq!(kgd_graph_augment(noisy, &mut aug), KgdStatus::Ok);

        let opts = small_options();
        let mut model = ptr::null_mut();
        assert_eq!(kgd_train(aug, &opts, &mut model), KgdStatus::Ok, "{}", last_error());
        assert_eq!(last_error(), "");

        let path = CString::new(dir.path().join("m.kgd").to_str().unwrap()).unwrap();
        assert_eq!(kgd_model_save(model, path.as_ptr()), KgdStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(kgd_model_load(path.as_ptr(), &mut loaded), KgdStatus::Ok);

        let (mut r1, mut r2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(kgd_detect(aug, model, 0.5, 0, &mut r1), KgdStatus::Ok);
        assert_eq!(kgd_detect(aug, loaded, 0.5, 0, &mut r2), KgdStatus::Ok);
        let n = kgd_graph_num_triples(noisy);
        assert_eq!(n, 400 + kgd_labels_len(labels));
        assert_eq!(kgd_report_len(r1), n);
        assert_eq!(kgd_report_flagged(r1), kgd_report_flagged(r2));

        let mut v = std::mem::zeroed::<KgdVerdict>();
        assert_eq!(kgd_report_entry(r1, 0, &mut v), KgdStatus::Ok);
        assert!((0.0..=1.0).contains(&v.score));
        assert!((0.0..=1.0).contains(&v.reverse_score), "{v:?}");
        assert_eq!(kgd_report_entry(r1, n, &mut v), KgdStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let mut json = ptr::null_mut();
        assert_eq!(kgd_report_to_json(r1, &mut json), KgdStatus::Ok);
        let parsed: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(parsed["triples"].as_array().unwrap().len(), n);
        kgd_string_free(json);

        let mut e = KgdEvaluation::default();
        assert_eq!(kgd_evaluate(r1, labels, &mut e), KgdStatus::Ok);
        assert_eq!(e.true_positives + e.false_negatives, 20);
        assert_eq!(e.true_positives + e.false_positives, kgd_report_flagged(r1));
        assert_eq!(
            e.true_positives + e.false_positives + e.true_negatives + e.false_negatives,
            n
        );

        kgd_report_free(r1);
        kgd_report_free(r2);
        kgd_model_free(model);
        kgd_model_free(loaded);
        kgd_graph_free(aug);
        kgd_graph_free(noisy);
        kgd_labels_free(labels);
        kgd_graph_free(clean);
    }
}

#[test]
fn training_requires_augmented_graph() {
    let g = small_graph();
    let opts = small_options();
    let mut m = ptr::null_mut();
    unsafe {
        assert_ne!(kgd_train(g, &opts, &mut m), KgdStatus::Ok);
        assert!(m.is_null());
        assert!(!last_error().is_empty());
        kgd_graph_free(g);
    }
}

#[test]
fn bad_enum_values_are_rejected() {
    let g = small_graph();
    unsafe {
        let mut aug = ptr::null_mut();
        kgd_graph_augment(g, &mut aug);
        let mut opts = small_options();
        opts.gumbel_variant = 9;
        let mut m = ptr::null_mut();
        assert_eq!(kgd_train(aug, &opts, &mut m), KgdStatus::InvalidArgument);
        assert!(last_error().contains("gumbel variant"));
        kgd_graph_free(aug);
        kgd_graph_free(g);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(kgd_graph_load(ptr::null(), ptr::null(), &mut g), KgdStatus::NullPointer);
        assert!(last_error().contains("triples_path"));
        assert_eq!(kgd_graph_augment(ptr::null(), &mut g), KgdStatus::NullPointer);
        assert_eq!(kgd_train_options_default(ptr::null_mut()), KgdStatus::NullPointer);
        assert_eq!(kgd_graph_num_triples(ptr::null()), 0);
        assert_eq!(kgd_report_len(ptr::null()), 0);
        kgd_graph_free(ptr::null_mut());
        kgd_model_free(ptr::null_mut());
        kgd_report_free(ptr::null_mut());
        kgd_labels_free(ptr::null_mut());
        kgd_string_free(ptr::null_mut());
    }
}

#[test]
fn io_and_parse_errors_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("nope.tsv").to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(
            kgd_graph_load(missing.as_ptr(), missing.as_ptr(), &mut g),
            KgdStatus::Io
        );
        let t = dir.path().join("t.tsv");
        let c = dir.path().join("c.tsv");
        std::fs::write(&t, "a\tr\n").unwrap();
        std::fs::write(&c, "a\tT\n").unwrap();
        let (t, c) = (
            CString::new(t.to_str().unwrap()).unwrap(),
            CString::new(c.to_str().unwrap()).unwrap(),
        );
        assert_eq!(kgd_graph_load(t.as_ptr(), c.as_ptr(), &mut g), KgdStatus::Parse);
        assert!(g.is_null());
        let mut m = ptr::null_mut();
        assert_eq!(
            kgd_model_load(c.as_ptr(), &mut m),
            KgdStatus::Checkpoint,
            "{}",
            last_error()
        );
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/kgd.h")).unwrap();
    for name in [
        "KGD_H",
        "typedef struct KgdGraph KgdGraph;",
        "typedef struct KgdModel KgdModel;",
        "KGD_STATUS_NULL_POINTER = 1",
        "kgd_last_error(void)",
        "kgd_graph_load(",
        "kgd_train(",
        "kgd_detect(",
        "kgd_evaluate(",
        "kgd_string_free(",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
