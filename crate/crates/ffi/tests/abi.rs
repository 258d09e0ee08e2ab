use std::ffi::{CStr, CString};
use std::ptr;

use catgnn::graph::{generate_synthetic, write_generic_graph, SynthConfig};
use catgnn::metrics::roc_auc;
use catgnn_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(catgnn_last_error()) }.to_string_lossy().into_owned()
}

fn small_graph(seed: u64) -> *mut CatgnnGraph {
    let mut g = ptr::null_mut();
    let config = cstr(r#"{"num_nodes": 150, "fraud_ratio": 0.2}"#);
    assert_eq!(unsafe { catgnn_graph_generate(config.as_ptr(), seed, &mut g) }, CatgnnStatus::Ok);
    g
}

fn test_nodes(g: *const CatgnnGraph) -> Vec<usize> {
    let mut len = 0;
    unsafe {
        assert_eq!(catgnn_graph_test_nodes(g, ptr::null_mut(), 0, &mut len), CatgnnStatus::Ok);
        let mut nodes = vec![0; len];
        assert_eq!(catgnn_graph_test_nodes(g, nodes.as_mut_ptr(), len, &mut len), CatgnnStatus::Ok);
        nodes
    }
}

#[test]
fn roc_auc_matches_the_library() {
    let scores = [0.1, 0.9, 0.4, 0.4, 0.7];
    let labels = [0u8, 1, 1, 0, 0];
    let mut out = 0.0;
    assert_eq!(unsafe { catgnn_roc_auc(scores.as_ptr(), labels.as_ptr(), 5, &mut out) }, CatgnnStatus::Ok);
    let truth: Vec<bool> = labels.iter().map(|&b| b == 1).collect();
    assert_eq!(out, roc_auc(&scores, &truth).unwrap());
}

#[test]
fn errors_map_to_status_codes() {
    let mut out = 0.0;
    let one_class = [1u8, 1];
    unsafe {
        assert_eq!(catgnn_roc_auc(ptr::null(), one_class.as_ptr(), 2, &mut out), CatgnnStatus::NullPointer);
        assert_eq!(catgnn_roc_auc([0.2, 0.3].as_ptr(), one_class.as_ptr(), 2, &mut out), CatgnnStatus::UndefinedMetric);
        assert!(last_error().contains("undefined"));

        let mut g = ptr::null_mut();
        let garbled = cstr("{not json");
        assert_eq!(catgnn_graph_generate(garbled.as_ptr(), 0, &mut g), CatgnnStatus::Parse);
        let bad = cstr(r#"{"fraud_ratio": 2.0}"#);
        assert_eq!(catgnn_graph_generate(bad.as_ptr(), 0, &mut g), CatgnnStatus::InvalidInput);
        assert!(g.is_null());
        assert_eq!(catgnn_graph_generate(ptr::null(), 0, ptr::null_mut()), CatgnnStatus::NullPointer);

        let mut m = ptr::null_mut();
        let missing = cstr("/nonexistent/model.json");
        assert_eq!(catgnn_model_load(missing.as_ptr(), &mut m), CatgnnStatus::Io);
        assert!(last_error().contains("/nonexistent/model.json"));

        catgnn_graph_free(ptr::null_mut());
        catgnn_model_free(ptr::null_mut());
    }
}

#[test]
fn loaded_graph_has_the_written_shape() {
    let (graph, _) = generate_synthetic(&SynthConfig { num_nodes: 120, ..SynthConfig::default() }, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_generic_graph(&graph, dir.path()).unwrap();
    let features = cstr(files.features.to_str().unwrap());
    let labels = cstr(files.labels.to_str().unwrap());
    let edges: Vec<CString> = files.edges.iter().map(|p| cstr(p.to_str().unwrap())).collect();
    let edge_ptrs: Vec<_> = edges.iter().map(|c| c.as_ptr()).collect();
    let mut g = ptr::null_mut();
    let (mut n, mut r, mut e) = (0, 0, 0);
    unsafe {
        let status = catgnn_graph_load(features.as_ptr(), labels.as_ptr(), edge_ptrs.as_ptr(), edge_ptrs.len(), 0, &mut g);
        assert_eq!(status, CatgnnStatus::Ok, "{}", last_error());
        assert_eq!(catgnn_graph_shape(g, &mut n, &mut r, &mut e), CatgnnStatus::Ok);
        catgnn_graph_free(g);
    }
    assert_eq!((n, r, e), (graph.num_nodes(), graph.num_relations(), graph.num_edges()));
}

#[test]
fn train_predict_save_load_round_trip() {
    let g = small_graph(1);
    let nodes = test_nodes(g);
    let model_json = cstr(r#"{"hidden_dim": 8, "num_heads": 2}"#);
    let train_json = cstr(r#"{"epochs": 2}"#);
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path().join("m.json").to_str().unwrap());
    let mut m = ptr::null_mut();
    let mut auc = f64::NAN;
    let mut first = vec![0.0; nodes.len()];
    let mut second = vec![0.0; nodes.len()];
    unsafe {
        let status = catgnn_train(g, model_json.as_ptr(), train_json.as_ptr(), &mut m, &mut auc);
        assert_eq!(status, CatgnnStatus::Ok, "{}", last_error());
        assert!((0.0..=1.0).contains(&auc));
        assert_eq!(catgnn_predict(m, g, nodes.as_ptr(), nodes.len(), first.as_mut_ptr()), CatgnnStatus::Ok);
        assert!(first.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(catgnn_model_save(m, path.as_ptr()), CatgnnStatus::Ok);

        let mut loaded = ptr::null_mut();
        assert_eq!(catgnn_model_load(path.as_ptr(), &mut loaded), CatgnnStatus::Ok);
        assert_eq!(catgnn_predict(loaded, g, nodes.as_ptr(), nodes.len(), second.as_mut_ptr()), CatgnnStatus::Ok);

        let out_of_range = [usize::MAX];
        assert_eq!(catgnn_predict(m, g, out_of_range.as_ptr(), 1, second.as_mut_ptr()), CatgnnStatus::Index);
        let mut len = 0;
        let mut tiny = [0usize; 1];
        assert_eq!(catgnn_graph_test_nodes(g, tiny.as_mut_ptr(), 1, &mut len), CatgnnStatus::InvalidInput);

        catgnn_model_free(loaded);
        catgnn_model_free(m);
        catgnn_graph_free(g);
    }
    assert_eq!(first[..], second[..nodes.len()]);
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(catgnn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
