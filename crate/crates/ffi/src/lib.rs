//! C interface to catgnn.
//!
//! Graphs and models are opaque handles created by `catgnn_*` constructors and
//! released with the matching `_free` function. Every fallible call returns a
//! [`CatgnnStatus`]; on failure the message is available from
//! [`catgnn_last_error`] until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use catgnn::graph::{generate_synthetic, load_generic_graph, stratified_split, DatasetSplit, Label, MultiRelationGraph, SplitRatios, SynthConfig};
use catgnn::model::{load_checkpoint, save_checkpoint, CatGnnParams, ModelConfig};
use catgnn::trainer::{predict, train, TrainConfig};
use catgnn::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CatgnnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Parse = 4,
    Index = 5,
    Numerics = 6,
    UndefinedMetric = 7,
    Internal = 8,
}

/// A graph together with the split used for training and the labels a model
/// is allowed to see (those of the training nodes).
pub struct CatgnnGraph {
    graph: MultiRelationGraph,
    split: DatasetSplit,
    observed: Vec<Label>,
}

pub struct CatgnnModel {
    params: CatGnnParams,
    config: ModelConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(error: &Error) -> CatgnnStatus {
    match error {
        Error::Io { .. } => CatgnnStatus::Io,
        Error::ParseError { .. } | Error::SchemaError(_) | Error::Serde(_) | Error::DuplicateId(_) => CatgnnStatus::Parse,
        Error::IndexError(_) => CatgnnStatus::Index,
        Error::NumericsError(_) => CatgnnStatus::Numerics,
        Error::UndefinedMetric(_) => CatgnnStatus::UndefinedMetric,
        _ => CatgnnStatus::InvalidInput,
    }
}

struct Failure(CatgnnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(CatgnnStatus::Parse, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CatgnnStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, turning errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CatgnnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CatgnnStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CatgnnStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CatgnnStatus::InvalidInput, format!("{what} is not UTF-8")))
}

/// Parses optional JSON, falling back to the type's defaults for a null pointer.
unsafe fn json_or_default<T: serde::de::DeserializeOwned + Default>(p: *const c_char, what: &str) -> Result<T, Failure> {
    if p.is_null() {
        return Ok(T::default());
    }
    Ok(serde_json::from_str(str_arg(p, what)?)?)
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn wrap_graph(graph: MultiRelationGraph, split: DatasetSplit) -> CatgnnGraph {
    let observed = graph.observed_labels(&split.train);
    CatgnnGraph { graph, split, observed }
}

/// Message of the last failure on this thread; empty if none. The pointer is
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn catgnn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn catgnn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a synthetic graph. `config_json` is a synthetic-generator config
/// object and may be null for the defaults.
///
/// # Safety
/// `config_json` must be null or a valid C string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn catgnn_graph_generate(config_json: *const c_char, seed: u64, out: *mut *mut CatgnnGraph) -> CatgnnStatus {
    guard(|| {
        let config: SynthConfig = json_or_default(config_json, "config_json")?;
        let (graph, split) = generate_synthetic(&config, seed)?;
        write_out(out, wrap_graph(graph, split))
    })
}

/// Loads a graph from a feature CSV, a label CSV and one edge CSV per
/// relation, then splits it 40/20/40 with `split_seed`.
///
/// # Safety
/// The path arguments must be valid C strings, `edge_paths` must point to
/// `num_relations` of them, and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn catgnn_graph_load(
    features_path: *const c_char,
    labels_path: *const c_char,
    edge_paths: *const *const c_char,
    num_relations: usize,
    split_seed: u64,
    out: *mut *mut CatgnnGraph,
) -> CatgnnStatus {
    guard(|| {
        let features = str_arg(features_path, "features_path")?;
        let labels = str_arg(labels_path, "labels_path")?;
        if edge_paths.is_null() {
            return Err(null("edge_paths"));
        }
        let edges = std::slice::from_raw_parts(edge_paths, num_relations)
            .iter()
            .map(|&p| str_arg(p, "edge path").map(PathBuf::from))
            .collect::<Result<Vec<_>, _>>()?;
        let graph = load_generic_graph(features, labels, &edges)?;
        let split = stratified_split(graph.labels(), SplitRatios::default(), split_seed)?;
        write_out(out, wrap_graph(graph, split))
    })
}

/// # Safety
/// `graph` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn catgnn_graph_free(graph: *mut CatgnnGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Writes the node, relation and edge counts; any output pointer may be null.
///
/// # Safety
/// `graph` must be a live handle; non-null outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn catgnn_graph_shape(
    graph: *const CatgnnGraph,
    num_nodes: *mut usize,
    num_relations: *mut usize,
    num_edges: *mut usize,
) -> CatgnnStatus {
    guard(|| {
        let g = &graph.as_ref().ok_or_else(|| null("graph"))?.graph;
        for (p, v) in [(num_nodes, g.num_nodes()), (num_relations, g.num_relations()), (num_edges, g.num_edges())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Copies the test-node ids into `nodes` (capacity `capacity`) and their
/// count into `len`. Pass a null `nodes` to query the count alone.
///
/// # Safety
/// `graph` must be a live handle, `len` a valid pointer, and `nodes` null or
/// valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn catgnn_graph_test_nodes(
    graph: *const CatgnnGraph,
    nodes: *mut usize,
    capacity: usize,
    len: *mut usize,
) -> CatgnnStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        if len.is_null() {
            return Err(null("len"));
        }
        let test = &g.split.test;
        *len = test.len();
        if nodes.is_null() {
            return Ok(());
        }
        if capacity < test.len() {
            return Err(Failure(
                CatgnnStatus::InvalidInput,
                format!("buffer holds {capacity} ids, {} needed", test.len()),
            ));
        }
        ptr::copy_nonoverlapping(test.as_ptr(), nodes, test.len());
        Ok(())
    })
}

/// Trains on the graph's split. Either config may be null for the defaults.
/// If `test_auc` is non-null it receives the test AUC, or NaN when undefined.
///
/// # Safety
/// `graph` must be a live handle, the configs null or valid C strings, `out`
/// a valid pointer and `test_auc` null or valid.
#[no_mangle]
pub unsafe extern "C" fn catgnn_train(
    graph: *const CatgnnGraph,
    model_json: *const c_char,
    train_json: *const c_char,
    out: *mut *mut CatgnnModel,
    test_auc: *mut f64,
) -> CatgnnStatus {
    guard(|| {
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        let config: ModelConfig = json_or_default(model_json, "model_json")?;
        let tc: TrainConfig = json_or_default(train_json, "train_json")?;
        let (params, report) = train(&g.graph, &g.split, &config, &tc)?;
        if !test_auc.is_null() {
            *test_auc = report.test.map_or(f64::NAN, |t| t.auc);
        }
        write_out(out, CatgnnModel { params, config })
    })
}

/// Fraud probabilities for `num_nodes` node ids, written to `scores`.
///
/// # Safety
/// `model` and `graph` must be live handles; `nodes` and `scores` must be
/// valid for `num_nodes` elements.
#[no_mangle]
pub unsafe extern "C" fn catgnn_predict(
    model: *const CatgnnModel,
    graph: *const CatgnnGraph,
    nodes: *const usize,
    num_nodes: usize,
    scores: *mut f64,
) -> CatgnnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let g = graph.as_ref().ok_or_else(|| null("graph"))?;
        if num_nodes == 0 {
            return Ok(());
        }
        if nodes.is_null() || scores.is_null() {
            return Err(null("nodes or scores"));
        }
        let ids = std::slice::from_raw_parts(nodes, num_nodes);
        if let Some(&v) = ids.iter().find(|&&v| v >= g.graph.num_nodes()) {
            return Err(Failure(
                CatgnnStatus::Index,
                format!("node {v} out of range for {} nodes", g.graph.num_nodes()),
            ));
        }
        let p = predict(&g.graph, &g.observed, ids, &m.params, &m.config, 1024)?;
        std::slice::from_raw_parts_mut(scores, num_nodes).copy_from_slice(&p);
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn catgnn_model_save(model: *const CatgnnModel, path: *const c_char) -> CatgnnStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        save_checkpoint(str_arg(path, "path")?, &m.params, &m.config)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn catgnn_model_load(path: *const c_char, out: *mut *mut CatgnnModel) -> CatgnnStatus {
    guard(|| {
        let (params, config) = load_checkpoint(str_arg(path, "path")?)?;
        write_out(out, CatgnnModel { params, config })
    })
}

/// # Safety
/// `model` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn catgnn_model_free(model: *mut CatgnnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// ROC-AUC of `scores` against 0/1 `labels` (nonzero means fraud).
///
/// # Safety
/// `scores` and `labels` must be valid for `n` elements, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn catgnn_roc_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CatgnnStatus {
    guard(|| {
        if scores.is_null() || labels.is_null() || out.is_null() {
            return Err(null("scores, labels or out"));
        }
        let s = std::slice::from_raw_parts(scores, n);
        let y: Vec<bool> = std::slice::from_raw_parts(labels, n).iter().map(|&b| b != 0).collect();
        *out = catgnn::metrics::roc_auc(s, &y)?;
        Ok(())
    })
}
