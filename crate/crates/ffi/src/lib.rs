//! C ABI over `shoppers-core`.
//!
//! Every fallible function returns a [`ShoppersStatus`]. On failure the
//! message is kept per thread and read with [`shoppers_last_error_message`].
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Strings returned through `out`
//! parameters are owned by the caller and released with
//! [`shoppers_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use shoppers_core::graph::{read_jsonl, similar_nodes, GraphDocument};
use shoppers_core::pipeline::{emit_plot_data, run_all, run_stage, PipelineConfig, Stage};
use shoppers_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShoppersStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Parse = 5,
    MissingArtifact = 6,
    Numerical = 7,
    Panic = 8,
}

/// Pipeline configuration handle.
pub struct ShoppersConfig {
    inner: PipelineConfig,
}

/// Exported graph loaded from a JSONL directory.
pub struct ShoppersGraph {
    doc: GraphDocument,
}

/// Result list of a similarity query.
pub struct ShoppersHits {
    keys: Vec<CString>,
    ids: Vec<CString>,
    similarity: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ShoppersStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => ShoppersStatus::Io,
            Error::Csv { .. } | Error::MissingColumn { .. } | Error::Serde(_) => ShoppersStatus::Parse,
            Error::MissingArtifact { .. } => ShoppersStatus::MissingArtifact,
            Error::NonFinite(_) | Error::Numerical(_) => ShoppersStatus::Numerical,
            _ => ShoppersStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: Option<String>) {
    let c = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ShoppersStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(Failure(ShoppersStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            set_last_error(None);
            ShoppersStatus::Ok
        }
        Err(Failure(status, msg)) => {
            set_last_error(Some(msg));
            status
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(ShoppersStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(ShoppersStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn handle_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(ShoppersStatus::InvalidInput, "string contains a NUL byte".into()))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or NULL after a
/// successful one. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn shoppers_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn shoppers_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn shoppers_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// New configuration with default settings.
#[no_mangle]
pub extern "C" fn shoppers_config_new() -> *mut ShoppersConfig {
    Box::into_raw(Box::new(ShoppersConfig { inner: PipelineConfig::default() }))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn shoppers_config_from_toml(toml: *const c_char, out: *mut *mut ShoppersConfig) -> ShoppersStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = PipelineConfig::from_toml(text(toml, "toml")?)?;
        put(out, ShoppersConfig { inner });
        Ok(())
    })
}

/// Loads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn shoppers_config_load(path: *const c_char, out: *mut *mut ShoppersConfig) -> ShoppersStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = PipelineConfig::load(text(path, "path")?.as_ref())?;
        put(out, ShoppersConfig { inner });
        Ok(())
    })
}

/// Releases a configuration. NULL is ignored.
///
/// # Safety
/// `config` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn shoppers_config_free(config: *mut ShoppersConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Sets the invoice CSV path.
///
/// # Safety
/// `config` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn shoppers_config_set_input(config: *mut ShoppersConfig, path: *const c_char) -> ShoppersStatus {
    guard(|| {
        handle_mut(config, "config")?.inner.input = PathBuf::from(text(path, "path")?);
        Ok(())
    })
}

/// Sets the run directory.
///
/// # Safety
/// `config` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn shoppers_config_set_output_dir(config: *mut ShoppersConfig, path: *const c_char) -> ShoppersStatus {
    guard(|| {
        handle_mut(config, "config")?.inner.output_dir = PathBuf::from(text(path, "path")?);
        Ok(())
    })
}

/// Sets the seed of every randomized stage.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn shoppers_config_set_seed(config: *mut ShoppersConfig, seed: u64) -> ShoppersStatus {
    guard(|| {
        handle_mut(config, "config")?.inner.set_seed(seed);
        Ok(())
    })
}

/// Canonical TOML form of the configuration; free with `shoppers_string_free`.
///
/// # Safety
/// `config` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn shoppers_config_to_toml(config: *const ShoppersConfig, out: *mut *mut c_char) -> ShoppersStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = owned_string(handle(config, "config")?.inner.to_toml()?)?;
        Ok(())
    })
}

/// Runs one stage by its kebab-case name (e.g. `select-features`).
///
/// # Safety
/// `config` must be a live handle and `stage` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn shoppers_run_stage(config: *const ShoppersConfig, stage: *const c_char) -> ShoppersStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let stage: Stage = text(stage, "stage")?.parse()?;
        run_stage(stage, &cfg.inner)?;
        Ok(())
    })
}

/// Runs every stage in order.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn shoppers_run_all(config: *const ShoppersConfig) -> ShoppersStatus {
    guard(|| {
        run_all(&handle(config, "config")?.inner)?;
        Ok(())
    })
}

/// Writes plot data of one kind under `output_dir` and returns its path;
/// free the path with `shoppers_string_free`.
///
/// # Safety
/// `output_dir` and `kind` must be NUL-terminated strings and `out_path` a
/// writable pointer.
#[no_mangle]
pub unsafe extern "C" fn shoppers_emit_plot(
    output_dir: *const c_char,
    kind: *const c_char,
    out_path: *mut *mut c_char,
) -> ShoppersStatus {
    guard(|| {
        if out_path.is_null() {
            return Err(null("out_path"));
        }
        let path = emit_plot_data(text(output_dir, "output_dir")?.as_ref(), text(kind, "kind")?)?;
        *out_path = owned_string(path.display().to_string())?;
        Ok(())
    })
}

/// Opens an exported graph directory (`nodes.jsonl` and `edges.jsonl`).
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn shoppers_graph_open(dir: *const c_char, out: *mut *mut ShoppersGraph) -> ShoppersStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let doc = read_jsonl(text(dir, "dir")?.as_ref())?;
        put(out, ShoppersGraph { doc });
        Ok(())
    })
}

/// Number of nodes in the graph; 0 for NULL.
///
/// # Safety
/// `graph` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shoppers_graph_node_count(graph: *const ShoppersGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.doc.nodes.len())
}

/// Releases a graph. NULL is ignored.
///
/// # Safety
/// `graph` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn shoppers_graph_free(graph: *mut ShoppersGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// The `top` nodes of the same kind most similar to `node` (a key or a
/// unique id), best first.
///
/// # Safety
/// `graph` must be a live handle, `node` a NUL-terminated string and `out`
/// a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn shoppers_graph_query_similar(
    graph: *const ShoppersGraph,
    node: *const c_char,
    top: usize,
    out: *mut *mut ShoppersHits,
) -> ShoppersStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let hits = similar_nodes(&handle(graph, "graph")?.doc, text(node, "node")?, top)?;
        let cstr = |s: String| CString::new(s).unwrap_or_default();
        let mut list = ShoppersHits { keys: Vec::new(), ids: Vec::new(), similarity: Vec::new() };
        for h in hits {
            list.keys.push(cstr(h.key));
            list.ids.push(cstr(h.id));
            list.similarity.push(h.similarity);
        }
        put(out, list);
        Ok(())
    })
}

/// Number of hits; 0 for NULL.
///
/// # Safety
/// `hits` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shoppers_hits_len(hits: *const ShoppersHits) -> usize {
    hits.as_ref().map_or(0, |h| h.keys.len())
}

/// Node key of hit `i`, or NULL when out of range. Owned by `hits`.
///
/// # Safety
/// `hits` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shoppers_hits_key(hits: *const ShoppersHits, i: usize) -> *const c_char {
    hits.as_ref().and_then(|h| h.keys.get(i)).map_or(ptr::null(), |c| c.as_ptr())
}

/// Node id of hit `i`, or NULL when out of range. Owned by `hits`.
///
/// # Safety
/// `hits` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shoppers_hits_id(hits: *const ShoppersHits, i: usize) -> *const c_char {
    hits.as_ref().and_then(|h| h.ids.get(i)).map_or(ptr::null(), |c| c.as_ptr())
}

/// Cosine similarity of hit `i`, or NaN when out of range.
///
/// # Safety
/// `hits` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shoppers_hits_similarity(hits: *const ShoppersHits, i: usize) -> f64 {
    hits.as_ref().and_then(|h| h.similarity.get(i).copied()).unwrap_or(f64::NAN)
}

/// Releases a hit list. NULL is ignored.
///
/// # Safety
/// `hits` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn shoppers_hits_free(hits: *mut ShoppersHits) {
    if !hits.is_null() {
        drop(Box::from_raw(hits));
    }
}
