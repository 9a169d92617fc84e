//! C ABI over `gfee`.
//!
//! Objects are opaque handles created by `*_new`/producer functions and
//! released with the matching `*_free`. Fallible calls return a
//! [`GfeeStatus`]; on failure [`gfee_last_error`] describes the problem.
//! Vertex indices and labels crossing the boundary are 1-based, label 0
//! meaning unknown.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gfee::classifier::{cross_validate, EvalProtocol};
use gfee::graph::{validate_collection, Edge, EdgeList, GraphCollection, LabelVector};
use gfee::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfeeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Io = 4,
    Runtime = 5,
    Panic = 6,
}

/// Graphs sharing one vertex set of size `n`.
pub struct GfeeCollection {
    n: usize,
    inner: GraphCollection,
}

pub struct GfeeLabels {
    inner: LabelVector,
}

/// Row-major `n x (M K)` embedding.
pub struct GfeeEmbedding {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes replaced"));
}

fn status_of(e: &Error) -> GfeeStatus {
    match e {
        Error::Io(_) => GfeeStatus::Io,
        Error::Invalid(_) | Error::EmptyClass(_) | Error::Parse { .. } => GfeeStatus::Validation,
        Error::Dimension(_) | Error::Protocol(_) | Error::BlockSpec(_) | Error::Manifest(_) => GfeeStatus::InvalidArgument,
        _ => GfeeStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), GfeeStatus>) -> GfeeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GfeeStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            GfeeStatus::Panic
        }
    }
}

fn fail(status: GfeeStatus, msg: impl Into<String>) -> Result<(), GfeeStatus> {
    set_error(msg);
    Err(status)
}

fn lib_err(e: Error) -> GfeeStatus {
    set_error(e.to_string());
    status_of(&e)
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn gfee_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gfee_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version has no interior nul"),
    };
    VERSION.as_ptr()
}

/// New empty collection over `n` vertices.
#[no_mangle]
pub extern "C" fn gfee_collection_new(n: usize) -> *mut GfeeCollection {
    Box::into_raw(Box::new(GfeeCollection { n, inner: GraphCollection::new(Vec::new()) }))
}

/// # Safety
/// `collection` must come from [`gfee_collection_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn gfee_collection_free(collection: *mut GfeeCollection) {
    if !collection.is_null() {
        drop(Box::from_raw(collection));
    }
}

/// Appends a graph given as `len` edges `(u[i], v[i])` with 1-based
/// endpoints. `w` may be null for unit weights.
///
/// # Safety
/// `u` and `v` (and `w` when non-null) must point to `len` readable values.
#[no_mangle]
pub unsafe extern "C" fn gfee_collection_add_graph(
    collection: *mut GfeeCollection,
    u: *const u32,
    v: *const u32,
    w: *const f64,
    len: usize,
    directed: bool,
) -> GfeeStatus {
    guard(|| {
        let Some(c) = collection.as_mut() else {
            return fail(GfeeStatus::NullPointer, "collection is null");
        };
        if len > 0 && (u.is_null() || v.is_null()) {
            return fail(GfeeStatus::NullPointer, "edge endpoint array is null");
        }
        let (us, vs) = if len == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(u, len), std::slice::from_raw_parts(v, len))
        };
        let ws = (!w.is_null() && len > 0).then(|| std::slice::from_raw_parts(w, len));
        let mut edges = Vec::with_capacity(len);
        for i in 0..len {
            let (a, b) = (us[i], vs[i]);
            if a == 0 || b == 0 || a as usize > c.n || b as usize > c.n {
                return fail(
                    GfeeStatus::InvalidArgument,
                    format!("edge {} = ({a}, {b}) outside 1..={}", i + 1, c.n),
                );
            }
            edges.push(Edge::new(a - 1, b - 1, ws.map_or(1.0, |ws| ws[i])));
        }
        let mut e = EdgeList::new(c.n, edges);
        e.set_directed(directed);
        c.inner.push(e);
        Ok(())
    })
}

/// # Safety
/// `collection` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gfee_collection_len(collection: *const GfeeCollection) -> usize {
    collection.as_ref().map_or(0, |c| c.inner.len())
}

/// Labels for `n` vertices, `K` inferred as the largest label.
///
/// # Safety
/// `labels` must point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn gfee_labels_new(labels: *const u32, n: usize) -> *mut GfeeLabels {
    if labels.is_null() && n > 0 {
        set_error("labels array is null");
        return ptr::null_mut();
    }
    let values = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(labels, n).to_vec() };
    Box::into_raw(Box::new(GfeeLabels { inner: LabelVector::from_labels(values) }))
}

/// # Safety
/// `labels` must come from [`gfee_labels_new`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn gfee_labels_free(labels: *mut GfeeLabels) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

unsafe fn inputs<'a>(
    collection: *const GfeeCollection,
    labels: *const GfeeLabels,
) -> Result<(&'a GraphCollection, &'a LabelVector), GfeeStatus> {
    let (Some(c), Some(y)) = (collection.as_ref(), labels.as_ref()) else {
        set_error("collection or labels is null");
        return Err(GfeeStatus::NullPointer);
    };
    validate_collection(&c.inner, &y.inner).into_result().map_err(lib_err)?;
    Ok((&c.inner, &y.inner))
}

/// Fuses every graph of the collection. On success `*out` owns a new
/// embedding.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gfee_fuse(
    collection: *const GfeeCollection,
    labels: *const GfeeLabels,
    out: *mut *mut GfeeEmbedding,
) -> GfeeStatus {
    guard(|| {
        if out.is_null() {
            return fail(GfeeStatus::NullPointer, "output pointer is null");
        }
        *out = ptr::null_mut();
        let (c, y) = inputs(collection, labels)?;
        let emb = gfee::fuse(c, y).map_err(lib_err)?;
        let (rows, cols) = emb.z.dim();
        let data = emb.z.as_standard_layout().iter().copied().collect();
        *out = Box::into_raw(Box::new(GfeeEmbedding { rows, cols, data }));
        Ok(())
    })
}

/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gfee_embedding_rows(embedding: *const GfeeEmbedding) -> usize {
    embedding.as_ref().map_or(0, |e| e.rows)
}

/// # Safety
/// `embedding` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gfee_embedding_cols(embedding: *const GfeeEmbedding) -> usize {
    embedding.as_ref().map_or(0, |e| e.cols)
}

/// Copies the row-major entries into `out`, which holds `len` doubles;
/// `len` must be at least rows x cols.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gfee_embedding_copy(embedding: *const GfeeEmbedding, out: *mut f64, len: usize) -> GfeeStatus {
    guard(|| {
        let Some(e) = embedding.as_ref() else {
            return fail(GfeeStatus::NullPointer, "embedding is null");
        };
        if out.is_null() {
            return fail(GfeeStatus::NullPointer, "output buffer is null");
        }
        if len < e.data.len() {
            return fail(GfeeStatus::InvalidArgument, format!("buffer holds {len} values, need {}", e.data.len()));
        }
        ptr::copy_nonoverlapping(e.data.as_ptr(), out, e.data.len());
        Ok(())
    })
}

/// # Safety
/// `embedding` must come from [`gfee_fuse`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn gfee_embedding_free(embedding: *mut GfeeEmbedding) {
    if !embedding.is_null() {
        drop(Box::from_raw(embedding));
    }
}

/// Stratified cross-validated k-NN error, re-embedding with each test fold's
/// labels hidden. Writes the mean and sample standard deviation over
/// replicates.
///
/// # Safety
/// Handles must be live; `mean` and `std` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gfee_cross_validate(
    collection: *const GfeeCollection,
    labels: *const GfeeLabels,
    folds: usize,
    replicates: usize,
    neighbors: usize,
    seed: u64,
    mean: *mut f64,
    std: *mut f64,
) -> GfeeStatus {
    guard(|| {
        if mean.is_null() || std.is_null() {
            return fail(GfeeStatus::NullPointer, "output pointer is null");
        }
        let (c, y) = inputs(collection, labels)?;
        let report = cross_validate(c, y, &EvalProtocol::new(folds, replicates, neighbors, seed)).map_err(lib_err)?;
        *mean = report.mean_error;
        *std = report.std_error;
        Ok(())
    })
}
