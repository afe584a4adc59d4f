//! C ABI for hnswlab.
//!
//! Datasets and indexes are opaque handles created and released through
//! this API. Every fallible call returns an [`HnswlabStatus`]; on failure
//! the message is available from [`hnswlab_last_error`] on the same thread.
//! Panics never cross the boundary; they surface as `HNSWLAB_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hnswlab::dimest;
use hnswlab::hnsw::{HnswIndex, HnswParams, NeighborSelect};
use hnswlab::io;
use hnswlab::orders::{self, Direction, OrderPlan};
use hnswlab::{Dataset, Error, Metric};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HnswlabStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    DataError = 3,
    Io = 4,
    Format = 5,
    Invariant = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HnswlabMetric {
    L2 = 0,
    Cosine = 1,
    InnerProduct = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HnswlabOrder {
    Identity = 0,
    Random = 1,
    LidAsc = 2,
    LidDesc = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HnswlabSelect {
    Heuristic = 0,
    Simple = 1,
}

/// Build parameters; start from `hnswlab_params_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HnswlabParams {
    pub m: usize,
    /// Layer-0 cap; 0 means 2·m.
    pub m0: usize,
    pub ef_construction: usize,
    pub seed: u64,
    pub metric: HnswlabMetric,
    pub select: HnswlabSelect,
    pub order: HnswlabOrder,
    /// Seed of the random order.
    pub order_seed: u64,
    /// Neighbours per LID estimate for LID orders.
    pub lid_neighbours: usize,
}

/// Opaque vector collection.
pub struct HnswlabDataset {
    inner: Dataset,
}

/// Opaque HNSW index.
pub struct HnswlabIndex {
    inner: HnswIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HnswlabStatus {
    match e {
        Error::Stage { source, .. } => status_of(source),
        Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => HnswlabStatus::InvalidArgument,
        Error::Io { .. } => HnswlabStatus::Io,
        Error::Format { .. } | Error::VersionMismatch { .. } | Error::HashMismatch { .. } | Error::Json(_) => {
            HnswlabStatus::Format
        }
        Error::Invariant(_) => HnswlabStatus::Invariant,
        _ => HnswlabStatus::DataError,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (HnswlabStatus, String)>) -> HnswlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HnswlabStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            HnswlabStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (HnswlabStatus, String)>;
}

impl<T> IntoFfi<T> for hnswlab::Result<T> {
    fn ffi(self) -> Result<T, (HnswlabStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (HnswlabStatus, String) {
    (HnswlabStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (HnswlabStatus, String) {
    (HnswlabStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, (HnswlabStatus, String)> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn metric_of(m: HnswlabMetric) -> Metric {
    match m {
        HnswlabMetric::L2 => Metric::L2,
        HnswlabMetric::Cosine => Metric::Cosine,
        HnswlabMetric::InnerProduct => Metric::InnerProduct,
    }
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn hnswlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hnswlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn hnswlab_params_default() -> HnswlabParams {
    let p = HnswParams::default();
    HnswlabParams {
        m: p.m,
        m0: p.m0,
        ef_construction: p.ef_construction,
        seed: 0,
        metric: HnswlabMetric::L2,
        select: HnswlabSelect::Heuristic,
        order: HnswlabOrder::Random,
        order_seed: 0,
        lid_neighbours: dimest::DEFAULT_LID_NEIGHBOURS,
    }
}

/// Copies `n × dim` row-major floats into a new dataset.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_dataset_from_f32(
    data: *const f32,
    n: usize,
    dim: usize,
    out: *mut *mut HnswlabDataset,
) -> HnswlabStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(dim).ok_or_else(|| invalid("n × dim overflows"))?;
        let values = std::slice::from_raw_parts(data, len).iter().map(|&v| f64::from(v)).collect();
        let ds = Dataset::new(dim, values).ffi()?;
        *out = Box::into_raw(Box::new(HnswlabDataset { inner: ds }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hnswlab_dataset_read_fvecs(path: *const c_char, out: *mut *mut HnswlabDataset) -> HnswlabStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ds = io::read_fvecs(&path).ffi()?;
        *out = Box::into_raw(Box::new(HnswlabDataset { inner: ds }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hnswlab_dataset_write_fvecs(ds: *const HnswlabDataset, path: *const c_char) -> HnswlabStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        io::write_fvecs(&ds.inner, path_arg(path)?).ffi()
    })
}

/// Number of vectors; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_dataset_len(ds: *const HnswlabDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

/// Vector dimension; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_dataset_dim(ds: *const HnswlabDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.dim())
}

#[no_mangle]
pub unsafe extern "C" fn hnswlab_dataset_free(ds: *mut HnswlabDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// PCA intrinsic dimensionality at variance threshold `theta`.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_pca_intrinsic_dim(
    ds: *const HnswlabDataset,
    theta: f64,
    out_k: *mut usize,
) -> HnswlabStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if out_k.is_null() {
            return Err(null("out_k"));
        }
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(invalid(format!("theta must be in (0, 1], got {theta}")));
        }
        *out_k = dimest::pca_intrinsic_dim(&ds.inner, theta).ffi()?.k_intrinsic;
        Ok(())
    })
}

/// Writes one LID estimate per vector into `out_lid` (length
/// `hnswlab_dataset_len`). Saturated points get `+INFINITY`.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_lid_profile(
    ds: *const HnswlabDataset,
    k_neighbours: usize,
    metric: HnswlabMetric,
    out_lid: *mut f64,
    out_len: usize,
) -> HnswlabStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if out_lid.is_null() {
            return Err(null("out_lid"));
        }
        if out_len < ds.inner.len() {
            return Err((HnswlabStatus::BufferTooSmall, format!("need {} slots", ds.inner.len())));
        }
        let p = dimest::lid_profile(&ds.inner, k_neighbours, metric_of(metric)).ffi()?;
        std::slice::from_raw_parts_mut(out_lid, p.lid.len()).copy_from_slice(&p.lid);
        Ok(())
    })
}

fn plan_for(ds: &Dataset, p: &HnswlabParams, metric: Metric) -> hnswlab::Result<OrderPlan> {
    let ids: Vec<usize> = (0..ds.len()).collect();
    match p.order {
        HnswlabOrder::Identity => Ok(OrderPlan::identity(ds.len())),
        HnswlabOrder::Random => orders::order_random(&ids, p.order_seed),
        HnswlabOrder::LidAsc | HnswlabOrder::LidDesc => {
            let profile = dimest::lid_profile(ds, p.lid_neighbours, metric)?;
            let dir = if p.order == HnswlabOrder::LidAsc {
                Direction::Asc
            } else {
                Direction::Desc
            };
            orders::order_by_lid(&profile, dir)
        }
    }
}

/// Builds an index over every vector of `ds` in the order `params` names.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_index_build(
    ds: *const HnswlabDataset,
    params: *const HnswlabParams,
    out: *mut *mut HnswlabIndex,
) -> HnswlabStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut hp = HnswParams::with_m(p.m);
        if p.m0 != 0 {
            hp.m0 = p.m0;
        }
        hp.ef_construction = p.ef_construction;
        hp.seed = p.seed;
        hp.metric = metric_of(p.metric);
        hp.neighbor_select = match p.select {
            HnswlabSelect::Heuristic => NeighborSelect::Heuristic,
            HnswlabSelect::Simple => NeighborSelect::Simple,
        };
        let plan = plan_for(&ds.inner, p, hp.metric).ffi()?;
        let index = HnswIndex::build(&ds.inner, &plan, hp).ffi()?;
        *out = Box::into_raw(Box::new(HnswlabIndex { inner: index }));
        Ok(())
    })
}

/// Top-`k` search with beam width `ef`. Fills `out_ids`/`out_dists`
/// (capacity `k`) and sets `*out_len` to the number of results.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_index_search(
    index: *const HnswlabIndex,
    query: *const f32,
    dim: usize,
    k: usize,
    ef: usize,
    out_ids: *mut u64,
    out_dists: *mut f64,
    out_len: *mut usize,
) -> HnswlabStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        if query.is_null() || out_ids.is_null() || out_dists.is_null() || out_len.is_null() {
            return Err(null("query or output buffer"));
        }
        let q: Vec<f64> = std::slice::from_raw_parts(query, dim).iter().map(|&v| f64::from(v)).collect();
        let (res, _) = index.inner.search(&q, k, ef).ffi()?;
        let ids = std::slice::from_raw_parts_mut(out_ids, k);
        let dists = std::slice::from_raw_parts_mut(out_dists, k);
        for (i, (&id, &d)) in res.ids.iter().zip(&res.distances).enumerate() {
            ids[i] = id as u64;
            dists[i] = d;
        }
        *out_len = res.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hnswlab_index_len(index: *const HnswlabIndex) -> usize {
    index.as_ref().map_or(0, |i| i.inner.len())
}

/// Connected components of the undirected layer-0 graph.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_index_components(index: *const HnswlabIndex, out: *mut usize) -> HnswlabStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = index.inner.graph_stats(0, 0).connected_components_layer0;
        Ok(())
    })
}

/// Saves the graph; vectors are referenced through the dataset's hash.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_index_save(
    index: *const HnswlabIndex,
    ds: *const HnswlabDataset,
    path: *const c_char,
) -> HnswlabStatus {
    guard(|| {
        let index = index.as_ref().ok_or_else(|| null("index"))?;
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        io::save_index(&index.inner, &ds.inner, path_arg(path)?).ffi()
    })
}

/// Loads an index saved against `ds` (the dataset hash must match).
#[no_mangle]
pub unsafe extern "C" fn hnswlab_index_load(
    path: *const c_char,
    ds: *const HnswlabDataset,
    out: *mut *mut HnswlabIndex,
) -> HnswlabStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let index = io::load_index(path_arg(path)?, &ds.inner).ffi()?;
        *out = Box::into_raw(Box::new(HnswlabIndex { inner: index }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hnswlab_index_free(index: *mut HnswlabIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Set recall of the first `k` entries of `approx` against `exact`.
#[no_mangle]
pub unsafe extern "C" fn hnswlab_recall_at_k(
    approx: *const u64,
    approx_len: usize,
    exact: *const u64,
    exact_len: usize,
    k: usize,
    out: *mut f64,
) -> HnswlabStatus {
    guard(|| {
        if approx.is_null() || exact.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let conv = |p: *const u64, n: usize| hnswlab::SearchResult {
            ids: std::slice::from_raw_parts(p, n).iter().map(|&v| v as usize).collect(),
            distances: vec![0.0; n],
        };
        *out = hnswlab::metrics::recall_at_k(&conv(approx, approx_len), &conv(exact, exact_len), k).ffi()?;
        Ok(())
    })
}
