//! C ABI over `distcache`.
//!
//! Objects cross the boundary as opaque pointers created by `dc_*_new` /
//! `dc_*_load` style functions and released by the matching `dc_*_free`.
//! Every fallible call returns a [`DcStatus`]; on failure the message is
//! kept per thread and read back with [`dc_last_error`].
//!
//! Freed or foreign pointers are undefined behavior, as in any C API. Null
//! pointers are reported as `DC_STATUS_NULL_POINTER`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use distcache::io::{load_trace, TraceShape};
use distcache::metrics::MetricsLog;
use distcache::sim::{run_simulation, PolicyKind, SimConfig};
use distcache::strategy::per_slot_optimal;
use distcache::synth::{generate_synthetic, SyntheticConfig};
use distcache::{Catalog, DemandTrace, Error, Topology};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Index = 3,
    Io = 4,
    Parse = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

pub struct DcCatalog(Catalog);
pub struct DcTrace(DemandTrace);
/// Per-slot metrics of one simulation run.
pub struct DcResults(MetricsLog);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DcStatus {
    match e {
        Error::Validation(_) => DcStatus::InvalidArgument,
        Error::Index { .. } => DcStatus::Index,
        Error::Io { .. } => DcStatus::Io,
        Error::Parse { .. } | Error::Csv { .. } => DcStatus::Parse,
    }
}

struct Fail(DcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DcStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(DcStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records any error and turns panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DcStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            DcStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next `dc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn dc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Catalog from `n` file sizes and a cache budget.
///
/// # Safety
/// `sizes` must point to `n` readable doubles; `out_catalog` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_catalog_new(sizes: *const f64, n: usize, budget: f64, out_catalog: *mut *mut DcCatalog) -> DcStatus {
    guard(|| {
        let slot = out(out_catalog, "out_catalog")?;
        let sizes = slice_arg(sizes, n, "sizes")?;
        let cat = Catalog::new(sizes.to_vec(), budget)?;
        *slot = Box::into_raw(Box::new(DcCatalog(cat)));
        Ok(())
    })
}

/// # Safety
/// `catalog` must be null or a pointer from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dc_catalog_free(catalog: *mut DcCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Number of files, or 0 for null.
///
/// # Safety
/// `catalog` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_catalog_n_files(catalog: *const DcCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.0.n_files())
}

/// Cache budget, or NaN for null.
///
/// # Safety
/// `catalog` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_catalog_budget(catalog: *const DcCatalog) -> f64 {
    catalog.as_ref().map_or(f64::NAN, |c| c.0.budget())
}

/// Loads a catalog/trace CSV pair. `topology` uses the CLI syntax (`five-ring`,
/// `ring:5`, ...); `n_slots` 0 infers the slot count from the file.
///
/// # Safety
/// String arguments must be NUL-terminated; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_load(
    catalog_path: *const c_char,
    trace_path: *const c_char,
    topology: *const c_char,
    n_slots: usize,
    cache_fraction: f64,
    out_catalog: *mut *mut DcCatalog,
    out_trace: *mut *mut DcTrace,
) -> DcStatus {
    guard(|| {
        let cat_slot = out(out_catalog, "out_catalog")?;
        let trace_slot = out(out_trace, "out_trace")?;
        let topology: Topology = str_arg(topology, "topology")?.parse()?;
        let shape = TraceShape {
            topology,
            n_slots: (n_slots > 0).then_some(n_slots),
            cache_fraction,
        };
        let (cat, trace) = load_trace(
            Path::new(str_arg(catalog_path, "catalog_path")?),
            Path::new(str_arg(trace_path, "trace_path")?),
            &shape,
        )?;
        *cat_slot = Box::into_raw(Box::new(DcCatalog(cat)));
        *trace_slot = Box::into_raw(Box::new(DcTrace(trace)));
        Ok(())
    })
}

/// Synthetic regime-switching Zipf trace over `catalog`.
///
/// # Safety
/// `catalog` must be a live handle; `topology` NUL-terminated; `out_trace`
/// writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn dc_trace_synthetic(
    catalog: *const DcCatalog,
    topology: *const c_char,
    n_slots: usize,
    zipf_exponent: f64,
    n_regimes: usize,
    regime_length: usize,
    cross_sbs_mixing: f64,
    requests_per_slot: u64,
    seed: u64,
    out_trace: *mut *mut DcTrace,
) -> DcStatus {
    guard(|| {
        let slot = out(out_trace, "out_trace")?;
        let cat = obj(catalog, "catalog")?;
        let topology: Topology = str_arg(topology, "topology")?.parse()?;
        let cfg = SyntheticConfig {
            zipf_exponent,
            n_regimes,
            regime_length,
            cross_sbs_mixing,
            requests_per_slot,
            seed,
        };
        let trace = generate_synthetic(&cat.0, &topology, n_slots, &cfg)?;
        *slot = Box::into_raw(Box::new(DcTrace(trace)));
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_free(trace: *mut DcTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_n_slots(trace: *const DcTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.n_slots())
}

/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_n_sbs(trace: *const DcTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.0.n_sbs())
}

/// Copies the demand vector of sBS `sbs` in slot `slot` into `out` (length
/// `n`, which must equal the number of files).
///
/// # Safety
/// `trace` must be a live handle; `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_trace_demand(trace: *const DcTrace, slot: usize, sbs: usize, out_demand: *mut f64, n: usize) -> DcStatus {
    guard(|| {
        let trace = obj(trace, "trace")?;
        if out_demand.is_null() {
            return Err(null("out_demand"));
        }
        let d = trace.0.slot_demand(sbs, slot)?;
        if d.len() != n {
            return Err(invalid(format!("buffer holds {n} values, trace has {} files", d.len())));
        }
        std::slice::from_raw_parts_mut(out_demand, n).copy_from_slice(d);
        Ok(())
    })
}

/// Best single-slot placement for `demand`, written to `out_fractions`.
///
/// # Safety
/// `demand` and `out_fractions` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_per_slot_optimal(
    catalog: *const DcCatalog,
    demand: *const f64,
    n: usize,
    out_fractions: *mut f64,
) -> DcStatus {
    guard(|| {
        let cat = obj(catalog, "catalog")?;
        let demand = slice_arg(demand, n, "demand")?;
        if out_fractions.is_null() && n > 0 {
            return Err(null("out_fractions"));
        }
        let pi = per_slot_optimal(demand, &cat.0)?;
        if n > 0 {
            std::slice::from_raw_parts_mut(out_fractions, n).copy_from_slice(pi.fractions());
        }
        Ok(())
    })
}

/// Simulates `policy` (a policy name such as `proposed` or `lrfu`) over the
/// whole trace. `config_toml` may be null for defaults or hold simulation
/// settings in the `[sim]` table layout of the CLI config, without the
/// `[sim]` header.
///
/// # Safety
/// Handles must be live; strings NUL-terminated or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn dc_simulate(
    trace: *const DcTrace,
    catalog: *const DcCatalog,
    policy: *const c_char,
    config_toml: *const c_char,
    out_results: *mut *mut DcResults,
) -> DcStatus {
    guard(|| {
        let slot = out(out_results, "out_results")?;
        let trace = obj(trace, "trace")?;
        let cat = obj(catalog, "catalog")?;
        let policy: PolicyKind = str_arg(policy, "policy")?.parse()?;
        let cfg: SimConfig = if config_toml.is_null() {
            SimConfig::default()
        } else {
            toml::from_str(str_arg(config_toml, "config_toml")?).map_err(|e| invalid(format!("config_toml: {e}")))?
        };
        let log = run_simulation(&trace.0, &cat.0, policy, &cfg)?;
        *slot = Box::into_raw(Box::new(DcResults(log)));
        Ok(())
    })
}

/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_results_free(results: *mut DcResults) {
    if !results.is_null() {
        drop(Box::from_raw(results));
    }
}

/// Number of (slot, sBS) rows.
///
/// # Safety
/// `results` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dc_results_n_rows(results: *const DcResults) -> usize {
    results.as_ref().map_or(0, |r| r.0.rows.len())
}

/// Cumulative hit of sBS `sbs` over all slots.
///
/// # Safety
/// `results` must be a live handle; `out_hit` writable.
#[no_mangle]
pub unsafe extern "C" fn dc_results_total_hit(results: *const DcResults, sbs: usize, out_hit: *mut f64) -> DcStatus {
    guard(|| {
        let r = obj(results, "results")?;
        let slot = out(out_hit, "out_hit")?;
        let n = r.0.n_sbs();
        if sbs >= n {
            return Err(Fail(DcStatus::Index, format!("index out of range: sbs {sbs} (len {n})")));
        }
        *slot = r.0.total_hit(sbs);
        Ok(())
    })
}

/// Per-row hits in (slot, sBS) order; `n` must equal the row count.
///
/// # Safety
/// `results` must be a live handle; `out_hits` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dc_results_hits(results: *const DcResults, out_hits: *mut f64, n: usize) -> DcStatus {
    guard(|| {
        let r = obj(results, "results")?;
        if r.0.rows.len() != n {
            return Err(invalid(format!("buffer holds {n} values, results have {} rows", r.0.rows.len())));
        }
        if n == 0 {
            return Ok(());
        }
        if out_hits.is_null() {
            return Err(null("out_hits"));
        }
        let buf = std::slice::from_raw_parts_mut(out_hits, n);
        for (b, row) in buf.iter_mut().zip(&r.0.rows) {
            *b = row.hit;
        }
        Ok(())
    })
}

/// Writes the metrics CSV to `path`.
///
/// # Safety
/// `results` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dc_results_write_csv(results: *const DcResults, path: *const c_char) -> DcStatus {
    guard(|| {
        let r = obj(results, "results")?;
        let path = Path::new(str_arg(path, "path")?);
        let mut buf = Vec::new();
        r.0.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Fail(DcStatus::Io, format!("{}: {e}", path.display())))
    })
}
