//! C ABI over the label placement engine.
//!
//! Every function returns a [`PflpStatus`]; on failure the message is kept per
//! thread and can be fetched with [`pflp_last_error`]. Strings handed out by
//! the library are owned by the caller and released with [`pflp_string_free`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pflp::candgen::TextMetricsConfig;
use pflp::edits::{Edit, Workspace};
use pflp::io::{generate_grid_dataset, parse_dataset, Dataset, DatasetFormat};
use pflp::model::{Labeling, UpdateParams};
use pflp::solvers::{self, Algorithm, SolverParams};
use pflp::update::{restrict, update_labeling};
use pflp::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PflpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    UnknownFeature = 4,
    UnknownCandidate = 5,
    UnknownAlgorithm = 6,
    FixationConflict = 7,
    Parse = 8,
    Io = 9,
    Internal = 10,
    Panic = 11,
}

impl From<&Error> for PflpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::UnknownFeature(_) => PflpStatus::UnknownFeature,
            Error::UnknownCandidate(_) => PflpStatus::UnknownCandidate,
            Error::UnknownAlgorithm(_) => PflpStatus::UnknownAlgorithm,
            Error::FixationConflict(..) => PflpStatus::FixationConflict,
            Error::Parse { .. } | Error::BadRecord { .. } => PflpStatus::Parse,
            Error::Io(_) | Error::Csv(_) => PflpStatus::Io,
            Error::InconsistentDelta(_) => PflpStatus::Internal,
            _ => PflpStatus::InvalidInput,
        }
    }
}

/// Opaque session: one dataset, its editable candidate store, the last solver
/// result and the labeling currently shown.
pub struct PflpSession {
    dataset: Dataset,
    workspace: Workspace,
    basis: Labeling,
    shown: Labeling,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Status(PflpStatus, String),
    Engine(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> PflpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PflpStatus::Ok,
        Ok(Err(Failure::Status(status, msg))) => {
            set_error(msg);
            status
        }
        Ok(Err(Failure::Engine(e))) => {
            set_error(e.to_string());
            PflpStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            PflpStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(PflpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure::Status(PflpStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn handle<'a>(p: *mut PflpSession) -> FfiResult<&'a mut PflpSession> {
    p.as_mut().ok_or_else(|| null("session"))
}

unsafe fn write<T>(out: *mut T, value: T) {
    if !out.is_null() {
        out.write(value);
    }
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

fn new_session(dataset: Dataset, font_size: f64) -> FfiResult<Box<PflpSession>> {
    let store = dataset.store(font_size, TextMetricsConfig::default())?;
    Ok(Box::new(PflpSession {
        dataset,
        workspace: Workspace::new(store)?,
        basis: Labeling::empty(),
        shown: Labeling::empty(),
    }))
}

/// Creates a session from GeoJSON or simple JSON text; `format` may be null to
/// detect it from the content.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pflp_session_from_json(
    json: *const c_char,
    format: *const c_char,
    font_size: f64,
    out: *mut *mut PflpSession,
) -> PflpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let json = text(json, "json")?;
        let format = if format.is_null() {
            if json.contains("\"FeatureCollection\"") {
                DatasetFormat::Geojson
            } else {
                DatasetFormat::SimpleJson
            }
        } else {
            text(format, "format")?.parse()?
        };
        let loaded = parse_dataset(json, format, "dataset")?;
        *out = Box::into_raw(new_session(loaded.dataset, font_size)?);
        Ok(())
    })
}

/// Creates a session over a generated jittered grid of point features.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pflp_session_from_grid(
    rows: u32,
    cols: u32,
    spacing_px: f64,
    jitter_px: f64,
    name_length: u32,
    seed: u64,
    font_size: f64,
    out: *mut *mut PflpSession,
) -> PflpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = generate_grid_dataset(rows, cols, spacing_px, jitter_px, name_length as usize, seed)?;
        *out = Box::into_raw(new_session(d, font_size)?);
        Ok(())
    })
}

/// # Safety
/// `session` must come from a constructor here and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn pflp_session_free(session: *mut PflpSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Live candidate and conflict counts.
///
/// # Safety
/// `session` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn pflp_graph_size(
    session: *mut PflpSession,
    out_candidates: *mut usize,
    out_conflicts: *mut usize,
) -> PflpStatus {
    guard(|| {
        let s = handle(session)?;
        write(out_candidates, s.workspace.graph().vertex_count());
        write(out_conflicts, s.workspace.graph().edge_count());
        Ok(())
    })
}

/// Computes a fresh labeling. `algorithm` is one of greedy, mis, falp, chain,
/// popmusic, exact; `time_limit_s` only affects exact and is ignored when not positive.
///
/// # Safety
/// `session` must be a live handle and `algorithm` NUL-terminated; `out_labeled` may be null.
#[no_mangle]
pub unsafe extern "C" fn pflp_solve(
    session: *mut PflpSession,
    algorithm: *const c_char,
    seed: u64,
    time_limit_s: f64,
    out_labeled: *mut usize,
) -> PflpStatus {
    guard(|| {
        let s = handle(session)?;
        let algorithm: Algorithm = text(algorithm, "algorithm")?.parse()?;
        let mut params = SolverParams::with_seed(seed);
        if time_limit_s > 0.0 {
            params.exact.time_limit = std::time::Duration::try_from_secs_f64(time_limit_s)
                .map_err(|e| Failure::Status(PflpStatus::InvalidInput, e.to_string()))?;
        }
        let out = solvers::solve(algorithm, s.workspace.graph(), &BTreeSet::new(), &params, None)?;
        s.basis = out.labeling.clone();
        s.shown = out.labeling;
        write(out_labeled, s.shown.len());
        Ok(())
    })
}

/// Applies one edit given as JSON, e.g. `{"kind":"DeleteFeature","feature":"a"}`.
///
/// # Safety
/// `session` must be a live handle and `edit_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pflp_apply_edit(session: *mut PflpSession, edit_json: *const c_char) -> PflpStatus {
    guard(|| {
        let s = handle(session)?;
        let edit: Edit = serde_json::from_str(text(edit_json, "edit")?).map_err(Error::from)?;
        s.workspace.apply_edit(&edit)?;
        s.shown = restrict(s.workspace.graph(), &s.shown);
        Ok(())
    })
}

/// Reverts the latest edit; `out_undone` tells whether there was one.
///
/// # Safety
/// `session` must be a live handle; `out_undone` may be null.
#[no_mangle]
pub unsafe extern "C" fn pflp_undo(session: *mut PflpSession, out_undone: *mut bool) -> PflpStatus {
    guard(|| {
        let s = handle(session)?;
        let undone = s.workspace.undo()?.is_some();
        if undone {
            s.shown = restrict(s.workspace.graph(), &s.shown);
        }
        write(out_undone, undone);
        Ok(())
    })
}

/// Re-optimizes after edits, favoring labels of the last solution by
/// `epsilon` (or the strict weight-first choice), and reports the stability ratio.
///
/// # Safety
/// `session` must be a live handle and `algorithm` NUL-terminated; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn pflp_update(
    session: *mut PflpSession,
    algorithm: *const c_char,
    epsilon: f64,
    strict: bool,
    seed: u64,
    out_ratio: *mut f64,
    out_labeled: *mut usize,
) -> PflpStatus {
    guard(|| {
        let s = handle(session)?;
        let algorithm: Algorithm = text(algorithm, "algorithm")?.parse()?;
        let params = UpdateParams {
            epsilon,
            strict_mode: strict,
        };
        let out = update_labeling(
            s.workspace.graph(),
            &s.basis,
            algorithm,
            &params,
            &SolverParams::with_seed(seed),
            None,
        )?;
        s.basis = out.labeling.clone();
        s.shown = out.labeling;
        write(out_ratio, out.report.ratio);
        write(out_labeled, s.shown.len());
        Ok(())
    })
}

/// The shown labeling as JSON: dataset name, selected ids, total weight and
/// the label rectangles. Free the string with [`pflp_string_free`].
///
/// # Safety
/// `session` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn pflp_labeling_json(session: *mut PflpSession, out: *mut *mut c_char) -> PflpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let s = handle(session)?;
        let store = s.workspace.store();
        let labels: Vec<_> = s.shown.selected.iter().filter_map(|&id| store.candidate(id)).collect();
        let body = serde_json::json!({
            "dataset": s.dataset.name,
            "selected": s.shown.selected,
            "total_weight": s.shown.total_weight,
            "labels": labels,
        });
        *out = owned_string(body.to_string());
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. Free with [`pflp_string_free`].
#[no_mangle]
pub extern "C" fn pflp_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pflp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn pflp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
