//! C interface to the cbx engine.
//!
//! Sessions are opaque handles. Every fallible call returns a [`CbxStatus`];
//! on failure the message is available from [`cbx_last_error_message`] on
//! the same thread. Strings handed out by the library must be released with
//! [`cbx_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cbx_core::metrics::{auc, binary_metric, brier, confusion, MetricId, RejectedPolicy};
use cbx_core::model::{Dataset, Label, LoadOptions};
use cbx_core::query::{curve, CurveKind, CurveQuery};
use cbx_core::session::{SelectionRequest, Session, SessionDoc};
use cbx_core::trinary::{classify, trinary_summary, OperatingPoint, Outcome};
use cbx_core::Error;

/// Opaque analysis session.
pub struct CbxSession {
    inner: Session,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbxStatus {
    Ok = 0,
    NullArg = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    NotFound = 5,
    Conflict = 6,
    InvalidArgument = 7,
    Undefined = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbxOutcome {
    Tp = 0,
    Fp = 1,
    Tn = 2,
    Fn = 3,
    Rejected = 4,
}

impl From<Outcome> for CbxOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::TP => CbxOutcome::Tp,
            Outcome::FP => CbxOutcome::Fp,
            Outcome::TN => CbxOutcome::Tn,
            Outcome::FN => CbxOutcome::Fn,
            Outcome::Rejected => CbxOutcome::Rejected,
        }
    }
}

/// Weighted outcome tallies.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CbxTrinaryCounts {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
    pub rejected: f64,
    pub total: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul bytes were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CbxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => CbxStatus::Parse,
            Error::Validation(_) => CbxStatus::Validation,
            Error::NotFound { .. } | Error::Reference { .. } => CbxStatus::NotFound,
            Error::Conflict(_) => CbxStatus::Conflict,
            Error::Undefined(_) => CbxStatus::Undefined,
            Error::InvalidArgument(_)
            | Error::UnsupportedPolicy { .. }
            | Error::NotNumeric(_)
            | Error::EmptyScope
            | Error::EmptyPartition(_) => CbxStatus::InvalidArgument,
        };
        Failure(status, format!("{}: {e}", e.code()))
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> CbxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbxStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CbxStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(CbxStatus::NullArg, format!("`{what}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CbxStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn session_ref<'a>(s: *const CbxSession) -> FfiResult<&'a Session> {
    s.as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| Failure(CbxStatus::NullArg, "`session` is null".into()))
}

unsafe fn session_mut<'a>(s: *mut CbxSession) -> FfiResult<&'a mut Session> {
    s.as_mut()
        .map(|s| &mut s.inner)
        .ok_or_else(|| Failure(CbxStatus::NullArg, "`session` is null".into()))
}

fn out_ptr<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    unsafe { p.as_mut() }.ok_or_else(|| Failure(CbxStatus::NullArg, format!("`{what}` is null")))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior nul bytes were replaced").into_raw()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cbx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cbx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn cbx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a dataset from its JSON ingest document and open a session on it.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbx_session_open_json(json: *const c_char, normalize: bool, out: *mut *mut CbxSession) -> CbxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let json = text(json, "json")?;
        let opts = LoadOptions {
            normalize,
            ..LoadOptions::default()
        };
        let (dataset, _) = Dataset::from_json(json.as_bytes(), &opts)?;
        *out = Box::into_raw(Box::new(CbxSession {
            inner: Session::new(dataset),
        }));
        Ok(())
    })
}

/// Rebuild a session from an exported session document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbx_session_import_json(json: *const c_char, out: *mut *mut CbxSession) -> CbxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let doc: SessionDoc = serde_json::from_str(text(json, "json")?)
            .map_err(|e| Failure(CbxStatus::Parse, format!("PARSE_ERROR: {e}")))?;
        *out = Box::into_raw(Box::new(CbxSession {
            inner: Session::import(doc)?,
        }));
        Ok(())
    })
}

/// Close a session. Null is ignored.
///
/// # Safety
/// `session` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn cbx_session_free(session: *mut CbxSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Number of instances in the session's dataset.
///
/// # Safety
/// `session` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbx_instance_count(session: *const CbxSession, out: *mut usize) -> CbxStatus {
    guard(|| {
        *out_ptr(out, "out")? = session_ref(session)?.dataset().len();
        Ok(())
    })
}

/// Move a classifier's operating point; writes the new version.
///
/// # Safety
/// `session` must be a live handle, `classifier` a nul-terminated string;
/// `out_version` may be null.
#[no_mangle]
pub unsafe extern "C" fn cbx_set_operating_point(
    session: *mut CbxSession,
    classifier: *const c_char,
    lower: f64,
    upper: f64,
    out_version: *mut u64,
) -> CbxStatus {
    guard(|| {
        let s = session_mut(session)?;
        let version = s.set_operating_point(text(classifier, "classifier")?, OperatingPoint::new(lower, upper)?)?;
        if let Some(v) = out_version.as_mut() {
            *v = version;
        }
        Ok(())
    })
}

/// Outcome of one score under `(lower, upper)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbx_classify(score: f64, positive: bool, lower: f64, upper: f64, out: *mut CbxOutcome) -> CbxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let op = OperatingPoint::new(lower, upper)?;
        let label = if positive { Label::Positive } else { Label::Negative };
        *out = classify(score, label, &op).into();
        Ok(())
    })
}

/// Outcome tallies of a classifier at its current point, over the visible
/// items or the given selection (null for all).
///
/// # Safety
/// `session` must be a live handle, string arguments nul-terminated or
/// null where allowed; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbx_trinary_summary(
    session: *const CbxSession,
    classifier: *const c_char,
    selection: *const c_char,
    out: *mut CbxTrinaryCounts,
) -> CbxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let s = session_ref(session)?;
        let name = text(classifier, "classifier")?;
        let scope = s.scope(optional_text(selection, "selection")?)?;
        let c = s.classifier(name)?;
        let t = trinary_summary(s.dataset(), c, &s.operating_point(name)?.point, scope.as_ref(), None);
        *out = CbxTrinaryCounts {
            tp: t.tp,
            fp: t.fp,
            tn: t.tn,
            fn_: t.fn_,
            rejected: t.rejected,
            total: t.total,
        };
        Ok(())
    })
}

/// Metric of a classifier at its current point. `metric` is one of
/// `accuracy`, `precision`, `recall`, `f1`, `mcc`, `auc`, `brier`;
/// `policy` (nullable) is `exclude`, `as-correct` or `as-incorrect`.
/// A zero-denominator ratio yields `0` with `*out_undefined` set.
///
/// # Safety
/// `session` must be a live handle, string arguments nul-terminated or
/// null where allowed; `out_value` must be writable and `out_undefined`
/// writable or null.
#[no_mangle]
pub unsafe extern "C" fn cbx_metric(
    session: *const CbxSession,
    classifier: *const c_char,
    metric: *const c_char,
    policy: *const c_char,
    selection: *const c_char,
    out_value: *mut f64,
    out_undefined: *mut bool,
) -> CbxStatus {
    guard(|| {
        let out_value = out_ptr(out_value, "out_value")?;
        let s = session_ref(session)?;
        let name = text(classifier, "classifier")?;
        let metric: MetricId = text(metric, "metric")?.parse()?;
        let policy = match optional_text(policy, "policy")? {
            None => RejectedPolicy::Exclude,
            Some(p) => serde_json::from_value(serde_json::Value::String(p.to_owned()))
                .map_err(|_| Failure(CbxStatus::InvalidArgument, format!("INVALID_ARGUMENT: unknown policy `{p}`")))?,
        };
        let scope = s.scope(optional_text(selection, "selection")?)?;
        let c = s.classifier(name)?;
        let (value, undefined) = match (metric, metric.binary()) {
            (_, Some(m)) => {
                let conf = confusion(s.dataset(), c, &s.operating_point(name)?.point, scope.as_ref(), None);
                let v = binary_metric(&conf, m, policy)?;
                (v.value, v.undefined)
            }
            (MetricId::Auc, None) => (auc(s.dataset(), c, scope.as_ref())?, false),
            (_, None) => (brier(s.dataset(), c, scope.as_ref(), None)?, false),
        };
        *out_value = value;
        if let Some(u) = out_undefined.as_mut() {
            *u = undefined;
        }
        Ok(())
    })
}

/// Create a selection from a JSON request
/// (`{"expr": ..., "name"?, "weight"?, "slot"?}`); writes its new id.
///
/// # Safety
/// `session` must be a live handle, `request_json` nul-terminated and
/// `out_id` writable. Free the id with [`cbx_string_free`].
#[no_mangle]
pub unsafe extern "C" fn cbx_create_selection(
    session: *mut CbxSession,
    request_json: *const c_char,
    out_id: *mut *mut c_char,
) -> CbxStatus {
    guard(|| {
        let out_id = out_ptr(out_id, "out_id")?;
        let req: SelectionRequest = serde_json::from_str(text(request_json, "request_json")?)
            .map_err(|e| Failure(CbxStatus::Parse, format!("PARSE_ERROR: {e}")))?;
        let id = session_mut(session)?.create_selection(req)?.id.clone();
        *out_id = owned_string(id);
        Ok(())
    })
}

/// Current member count of a selection.
///
/// # Safety
/// `session` must be a live handle, `id` nul-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cbx_selection_size(session: *const CbxSession, id: *const c_char, out: *mut usize) -> CbxStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = session_ref(session)?.selection(text(id, "id")?)?.members.len();
        Ok(())
    })
}

/// Curve of the given kind (`roc`, `pr`, `reliability`, `perf-conf`, `arc`,
/// `bandwidth`, `heatmap`, `scatter`, `feature-histogram`,
/// `trinary-summary`) as JSON. `query` holds `key=value` pairs joined by
/// `&`, or is null.
///
/// # Safety
/// `session` must be a live handle, strings nul-terminated or null where
/// allowed, `out_json` writable. Free the result with [`cbx_string_free`].
#[no_mangle]
pub unsafe extern "C" fn cbx_curve_json(
    session: *const CbxSession,
    kind: *const c_char,
    query: *const c_char,
    out_json: *mut *mut c_char,
) -> CbxStatus {
    guard(|| {
        let out_json = out_ptr(out_json, "out_json")?;
        let s = session_ref(session)?;
        let kind: CurveKind = text(kind, "kind")?.parse()?;
        let query = match optional_text(query, "query")? {
            Some(q) => CurveQuery::parse(q)?,
            None => CurveQuery::new(),
        };
        let value = curve(s, kind, &query)?;
        *out_json = owned_string(value.to_json());
        Ok(())
    })
}

/// Full session document as JSON, loadable with [`cbx_session_import_json`].
///
/// # Safety
/// `session` must be a live handle and `out_json` writable. Free the result
/// with [`cbx_string_free`].
#[no_mangle]
pub unsafe extern "C" fn cbx_export_json(session: *const CbxSession, out_json: *mut *mut c_char) -> CbxStatus {
    guard(|| {
        let out_json = out_ptr(out_json, "out_json")?;
        let doc = session_ref(session)?.export();
        *out_json = owned_string(serde_json::to_string(&doc).expect("session documents serialize"));
        Ok(())
    })
}
