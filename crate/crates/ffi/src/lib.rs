//! C ABI over the model checker, linter and SQL generator.
//!
//! A model is loaded once into an opaque `UbdbChain` handle; every other
//! call takes the handle and returns its result as a JSON document in a
//! newly allocated string the caller releases with `ubdb_string_free`.
//! Functions return a `UbdbStatus` code; on failure `ubdb_last_error`
//! describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::Deserialize;
use ubdb::checker::{self, report, CheckOptions, CheckReport, Verdict};
use ubdb::engine::Scope;
use ubdb::resolve::ResolvedChain;
use ubdb::{parser, patterns, resolve, sqlgen, types};

/// Result codes. Non-negative codes mean the call completed.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UbdbStatus {
    /// Completed; nothing to report.
    Ok = 0,
    /// Completed with findings: violated obligations or lint errors.
    Findings = 1,
    /// A required pointer argument was NULL.
    NullArgument = -1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = -2,
    /// The model text does not parse.
    Parse = -3,
    /// Names do not resolve or the refinement structure is inconsistent.
    Resolve = -4,
    /// The model is ill-typed.
    Type = -5,
    /// The options document is malformed or names unknown sets/machines.
    Options = -6,
    /// Checking or SQL generation failed.
    Failed = -7,
    /// An internal error was caught at the boundary.
    Internal = -99,
}

/// A loaded, resolved and type-checked model.
pub struct UbdbChain {
    chain: ResolvedChain,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

type Res<T> = Result<T, (UbdbStatus, String)>;

/// Run `f`, recording any error message, and translate panics.
fn guard(f: impl FnOnce() -> Res<UbdbStatus>) -> UbdbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => {
            set_error("");
            s
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal error");
            UbdbStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err((UbdbStatus::NullArgument, format!("{what} is NULL")));
    }
    // SAFETY: the caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|e| (UbdbStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn opt_text<'a>(p: *const c_char, what: &str) -> Res<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        unsafe { text(p, what) }.map(Some)
    }
}

unsafe fn chain_ref<'a>(h: *const UbdbChain) -> Res<&'a ResolvedChain> {
    // SAFETY: a non-NULL handle comes from `ubdb_chain_load`.
    unsafe { h.as_ref() }
        .map(|h| &h.chain)
        .ok_or((UbdbStatus::NullArgument, "chain handle is NULL".into()))
}

unsafe fn put(out: *mut *mut c_char, s: String) -> Res<()> {
    if out.is_null() {
        return Err((UbdbStatus::NullArgument, "output pointer is NULL".into()));
    }
    let c = CString::new(s).map_err(|e| (UbdbStatus::Internal, e.to_string()))?;
    // SAFETY: `out` is a valid, writable pointer.
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn load(source: &str) -> Res<ResolvedChain> {
    let join = |v: Vec<String>| v.join("\n");
    let chain = parser::parse_chain(source)
        .map_err(|d| (UbdbStatus::Parse, join(d.iter().map(|d| d.to_string()).collect())))?;
    let resolved =
        resolve::resolve(&chain).map_err(|e| (UbdbStatus::Resolve, join(e.iter().map(|e| e.to_string()).collect())))?;
    let diags = types::typecheck(&resolved);
    if !diags.is_empty() {
        return Err((UbdbStatus::Type, join(diags.iter().map(|d| d.to_string()).collect())));
    }
    Ok(resolved)
}

/// Options accepted by `ubdb_check` as a JSON object; every field is
/// optional: `{"machine": "M2", "refinement": false, "scope": {"SET": 3},
/// "budget": 100000, "symmetry": true}`.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CheckRequest {
    machine: Option<String>,
    #[serde(default)]
    refinement: bool,
    #[serde(default)]
    scope: std::collections::BTreeMap<String, usize>,
    budget: Option<usize>,
    symmetry: Option<bool>,
}

fn check_reports(chain: &ResolvedChain, req: &CheckRequest) -> Res<Vec<CheckReport>> {
    let bad = |m: String| (UbdbStatus::Options, m);
    let mut scope = Scope::default_for(chain);
    for (set, n) in &req.scope {
        scope.set(set, *n).map_err(|e| bad(format!("scope {set}: {e}")))?;
    }
    let mut opts = CheckOptions::new(scope);
    if let Some(b) = req.budget {
        opts = opts.budget(b);
    }
    if let Some(s) = req.symmetry {
        opts = opts.symmetry(s);
    }
    let names: Vec<&str> = match &req.machine {
        Some(m) if chain.machine(m).is_none() => return Err(bad(format!("unknown machine '{m}'"))),
        Some(m) => vec![m],
        None => chain.machines.iter().map(|m| m.name.as_str()).collect(),
    };
    let failed = |e: checker::CheckError| (UbdbStatus::Failed, e.to_string());
    let mut out = Vec::new();
    for name in names {
        let m = chain.machine(name).expect("known machine");
        if req.refinement {
            if let Some(a) = chain.abstraction_of(m) {
                out.extend(checker::check_refinement(chain, &opts, &a.name, name).map_err(failed)?);
            }
        } else {
            let mut found = checker::check(chain, &opts, name).map_err(failed)?;
            checker::annotate_circular(m, &mut found);
            out.extend(found);
        }
    }
    Ok(out)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ubdb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ubdb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse, resolve and type-check `source`, storing a new handle in `*out`.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ubdb_chain_load(source: *const c_char, out: *mut *mut UbdbChain) -> UbdbStatus {
    guard(|| {
        if out.is_null() {
            return Err((UbdbStatus::NullArgument, "output pointer is NULL".into()));
        }
        let chain = load(unsafe { text(source, "source") }?)?;
        unsafe { *out = Box::into_raw(Box::new(UbdbChain { chain })) };
        Ok(UbdbStatus::Ok)
    })
}

/// Release a handle. NULL is ignored.
///
/// # Safety
/// `chain` must come from `ubdb_chain_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ubdb_chain_free(chain: *mut UbdbChain) {
    if !chain.is_null() {
        drop(unsafe { Box::from_raw(chain) });
    }
}

/// Number of machines in the chain (0 for NULL).
///
/// # Safety
/// `chain` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ubdb_chain_machine_count(chain: *const UbdbChain) -> usize {
    unsafe { chain.as_ref() }.map_or(0, |c| c.chain.machines.len())
}

/// Discharge proof obligations. `options_json` may be NULL for the defaults.
/// Writes the structured report to `*out_json` and returns `Ok` when every
/// obligation holds, `Findings` otherwise.
///
/// # Safety
/// `chain` must be a live handle, `options_json` NULL or a NUL-terminated
/// string, and `out_json` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ubdb_check(
    chain: *const UbdbChain,
    options_json: *const c_char,
    out_json: *mut *mut c_char,
) -> UbdbStatus {
    guard(|| {
        let chain = unsafe { chain_ref(chain) }?;
        let req: CheckRequest = match unsafe { opt_text(options_json, "options") }? {
            Some(s) => serde_json::from_str(s).map_err(|e| (UbdbStatus::Options, e.to_string()))?,
            None => CheckRequest::default(),
        };
        let reports = check_reports(chain, &req)?;
        let doc = serde_json::to_string_pretty(&report::to_json(&reports)).expect("JSON value serializes");
        unsafe { put(out_json, doc) }?;
        Ok(if reports.iter().all(|r| r.verdict == Verdict::Holds) {
            UbdbStatus::Ok
        } else {
            UbdbStatus::Findings
        })
    })
}

/// Methodology lint. Returns `Findings` when an error-severity rule fires.
///
/// # Safety
/// `chain` must be a live handle and `out_json` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ubdb_lint(chain: *const UbdbChain, out_json: *mut *mut c_char) -> UbdbStatus {
    guard(|| {
        let chain = unsafe { chain_ref(chain) }?;
        let findings = patterns::lint(chain);
        let doc = serde_json::to_string_pretty(&patterns::to_json(&findings)).expect("JSON value serializes");
        unsafe { put(out_json, doc) }?;
        Ok(if patterns::has_errors(&findings) {
            UbdbStatus::Findings
        } else {
            UbdbStatus::Ok
        })
    })
}

/// Generate the SQL script and manifest for `machine` (NULL: the last).
/// No verification is performed; call `ubdb_check` first.
///
/// # Safety
/// `chain` must be a live handle, `machine` NULL or a NUL-terminated string,
/// and both output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn ubdb_generate_sql(
    chain: *const UbdbChain,
    machine: *const c_char,
    out_sql: *mut *mut c_char,
    out_manifest: *mut *mut c_char,
) -> UbdbStatus {
    guard(|| {
        let chain = unsafe { chain_ref(chain) }?;
        let machine = unsafe { opt_text(machine, "machine") }?;
        if out_sql.is_null() || out_manifest.is_null() {
            return Err((UbdbStatus::NullArgument, "output pointer is NULL".into()));
        }
        let script = sqlgen::generate(chain, machine).map_err(|e| {
            let code = match e {
                sqlgen::SqlGenError::UnknownMachine(_) => UbdbStatus::Options,
                _ => UbdbStatus::Failed,
            };
            (code, e.to_string())
        })?;
        unsafe { put(out_sql, sqlgen::render_script(&script)) }?;
        unsafe { put(out_manifest, sqlgen::render_manifest(&script.manifest)) }?;
        Ok(UbdbStatus::Ok)
    })
}

/// Canonical pretty-printed form of `source` (parsing only).
///
/// # Safety
/// `source` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn ubdb_format(source: *const c_char, out: *mut *mut c_char) -> UbdbStatus {
    guard(|| {
        let src = unsafe { text(source, "source") }?;
        let chain = parser::parse_chain(src).map_err(|d| {
            (
                UbdbStatus::Parse,
                d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"),
            )
        })?;
        unsafe { put(out, parser::pretty_print(&chain)) }?;
        Ok(UbdbStatus::Ok)
    })
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ubdb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
