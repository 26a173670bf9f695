//! C ABI over `pcfdr`.
//!
//! Every fallible function returns a [`PcfdrStatus`]; on failure the message
//! is available from [`pcfdr_last_error`] on the same thread. Matrices and
//! reports are opaque handles released with their `_free` function. Strings
//! returned through `char **` must be released with [`pcfdr_string_free`].
//! Feature indices are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};
use std::slice;

use pcfdr::cli::{parse_scenarios, run_checks, SimulationReport, SCHEMA_VERSION};
use pcfdr::partial_conjunction::pc_pvalue;
use pcfdr::procedures::{bh_adjusted, step_up};
use pcfdr::replicability::{replicability_analysis, PValueMatrix, ReplicabilityReport, SelectionRule};
use pcfdr::{CombiningMethod, Error, ShapeFunction, ThresholdCollection, WeightScheme};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcfdrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Degenerate = 3,
    SizeLimit = 4,
    WeightNormalization = 5,
    LengthMismatch = 6,
    IndexOutOfRange = 7,
    NoTrueNull = 8,
    InvalidUtf8 = 9,
    Json = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcfdrMethod {
    Fisher = 0,
    Stouffer = 1,
    Simes = 2,
    Bonferroni = 3,
    Hommel = 4,
    /// Uses the `lambda` argument of the call.
    SimesStorey = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcfdrShape {
    Identity = 0,
    ReciprocalSum = 1,
    Bonferroni = 2,
}

/// Opaque p-value matrix (rows = features, columns = studies).
pub struct PcfdrMatrix(PValueMatrix);

/// Opaque replicability report.
pub struct PcfdrReport(ReplicabilityReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> PcfdrStatus {
    match err {
        Error::InvalidInput(_) => PcfdrStatus::InvalidArgument,
        Error::Degenerate(_) => PcfdrStatus::Degenerate,
        Error::SizeLimit { .. } => PcfdrStatus::SizeLimit,
        Error::WeightNormalization { .. } => PcfdrStatus::WeightNormalization,
        Error::LengthMismatch { .. } => PcfdrStatus::LengthMismatch,
        Error::IndexOutOfRange { .. } => PcfdrStatus::IndexOutOfRange,
        Error::NoTrueNull { .. } => PcfdrStatus::NoTrueNull,
    }
}

struct Failure(PcfdrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PcfdrStatus::NullPointer, format!("{what} is null"))
}

fn guard<F>(f: F) -> PcfdrStatus
where
    F: FnOnce() -> Result<(), Failure> + UnwindSafe,
{
    match catch_unwind(f) {
        Ok(Ok(())) => PcfdrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PcfdrStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn out_ref<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| null(what))
}

fn method(m: PcfdrMethod, lambda: f64) -> Result<CombiningMethod, Failure> {
    let method = match m {
        PcfdrMethod::Fisher => CombiningMethod::Fisher,
        PcfdrMethod::Stouffer => CombiningMethod::Stouffer,
        PcfdrMethod::Simes => CombiningMethod::Simes,
        PcfdrMethod::Bonferroni => CombiningMethod::Bonferroni,
        PcfdrMethod::Hommel => CombiningMethod::Hommel,
        PcfdrMethod::SimesStorey => CombiningMethod::SimesStorey { lambda },
    };
    method.validate()?;
    Ok(method)
}

fn shape(s: PcfdrShape) -> ShapeFunction {
    match s {
        PcfdrShape::Identity => ShapeFunction::Identity,
        PcfdrShape::ReciprocalSum => ShapeFunction::ReciprocalSum,
        PcfdrShape::Bonferroni => ShapeFunction::bonferroni(),
    }
}

fn into_c_string(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let out = unsafe { out_ref(out, "out")? };
    let c = CString::new(s).map_err(|e| Failure(PcfdrStatus::Json, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread; empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pcfdr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pcfdr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Global-null combination of `p[0..len]`.
///
/// # Safety
/// `p` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_combine(
    p: *const f64,
    len: usize,
    m: PcfdrMethod,
    lambda: f64,
    out: *mut f64,
) -> PcfdrStatus {
    guard(|| {
        let p = slice_in(p, len, "p")?;
        let out = out_ref(out, "out")?;
        *out = method(m, lambda)?.combine(p)?;
        Ok(())
    })
}

/// Partial conjunction p-value for "at least `u` of `len` effects".
///
/// # Safety
/// `p` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_pc_pvalue(
    p: *const f64,
    len: usize,
    u: usize,
    m: PcfdrMethod,
    lambda: f64,
    out: *mut f64,
) -> PcfdrStatus {
    guard(|| {
        let p = slice_in(p, len, "p")?;
        let out = out_ref(out, "out")?;
        *out = pc_pvalue(p, u, method(m, lambda)?)?;
        Ok(())
    })
}

/// BH-adjusted p-values into `out[0..len]`.
///
/// # Safety
/// `p` must point to `len` readable doubles and `out` to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_bh_adjusted(p: *const f64, len: usize, out: *mut f64) -> PcfdrStatus {
    guard(|| {
        let p = slice_in(p, len, "p")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let adj = bh_adjusted(p)?;
        slice::from_raw_parts_mut(out, len).copy_from_slice(&adj);
        Ok(())
    })
}

/// Weighted step-up procedure with thresholds `alpha * w_i * beta(r) / len`.
/// `w` and `v` may be null for unit weights. `rejected[i]` is set to 1 for
/// rejected hypotheses and 0 otherwise; `n_rejected` may be null.
///
/// # Safety
/// `p`, and `w`/`v` when non-null, must point to `len` readable doubles;
/// `rejected` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_step_up(
    p: *const f64,
    len: usize,
    w: *const f64,
    v: *const f64,
    alpha: f64,
    beta: PcfdrShape,
    rejected: *mut u8,
    n_rejected: *mut usize,
) -> PcfdrStatus {
    guard(|| {
        let p = slice_in(p, len, "p")?;
        if rejected.is_null() {
            return Err(null("rejected"));
        }
        let w = if w.is_null() { vec![1.0; len] } else { slice_in(w, len, "w")?.to_vec() };
        let v = if v.is_null() { vec![1.0; len] } else { slice_in(v, len, "v")?.to_vec() };
        let tc = ThresholdCollection::new(alpha, w, shape(beta))?;
        let rej = step_up(p, &tc, &v)?;
        let flags = slice::from_raw_parts_mut(rejected, len);
        flags.fill(0);
        for &i in &rej.indices {
            flags[i] = 1;
        }
        if let Some(n) = n_rejected.as_mut() {
            *n = rej.len();
        }
        Ok(())
    })
}

/// Copies a row-major `m x n` matrix into a new handle.
///
/// # Safety
/// `data` must point to `m * n` readable doubles and `out` to a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_matrix_new(
    m: usize,
    n: usize,
    data: *const f64,
    out: *mut *mut PcfdrMatrix,
) -> PcfdrStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let len = m
            .checked_mul(n)
            .ok_or_else(|| Failure(PcfdrStatus::InvalidArgument, "m * n overflows".into()))?;
        let data = slice_in(data, len, "data")?;
        let mat = PValueMatrix::new(m, n, data.to_vec())?;
        *out = Box::into_raw(Box::new(PcfdrMatrix(mat)));
        Ok(())
    })
}

/// # Safety
/// `mat` must be null or a handle from [`pcfdr_matrix_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_matrix_free(mat: *mut PcfdrMatrix) {
    if !mat.is_null() {
        drop(Box::from_raw(mat));
    }
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `mat` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_matrix_rows(mat: *const PcfdrMatrix) -> usize {
    mat.as_ref().map_or(0, |m| m.0.rows())
}

/// Number of columns, or 0 for a null handle.
///
/// # Safety
/// `mat` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_matrix_cols(mat: *const PcfdrMatrix) -> usize {
    mat.as_ref().map_or(0, |m| m.0.cols())
}

/// Two-step replicability analysis with unit weights: BH-type selection at
/// level `q` on the global-null p-values of `m`, then lower bounds on the
/// number of studies with an effect, both using shape `beta`.
///
/// # Safety
/// `mat` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_replicate(
    mat: *const PcfdrMatrix,
    m: PcfdrMethod,
    lambda: f64,
    q: f64,
    beta: PcfdrShape,
    out: *mut *mut PcfdrReport,
) -> PcfdrStatus {
    guard(|| {
        let mat = &mat.as_ref().ok_or_else(|| null("mat"))?.0;
        let out = out_ref(out, "out")?;
        let beta = shape(beta);
        let rule = SelectionRule::StepUpOnCombined {
            alpha: q,
            shape: beta.clone(),
            adaptive_lambda: None,
            combiner: None,
        };
        let ws = WeightScheme::unit(mat.rows());
        let report = replicability_analysis(mat, &rule, method(m, lambda)?, &ws, q, &beta)?;
        *out = Box::into_raw(Box::new(PcfdrReport(report)));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from [`pcfdr_replicate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_report_free(report: *mut PcfdrReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of selected features, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_report_len(report: *const PcfdrReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.features.len())
}

/// Weighted size of the selected set.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_report_selected_volume(report: *const PcfdrReport) -> f64 {
    report.as_ref().map_or(0.0, |r| r.0.selected_volume)
}

/// Entry `idx` of the report: feature index, its lower bound and the Step 2
/// threshold. Any output pointer may be null.
///
/// # Safety
/// `report` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_report_get(
    report: *const PcfdrReport,
    idx: usize,
    feature: *mut usize,
    khat: *mut usize,
    threshold: *mut f64,
) -> PcfdrStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        let f = r.features.get(idx).ok_or(Error::IndexOutOfRange {
            index: idx,
            len: r.features.len(),
        })?;
        if let Some(x) = feature.as_mut() {
            *x = f.feature;
        }
        if let Some(x) = khat.as_mut() {
            *x = f.khat;
        }
        if let Some(x) = threshold.as_mut() {
            *x = f.threshold;
        }
        Ok(())
    })
}

/// The report as JSON.
///
/// # Safety
/// `report` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_report_to_json(report: *const PcfdrReport, out: *mut *mut c_char) -> PcfdrStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        let json = serde_json::to_string(r).map_err(|e| Failure(PcfdrStatus::Json, e.to_string()))?;
        into_c_string(json, out)
    })
}

/// Runs the Monte Carlo checks of a scenario document (same format as the
/// command-line `verify`) and returns the JSON report. `all_pass` may be null.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_verify_json(
    scenario_json: *const c_char,
    out: *mut *mut c_char,
    all_pass: *mut c_int,
) -> PcfdrStatus {
    guard(|| {
        if scenario_json.is_null() {
            return Err(null("scenario_json"));
        }
        let text = CStr::from_ptr(scenario_json)
            .to_str()
            .map_err(|e| Failure(PcfdrStatus::InvalidUtf8, e.to_string()))?;
        let scenarios = parse_scenarios(text, "<scenario>").map_err(|e| Failure(PcfdrStatus::Json, e.to_string()))?;
        let records = run_checks(&scenarios)?;
        let pass = records.iter().all(|r| r.pass != Some(false));
        let report = SimulationReport {
            schema_version: SCHEMA_VERSION,
            command: "verify".into(),
            records,
            all_pass: pass,
        };
        let json = serde_json::to_string(&report).map_err(|e| Failure(PcfdrStatus::Json, e.to_string()))?;
        into_c_string(json, out)?;
        if let Some(flag) = all_pass.as_mut() {
            *flag = c_int::from(pass);
        }
        Ok(())
    })
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pcfdr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
