//! C ABI over the persona-debate library.
//!
//! Conventions:
//! - Every fallible function returns a [`PdStatus`]; on anything other than
//!   `PD_STATUS_OK` a message is available from [`pd_last_error_message`]
//!   on the same thread until the next failing call.
//! - Handles ([`PdTallySet`], [`PdFit`]) are opaque and owned by the caller
//!   once returned; release them with the matching `*_free` function.
//! - Strings returned through `char **` out-parameters are heap-allocated,
//!   NUL-terminated UTF-8 and must be released with [`pd_string_free`].
//! - Panics never cross the boundary; they surface as `PD_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use persona_debate::analysis::{
    builtin_paper_dataset, cell_mle, dominance_matrix, fit_trait_parameters, goodness_of_fit,
    nontransitive_triads, tally_transcripts, FitConfig, FitResult, OutcomeCounts, OutcomeTally,
};
use persona_debate::backend::CellProbabilities;
use persona_debate::cli::cmd_run;
use persona_debate::config::RunConfig;
use persona_debate::protocol::default_topics;
use persona_debate::tournament::load_transcripts;
use persona_debate::Error;

/// Result codes shared by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// An argument or configuration value was rejected.
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// Input could not be parsed.
    Parse = 4,
    /// Required data is missing or a quantity is undefined.
    MissingData = 5,
    /// The language-model backend or its environment failed.
    Backend = 6,
    /// An output buffer was too small; the required size was reported.
    BufferTooSmall = 7,
    /// An internal panic was caught.
    Panic = 8,
}

/// Outcome counts of one (agent pair, topic) cell in canonical order:
/// A convinces B, B convinces A, mutual resistance, bilateral influence.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PdCell {
    pub agent_a: u32,
    pub agent_b: u32,
    pub counts: [u64; 4],
}

/// Opaque set of outcome tallies.
pub struct PdTallySet {
    tallies: Vec<OutcomeTally>,
}

/// Opaque result of a trait-parameter fit.
pub struct PdFit {
    result: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', "\\0");
    let c = CString::new(message).expect("NULs replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(error: &Error) -> PdStatus {
    match error {
        Error::InvalidArgument(_)
        | Error::Config(_)
        | Error::Validation { .. }
        | Error::MalformedTranscript(_)
        | Error::UnparseableVerdict { .. } => PdStatus::InvalidArgument,
        Error::Io { .. } => PdStatus::Io,
        Error::Parse { .. } | Error::Json(_) => PdStatus::Parse,
        Error::MissingData(_) | Error::UndefinedProportion => PdStatus::MissingData,
        Error::Environment(_)
        | Error::BackendUnavailable { .. }
        | Error::PermanentRequest { .. }
        | Error::InteractionFailed { .. } => PdStatus::Backend,
    }
}

struct Fail(PdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PdStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> PdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PdStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {message}"));
            PdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PdStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

fn to_c_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(PdStatus::InvalidArgument, "string contains a NUL byte".into()))
}

/// Message of the last failure on this thread, or NULL if none. The pointer
/// stays valid until the next failing call on the same thread; do not free
/// it.
#[no_mangle]
pub extern "C" fn pd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a pointer obtained from this library that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn pd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Tallies of the eighteen built-in published table rows.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pd_tallies_from_paper(out: *mut *mut PdTallySet) -> PdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let set = PdTallySet {
            tallies: builtin_paper_dataset().tallies(),
        };
        *out = Box::into_raw(Box::new(set));
        Ok(())
    })
}

/// Reads, validates, adjudicates and tallies a JSONL transcript file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_tallies_from_jsonl(path: *const c_char, out: *mut *mut PdTallySet) -> PdStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let transcripts = load_transcripts(&path)?;
        let tallies = tally_transcripts(&transcripts)?;
        *out = Box::into_raw(Box::new(PdTallySet { tallies }));
        Ok(())
    })
}

/// Releases a tally set. NULL is ignored.
///
/// # Safety
/// `set` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn pd_tallies_free(set: *mut PdTallySet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of cells in the set; 0 for NULL.
///
/// # Safety
/// `set` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_tallies_len(set: *const PdTallySet) -> usize {
    set.as_ref().map_or(0, |s| s.tallies.len())
}

unsafe fn tally_at<'a>(set: *const PdTallySet, index: usize) -> Result<&'a OutcomeTally, Fail> {
    let set = set.as_ref().ok_or_else(|| null("set"))?;
    set.tallies.get(index).ok_or_else(|| {
        Fail(
            PdStatus::InvalidArgument,
            format!("index {index} out of range for {} cells", set.tallies.len()),
        )
    })
}

/// Pair and counts of cell `index`.
///
/// # Safety
/// `set` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_tallies_get(set: *const PdTallySet, index: usize, out: *mut PdCell) -> PdStatus {
    guard(|| {
        let tally = tally_at(set, index)?;
        let out = out_arg(out, "out")?;
        *out = PdCell {
            agent_a: tally.pair.0,
            agent_b: tally.pair.1,
            counts: tally.counts.as_array(),
        };
        Ok(())
    })
}

/// Topic abbreviation of cell `index`; free with [`pd_string_free`].
///
/// # Safety
/// `set` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_tallies_topic(set: *const PdTallySet, index: usize, out: *mut *mut c_char) -> PdStatus {
    guard(|| {
        let tally = tally_at(set, index)?;
        let out = out_arg(out, "out")?;
        *out = to_c_string(tally.topic.clone())?;
        Ok(())
    })
}

/// Non-transitive dominance triads. Writes up to `capacity` triads as
/// consecutive id triples into `out` (3 · capacity values) and the total
/// number found into `count`. Returns `PD_STATUS_BUFFER_TOO_SMALL` when
/// `capacity` is short; `out` may be NULL when `capacity` is 0.
///
/// # Safety
/// `set` must be a live handle; `out` must hold `3 * capacity` values;
/// `count` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_tallies_triads(
    set: *const PdTallySet,
    out: *mut u32,
    capacity: usize,
    count: *mut usize,
) -> PdStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        let count = out_arg(count, "count")?;
        let triads = nontransitive_triads(&dominance_matrix(&set.tallies));
        *count = triads.len();
        if triads.is_empty() {
            return Ok(());
        }
        if capacity < triads.len() {
            return Err(Fail(
                PdStatus::BufferTooSmall,
                format!("{} triads need capacity {}", triads.len(), triads.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let dst = std::slice::from_raw_parts_mut(out, 3 * triads.len());
        for (chunk, triad) in dst.chunks_exact_mut(3).zip(&triads) {
            chunk.copy_from_slice(triad);
        }
        Ok(())
    })
}

unsafe fn counts_arg(counts: *const u64) -> Result<OutcomeTally, Fail> {
    if counts.is_null() {
        return Err(null("counts"));
    }
    let c: [u64; 4] = std::slice::from_raw_parts(counts, 4).try_into().expect("length 4");
    Ok(OutcomeTally::new((1, 2), "cell", OutcomeCounts::from_array(c)))
}

/// Closed-form maximum-likelihood conversion probabilities of one cell.
///
/// # Safety
/// `counts` must point to four values; `a` and `b` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_cell_mle(counts: *const u64, a: *mut f64, b: *mut f64) -> PdStatus {
    guard(|| {
        let tally = counts_arg(counts)?;
        let a = out_arg(a, "a")?;
        let b = out_arg(b, "b")?;
        (*a, *b) = cell_mle(&tally)?;
        Ok(())
    })
}

/// G statistic (1 degree of freedom) of one cell against the independence
/// model with conversion probabilities `a` and `b`.
///
/// # Safety
/// `counts` must point to four values; `g` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_g_statistic(counts: *const u64, a: f64, b: f64, g: *mut f64) -> PdStatus {
    guard(|| {
        let tally = counts_arg(counts)?;
        let g = out_arg(g, "g")?;
        *g = goodness_of_fit(&tally, a, b)?.g;
        Ok(())
    })
}

/// Outcome distribution of the independence model in canonical order.
///
/// # Safety
/// `out` must be valid for writing four values.
#[no_mangle]
pub unsafe extern "C" fn pd_cell_distribution(a: f64, b: f64, out: *mut f64) -> PdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let dist = CellProbabilities::new(a, b)?.distribution();
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&dist);
        Ok(())
    })
}

/// Fits assertiveness, susceptibility and topic difficulty to a tally set
/// with default settings. Topics are ordered as in the default topic list,
/// then by name; the first present topic has difficulty 1.
///
/// # Safety
/// `set` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_fit(set: *const PdTallySet, out: *mut *mut PdFit) -> PdStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        let out = out_arg(out, "out")?;
        let order: Vec<String> = default_topics().into_iter().map(|t| t.abbreviation).collect();
        let result = fit_trait_parameters(&set.tallies, &order, &FitConfig::default())?;
        *out = Box::into_raw(Box::new(PdFit { result }));
        Ok(())
    })
}

/// Log-likelihood of the fitted parameters; NaN for NULL.
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_fit_log_likelihood(fit: *const PdFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.result.log_likelihood)
}

/// Whether the fit converged before the iteration cap; false for NULL.
///
/// # Safety
/// `fit` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pd_fit_converged(fit: *const PdFit) -> bool {
    fit.as_ref().is_some_and(|f| f.result.converged)
}

/// Full fit result as JSON; free with [`pd_string_free`].
///
/// # Safety
/// `fit` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_fit_to_json(fit: *const PdFit, out: *mut *mut c_char) -> PdStatus {
    guard(|| {
        let fit = fit.as_ref().ok_or_else(|| null("fit"))?;
        let out = out_arg(out, "out")?;
        *out = to_c_string(serde_json::to_string(&fit.result).map_err(Error::from)?)?;
        Ok(())
    })
}

/// Releases a fit. NULL is ignored.
///
/// # Safety
/// `fit` must be NULL or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn pd_fit_free(fit: *mut PdFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Runs a tournament and writes its transcripts and manifest. `config_path`
/// may be NULL for the defaults; a non-NULL `out_dir` overrides the
/// configured output directory. On success the manifest JSON is returned
/// through `manifest_json` (free with [`pd_string_free`]).
///
/// # Safety
/// String arguments must be NULL or NUL-terminated; `manifest_json` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pd_run(
    config_path: *const c_char,
    out_dir: *const c_char,
    manifest_json: *mut *mut c_char,
) -> PdStatus {
    guard(|| {
        let out = out_arg(manifest_json, "manifest_json")?;
        let mut config = if config_path.is_null() {
            RunConfig::default()
        } else {
            RunConfig::load(&PathBuf::from(str_arg(config_path, "config_path")?))?
        };
        if !out_dir.is_null() {
            config.output_dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        }
        let summary = cmd_run(&config).map_err(|f| Fail::from(f.error))?;
        *out = to_c_string(serde_json::to_string(&summary.manifest).map_err(Error::from)?)?;
        Ok(())
    })
}
