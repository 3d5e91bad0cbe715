//! C ABI over `unipred`.
//!
//! Models and predictors are opaque handles released with the matching
//! `up_*_free`. Every fallible call returns an [`UpStatus`]; on failure
//! `up_last_error` describes the problem. Symbols are `size_t` values in
//! `0..alphabet`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use unipred::marginal::marginal_assignment_logprob;
use unipred::modelfile::parse_model;
use unipred::models::{random_hmm, random_renewal};
use unipred::predictor::{Predictor, PredictorSpec};
use unipred::{Error, Model};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    BudgetExceeded = 4,
    ImpossibleSequence = 5,
    BufferTooSmall = 6,
    Failure = 7,
    Panic = 8,
}

/// A hidden Markov model or renewal law.
pub struct UpModel {
    inner: Model,
}

/// A next-symbol predictor.
pub struct UpPredictor {
    inner: Box<dyn Predictor>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> UpStatus {
    match err {
        Error::Config(_) => UpStatus::Parse,
        Error::ImpossibleSequence => UpStatus::ImpossibleSequence,
        e if e.is_budget() => UpStatus::BudgetExceeded,
        Error::Io { .. } => UpStatus::Failure,
        _ => UpStatus::InvalidArgument,
    }
}

fn fail(status: UpStatus, msg: impl Into<String>) -> UpStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), UpStatus>) -> UpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UpStatus::Ok,
        Ok(Err(s)) => s,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(UpStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lift<T>(r: unipred::Result<T>) -> Result<T, UpStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), UpStatus> {
    if p.is_null() {
        Err(fail(UpStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, UpStatus> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(UpStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], UpStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], UpStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn boxed<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers check `out` for null first.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn up_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn up_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a model from JSON (`{"k","l","trans","emit"}` or `{"mu"}`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn up_model_from_json(
    json: *const c_char,
    out: *mut *mut UpModel,
) -> UpStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = str_arg(json, "json")?;
        let model = lift(parse_model(text))?;
        boxed(out, UpModel { inner: model });
        Ok(())
    })
}

/// Random `k`-state HMM over `l` symbols.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn up_model_random_hmm(
    k: usize,
    l: usize,
    seed: u64,
    out: *mut *mut UpModel,
) -> UpStatus {
    guard(|| {
        non_null(out, "out")?;
        if k == 0 || l == 0 {
            return Err(fail(UpStatus::InvalidArgument, "k and l must be positive"));
        }
        boxed(
            out,
            UpModel {
                inner: Model::Hmm(random_hmm(k, l, seed)),
            },
        );
        Ok(())
    })
}

/// Random renewal law on `{1..support}`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn up_model_random_renewal(
    support: usize,
    seed: u64,
    out: *mut *mut UpModel,
) -> UpStatus {
    guard(|| {
        non_null(out, "out")?;
        if support == 0 {
            return Err(fail(UpStatus::InvalidArgument, "support must be positive"));
        }
        boxed(
            out,
            UpModel {
                inner: Model::Renewal(random_renewal(support, seed)),
            },
        );
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn up_model_free(model: *mut UpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn up_model_alphabet(model: *const UpModel, out: *mut usize) -> UpStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).inner.alphabet();
        Ok(())
    })
}

/// Writes a sampled path of length `n` into `buf`, which holds `buf_len`
/// symbols.
///
/// # Safety
/// `model` must be valid and `buf` must hold `buf_len` elements.
#[no_mangle]
pub unsafe extern "C" fn up_model_sample(
    model: *const UpModel,
    n: usize,
    seed: u64,
    buf: *mut usize,
    buf_len: usize,
) -> UpStatus {
    guard(|| {
        non_null(model, "model")?;
        if buf_len < n {
            return Err(fail(
                UpStatus::BufferTooSmall,
                format!("buffer holds {buf_len} symbols, {n} needed"),
            ));
        }
        let out = slice_out(buf, n, "buf")?;
        out.copy_from_slice(&(*model).inner.sample(n, seed));
        Ok(())
    })
}

/// Natural log-probability of `x` under the model.
///
/// # Safety
/// `model` and `out` must be valid; `x` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn up_model_log_prob(
    model: *const UpModel,
    x: *const usize,
    n: usize,
    out: *mut f64,
) -> UpStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let x = slice_arg(x, n, "x")?;
        *out = lift((*model).inner.log_prob(x))?;
        Ok(())
    })
}

/// Builds a predictor from a JSON spec such as
/// `{"kind":"markov-approx","l":2,"d":"auto"}`. `model` may be null except
/// for the oracle predictor.
///
/// # Safety
/// `spec` must be a NUL-terminated string, `model` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn up_predictor_from_json(
    spec: *const c_char,
    model: *const UpModel,
    out: *mut *mut UpPredictor,
) -> UpStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = str_arg(spec, "spec")?;
        let spec: PredictorSpec = serde_json::from_str(text)
            .map_err(|e| fail(UpStatus::Parse, format!("predictor spec: {e}")))?;
        let model = if model.is_null() {
            None
        } else {
            Some(&(*model).inner)
        };
        let inner = lift(spec.build(model))?;
        boxed(out, UpPredictor { inner });
        Ok(())
    })
}

/// Releases a predictor; null is ignored.
///
/// # Safety
/// `predictor` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn up_predictor_free(predictor: *mut UpPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// # Safety
/// `predictor` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn up_predictor_alphabet(
    predictor: *const UpPredictor,
    out: *mut usize,
) -> UpStatus {
    guard(|| {
        non_null(predictor, "predictor")?;
        non_null(out, "out")?;
        *out = (*predictor).inner.alphabet();
        Ok(())
    })
}

/// Writes the next-symbol distribution after `x` into `probs`, which must
/// hold at least the predictor's alphabet size.
///
/// # Safety
/// `predictor` must be valid, `x` must hold `n` elements and `probs`
/// `probs_len` elements.
#[no_mangle]
pub unsafe extern "C" fn up_predict(
    predictor: *const UpPredictor,
    x: *const usize,
    n: usize,
    probs: *mut f64,
    probs_len: usize,
) -> UpStatus {
    guard(|| {
        non_null(predictor, "predictor")?;
        let p = &(*predictor).inner;
        if probs_len < p.alphabet() {
            return Err(fail(
                UpStatus::BufferTooSmall,
                format!("probs holds {probs_len} values, {} needed", p.alphabet()),
            ));
        }
        let x = slice_arg(x, n, "x")?;
        let dist = lift(p.predict(x))?;
        slice_out(probs, p.alphabet(), "probs")?.copy_from_slice(dist.probs());
        Ok(())
    })
}

/// Log-probability of `x` under the `k`-state marginal add-one assignment
/// over `l` symbols.
///
/// # Safety
/// `x` must hold `n` elements and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn up_marginal_log_prob(
    k: usize,
    l: usize,
    x: *const usize,
    n: usize,
    out: *mut f64,
) -> UpStatus {
    guard(|| {
        non_null(out, "out")?;
        let x = slice_arg(x, n, "x")?;
        *out = lift(marginal_assignment_logprob(x, k, l))?;
        Ok(())
    })
}
