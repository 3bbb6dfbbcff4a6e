//! C ABI over `lmulm`.
//!
//! Every fallible function returns an [`LmuStatus`] code and writes results
//! through out-pointers. On failure the message is kept per thread and read
//! with [`lmu_last_error`]. Handles are opaque and released with their
//! `*_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lmulm::checkpoint::{peek_header, Checkpoint, CheckpointError};
use lmulm::costmodel::{predict_flops, Dims};
use lmulm::data::VOCAB;
use lmulm::lmu::{
    build_continuous, discretize_zoh, impulse_response, run_fft_conv, run_rk, run_state_space, ContinuousSystem,
    DiscreteSystem, LmuConfig, MemorySequence, RkOrder,
};
use lmulm::model::{per_token_loss, Model};
use lmulm::numerics::{Precision, Real, Tensor};
use lmulm::Error;

/// Result codes. Zero is success; every failure is negative.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmuStatus {
    Ok = 0,
    NullPointer = -1,
    InvalidArgument = -2,
    Domain = -3,
    Numeric = -4,
    Io = -5,
    Checkpoint = -6,
    Panic = -7,
}

/// Memory evaluation strategy for [`lmu_system_run`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmuBackend {
    StateSpace = 0,
    RungeKutta1 = 1,
    RungeKutta2 = 2,
    RungeKutta4 = 4,
    Fft = 8,
}

/// A continuous Legendre system together with its ZOH discretization.
pub struct LmuSystem {
    continuous: ContinuousSystem,
    discrete: DiscreteSystem,
}

enum Weights {
    F32(Model<f32>),
    F64(Model<f64>),
}

/// A trained model loaded from a checkpoint.
pub struct LmuModel {
    weights: Weights,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> LmuStatus {
    match err {
        Error::Dimension { .. }
        | Error::Length(_)
        | Error::Config(_)
        | Error::Input(_)
        | Error::Unknown { .. }
        | Error::State(_) => LmuStatus::InvalidArgument,
        Error::Domain(_) => LmuStatus::Domain,
        Error::Numeric(_) | Error::Diverged(_) => LmuStatus::Numeric,
        Error::Io(_) => LmuStatus::Io,
        Error::Checkpoint(_) => LmuStatus::Checkpoint,
    }
}

struct Fail(LmuStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<CheckpointError> for Fail {
    fn from(e: CheckpointError) -> Self {
        Fail(LmuStatus::Checkpoint, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(LmuStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LmuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LmuStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            LmuStatus::Panic
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T) {
    if !out.is_null() {
        out.write(value);
    }
}

unsafe fn copy_out(src: &[f64], dst: *mut f64) {
    if !dst.is_null() {
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
}

/// The most recent error message on this thread, or NULL if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lmu_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lmu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds the order-`q` Legendre system with window `theta` (in steps) and
/// discretizes it.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn lmu_system_new(theta: f64, q: usize, out: *mut *mut LmuSystem) -> LmuStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let continuous = build_continuous(&LmuConfig::new(theta, q)?)?;
        let discrete = discretize_zoh(&continuous)?;
        out.write(Box::into_raw(Box::new(LmuSystem { continuous, discrete })));
        Ok(())
    })
}

/// Releases a system. NULL is ignored.
///
/// # Safety
/// `sys` must come from [`lmu_system_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lmu_system_free(sys: *mut LmuSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Memory order q, or 0 for NULL.
///
/// # Safety
/// `sys` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmu_system_order(sys: *const LmuSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.discrete.order())
}

/// Copies the discrete matrices: `a_bar` receives q·q values row-major,
/// `b_bar` q values and `spectral_radius` one. Any output may be NULL.
///
/// # Safety
/// `sys` must be a live handle; non-NULL outputs must have room for the
/// stated number of values.
#[no_mangle]
pub unsafe extern "C" fn lmu_system_discrete(
    sys: *const LmuSystem,
    a_bar: *mut f64,
    b_bar: *mut f64,
    spectral_radius: *mut f64,
) -> LmuStatus {
    guard(|| {
        let sys = sys.as_ref().ok_or_else(|| null("sys"))?;
        copy_out(sys.discrete.a_bar.data(), a_bar);
        copy_out(sys.discrete.b_bar.data(), b_bar);
        write(spectral_radius, sys.discrete.spectral_radius);
        Ok(())
    })
}

/// Impulse response of length `n` into `out`, q rows of n values.
///
/// # Safety
/// `sys` must be a live handle and `out` must hold q·n values.
#[no_mangle]
pub unsafe extern "C" fn lmu_system_impulse(sys: *const LmuSystem, n: usize, out: *mut f64) -> LmuStatus {
    guard(|| {
        let sys = sys.as_ref().ok_or_else(|| null("sys"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        copy_out(impulse_response(&sys.discrete, n)?.kernels.data(), out);
        Ok(())
    })
}

/// Runs the memory over an n×d input (row-major) and writes every state
/// into `out` as n·q·d values: entry `(t·q + i)·d + c` is state `i` of
/// channel `c` after step `t`.
///
/// # Safety
/// `sys` must be a live handle, `x` must hold n·d values and `out` n·q·d.
#[no_mangle]
pub unsafe extern "C" fn lmu_system_run(
    sys: *const LmuSystem,
    backend: i32,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> LmuStatus {
    guard(|| {
        let sys = sys.as_ref().ok_or_else(|| null("sys"))?;
        if x.is_null() {
            return Err(null("x"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(d).filter(|&k| k > 0).ok_or_else(|| {
            Fail(LmuStatus::InvalidArgument, format!("input shape {n}x{d} is empty or too large"))
        })?;
        let input = Tensor::new(&[n, d], std::slice::from_raw_parts(x, len).to_vec())?;
        let memory: MemorySequence = match backend {
            0 => run_state_space(&sys.discrete, &input)?,
            1 => run_rk(&sys.continuous, &input, RkOrder::One)?,
            2 => run_rk(&sys.continuous, &input, RkOrder::Two)?,
            4 => run_rk(&sys.continuous, &input, RkOrder::Four)?,
            8 => run_fft_conv(&impulse_response(&sys.discrete, n)?, &input)?,
            other => {
                return Err(Fail(LmuStatus::InvalidArgument, format!("unknown backend code {other}")))
            }
        };
        copy_out(memory.states.data(), out);
        Ok(())
    })
}

/// Analytic FLOPs per token for one component (`"ss"`, `"rk"`, `"fft"`,
/// `"transform"`, `"qkv"`, `"qk"`, `"mprime"`, `"m"`, `"ffn"`).
///
/// # Safety
/// `component` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lmu_predict_flops(
    component: *const c_char,
    n: usize,
    d: usize,
    d_prime: usize,
    q: usize,
    q_prime: usize,
    r: usize,
    out: *mut f64,
) -> LmuStatus {
    guard(|| {
        if component.is_null() {
            return Err(null("component"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(component)
            .to_str()
            .map_err(|_| Fail(LmuStatus::InvalidArgument, "component is not UTF-8".into()))?;
        let dims = Dims {
            n,
            d,
            d_prime,
            q,
            q_prime,
            r,
        };
        out.write(predict_flops(name, &dims)?);
        Ok(())
    })
}

/// Loads a checkpoint written by the trainer, in either precision.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lmu_model_load(path: *const c_char, out: *mut *mut LmuModel) -> LmuStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(LmuStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let bytes = std::fs::read(Path::new(path)).map_err(Error::from)?;
        let weights = match peek_header(&bytes)? {
            Precision::F32 => Weights::F32(Model::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?),
            Precision::F64 => Weights::F64(Model::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?),
        };
        out.write(Box::into_raw(Box::new(LmuModel { weights })));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`lmu_model_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lmu_model_free(model: *mut LmuModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size (257 for byte models), or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmu_model_vocab(model: *const LmuModel) -> usize {
    model.as_ref().map_or(0, |m| match &m.weights {
        Weights::F32(m) => m.config.vocab,
        Weights::F64(m) => m.config.vocab,
    })
}

/// Longest sequence the model accepts, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lmu_model_context(model: *const LmuModel) -> usize {
    model.as_ref().map_or(0, |m| match &m.weights {
        Weights::F32(m) => m.config.n,
        Weights::F64(m) => m.config.n,
    })
}

fn score<T: Real>(model: &Model<T>, bytes: &[u8]) -> Result<(f64, Vec<f64>), Fail> {
    let tokens: Vec<usize> = bytes.iter().map(|&b| b as usize).collect();
    let logits = model.forward(&tokens[..tokens.len() - 1])?;
    Ok(per_token_loss(&logits, &tokens[1..])?)
}

/// Next-byte loss in nats over `len` bytes: `len − 1` predictions, so
/// 2 ≤ len ≤ context + 1. `per_position` may be NULL or hold len − 1 values.
///
/// # Safety
/// `model` must be a live handle, `bytes` must hold `len` bytes and the
/// outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn lmu_model_loss(
    model: *const LmuModel,
    bytes: *const u8,
    len: usize,
    mean: *mut f64,
    per_position: *mut f64,
) -> LmuStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        let context = lmu_model_context(model);
        if !(2..=context + 1).contains(&len) {
            return Err(Fail(
                LmuStatus::InvalidArgument,
                format!("length {len} outside 2..={}", context + 1),
            ));
        }
        if VOCAB != lmu_model_vocab(model) {
            return Err(Fail(LmuStatus::InvalidArgument, "model is not a byte-level model".into()));
        }
        let bytes = std::slice::from_raw_parts(bytes, len);
        let (m, per) = match &model.weights {
            Weights::F32(w) => score(w, bytes)?,
            Weights::F64(w) => score(w, bytes)?,
        };
        write(mean, m);
        copy_out(&per, per_position);
        Ok(())
    })
}
