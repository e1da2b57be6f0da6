//! C ABI over `nbsc-core`.
//!
//! Ensembles are opaque handles created with [`nbsc_ensemble_new`] and
//! released with [`nbsc_ensemble_free`]. Every fallible call returns an
//! [`NbscStatus`]; on failure, [`nbsc_last_error`] copies a message for the
//! calling thread. Output pointers are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nbsc_core::coupled::bp_threshold_coupled;
use nbsc_core::potential::{construct_d, DOptions};
use nbsc_core::{CouplingMatrix, DeConfig, Ensemble, EnsembleParams, Error, Potential};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NbscStatus {
    Ok = 0,
    InvalidArgument = 1,
    UnsupportedScale = 2,
    ContractViolation = 3,
    ConstructionFailed = 4,
    UndefinedBound = 5,
    Timeout = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// DE tolerances, mirroring the defaults of the Rust API.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NbscConfig {
    pub max_iters: usize,
    pub fp_tol: f64,
    pub zero_tol: f64,
    pub bisect_tol: f64,
}

impl From<NbscConfig> for DeConfig {
    fn from(c: NbscConfig) -> Self {
        DeConfig {
            max_iters: c.max_iters,
            fp_tol: c.fp_tol,
            zero_tol: c.zero_tol,
            bisect_tol: c.bisect_tol,
        }
    }
}

/// Opaque `(dv, dc, m)` ensemble handle.
pub struct NbscEnsemble {
    ens: Ensemble,
    potential: Option<Potential>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> NbscStatus {
    match err {
        Error::Argument(_) => NbscStatus::InvalidArgument,
        Error::UnsupportedScale { .. } => NbscStatus::UnsupportedScale,
        Error::Contract(_) => NbscStatus::ContractViolation,
        Error::Construction { .. } => NbscStatus::ConstructionFailed,
        Error::UndefinedBound { .. } => NbscStatus::UndefinedBound,
        Error::Timeout => NbscStatus::Timeout,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => NbscStatus::Internal,
    }
}

enum Failure {
    Core(Error),
    Status(NbscStatus, &'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> NbscStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NbscStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            NbscStatus::Internal
        }
    }
}

unsafe fn handle<'a>(ptr: *mut NbscEnsemble) -> Result<&'a mut NbscEnsemble, Failure> {
    ptr.as_mut()
        .ok_or(Failure::Status(NbscStatus::NullPointer, "null ensemble handle"))
}

unsafe fn config(ptr: *const NbscConfig) -> DeConfig {
    ptr.as_ref().map(|c| (*c).into()).unwrap_or_default()
}

fn non_null<T>(ptr: *mut T, what: &'static str) -> Result<(), Failure> {
    if ptr.is_null() {
        Err(Failure::Status(NbscStatus::NullPointer, what))
    } else {
        Ok(())
    }
}

/// Default tolerances.
#[no_mangle]
pub extern "C" fn nbsc_config_default() -> NbscConfig {
    let d = DeConfig::default();
    NbscConfig {
        max_iters: d.max_iters,
        fp_tol: d.fp_tol,
        zero_tol: d.zero_tol,
        bisect_tol: d.bisect_tol,
    }
}

/// Creates an ensemble handle. `*out` receives the handle on success.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn nbsc_ensemble_new(dv: usize, dc: usize, m: usize, out: *mut *mut NbscEnsemble) -> NbscStatus {
    guard(|| {
        non_null(out, "null output pointer")?;
        let ens = Ensemble::new(EnsembleParams::new(dv, dc, m)?)?;
        *out = Box::into_raw(Box::new(NbscEnsemble { ens, potential: None }));
        Ok(())
    })
}

/// Releases a handle. Passing null is a no-op.
///
/// # Safety
/// `ens` must be null or a handle from [`nbsc_ensemble_new`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn nbsc_ensemble_free(ens: *mut NbscEnsemble) {
    if !ens.is_null() {
        drop(Box::from_raw(ens));
    }
}

/// Field extension degree `m` of the handle, or 0 for null.
///
/// # Safety
/// `ens` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nbsc_ensemble_m(ens: *const NbscEnsemble) -> usize {
    ens.as_ref().map_or(0, |e| e.ens.m())
}

/// Runs uncoupled DE from the channel initialization. `tail` receives the
/// `m` CCDF entries of the final state; `cfg` may be null for defaults.
///
/// # Safety
/// `ens` must be a live handle, `tail` must point to `tail_len` writable
/// doubles, and `iterations` / `decoded` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn nbsc_de_fixed_point(
    ens: *mut NbscEnsemble,
    eps: f64,
    cfg: *const NbscConfig,
    tail: *mut f64,
    tail_len: usize,
    iterations: *mut usize,
    decoded: *mut bool,
) -> NbscStatus {
    guard(|| {
        let h = handle(ens)?;
        non_null(tail, "null tail buffer")?;
        if tail_len < h.ens.m() {
            return Err(Failure::Status(NbscStatus::BufferTooSmall, "tail buffer shorter than m"));
        }
        let out = h.ens.de_fixed_point(eps, &config(cfg))?;
        std::slice::from_raw_parts_mut(tail, h.ens.m()).copy_from_slice(out.state.tail());
        if !iterations.is_null() {
            *iterations = out.iterations;
        }
        if !decoded.is_null() {
            *decoded = out.decoded;
        }
        Ok(())
    })
}

/// Uncoupled BP threshold.
///
/// # Safety
/// `ens` must be a live handle; `out` must be writable; `cfg` may be null.
#[no_mangle]
pub unsafe extern "C" fn nbsc_bp_threshold(ens: *mut NbscEnsemble, cfg: *const NbscConfig, out: *mut f64) -> NbscStatus {
    guard(|| {
        let h = handle(ens)?;
        non_null(out, "null output pointer")?;
        *out = h.ens.bp_threshold(&config(cfg))?;
        Ok(())
    })
}

/// Coupled BP threshold for chain length `l` and coupling width `w`. A
/// positive `timeout_secs` bounds the run and yields `Timeout` when hit.
///
/// # Safety
/// `ens` must be a live handle; `out` must be writable; `cfg` may be null.
#[no_mangle]
pub unsafe extern "C" fn nbsc_bp_threshold_coupled(
    ens: *mut NbscEnsemble,
    l: usize,
    w: usize,
    cfg: *const NbscConfig,
    timeout_secs: f64,
    out: *mut f64,
) -> NbscStatus {
    guard(|| {
        let h = handle(ens)?;
        non_null(out, "null output pointer")?;
        let coupling = CouplingMatrix::new(l, w)?;
        let deadline = if timeout_secs > 0.0 {
            let d = Duration::try_from_secs_f64(timeout_secs)
                .map_err(|_| Failure::Status(NbscStatus::InvalidArgument, "invalid timeout"))?;
            Some(Instant::now() + d)
        } else {
            None
        };
        *out = bp_threshold_coupled(&h.ens, &coupling, &config(cfg), deadline)?;
        Ok(())
    })
}

fn potential_of(h: &mut NbscEnsemble) -> Result<&Potential, Failure> {
    if h.potential.is_none() {
        let c = construct_d(&h.ens, &DOptions::default())?;
        h.potential = Some(Potential::new(h.ens.clone(), c.d)?);
    }
    Ok(h.potential.as_ref().expect("potential just built"))
}

/// Potential threshold and the uncoupled BP threshold it is bracketed by.
/// Builds and caches the matrix `D` on first use.
///
/// # Safety
/// `ens` must be a live handle; both outputs must be writable; `cfg` may be
/// null.
#[no_mangle]
pub unsafe extern "C" fn nbsc_potential_threshold(
    ens: *mut NbscEnsemble,
    cfg: *const NbscConfig,
    eps_star: *mut f64,
    eps_bp: *mut f64,
) -> NbscStatus {
    guard(|| {
        let h = handle(ens)?;
        non_null(eps_star, "null output pointer")?;
        non_null(eps_bp, "null output pointer")?;
        let th = potential_of(h)?.threshold(&config(cfg))?;
        *eps_star = th.eps_star;
        *eps_bp = th.eps_bp;
        Ok(())
    })
}

/// Potential `U(x; eps)` at a tail vector of length `m`.
///
/// # Safety
/// `ens` must be a live handle; `x` must point to `len` readable doubles;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nbsc_potential(
    ens: *mut NbscEnsemble,
    x: *const f64,
    len: usize,
    eps: f64,
    out: *mut f64,
) -> NbscStatus {
    guard(|| {
        let h = handle(ens)?;
        non_null(out, "null output pointer")?;
        if x.is_null() {
            return Err(Failure::Status(NbscStatus::NullPointer, "null state"));
        }
        if len != h.ens.m() {
            return Err(Failure::Status(NbscStatus::InvalidArgument, "state length must equal m"));
        }
        let x = std::slice::from_raw_parts(x, len);
        *out = potential_of(h)?.potential(x, eps);
        Ok(())
    })
}

/// Copies the `m`-by-`m` matrix `D` in row-major order.
///
/// # Safety
/// `ens` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nbsc_potential_d(ens: *mut NbscEnsemble, out: *mut f64, len: usize) -> NbscStatus {
    guard(|| {
        let h = handle(ens)?;
        non_null(out, "null output buffer")?;
        let m = h.ens.m();
        if len < m * m {
            return Err(Failure::Status(NbscStatus::BufferTooSmall, "buffer shorter than m*m"));
        }
        let d = potential_of(h)?.d().entries().iter().flatten().copied().collect::<Vec<_>>();
        std::slice::from_raw_parts_mut(out, m * m).copy_from_slice(&d);
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len` bytes. Returns the full message length in bytes
/// (excluding the terminator).
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn nbsc_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn nbsc_status_name(status: NbscStatus) -> *const c_char {
    let s: &'static CStr = match status {
        NbscStatus::Ok => c"ok",
        NbscStatus::InvalidArgument => c"invalid argument",
        NbscStatus::UnsupportedScale => c"unsupported scale",
        NbscStatus::ContractViolation => c"contract violation",
        NbscStatus::ConstructionFailed => c"construction failed",
        NbscStatus::UndefinedBound => c"undefined bound",
        NbscStatus::Timeout => c"timeout",
        NbscStatus::NullPointer => c"null pointer",
        NbscStatus::BufferTooSmall => c"buffer too small",
        NbscStatus::Internal => c"internal error",
    };
    s.as_ptr()
}
