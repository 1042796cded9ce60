//! C ABI over mott-core: environments and truncated networks behind opaque
//! handles, status codes for every call, and a per-thread last-error message.
//!
//! Handles returned through `out` pointers are owned by the caller and must be
//! released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use mott_core::env::{generate_environment, Environment, ModelParams};
use mott_core::network::{build_truncated_network, default_cutoff, TruncatedNetwork};
use mott_core::resistance::effective_resistance;
use mott_core::rng::RngStream;
use mott_core::MottError;

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MottStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParam = 2,
    Precondition = 3,
    Domain = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

/// Model parameters. A `kappa` outside (0, 1), e.g. 0, means no holding times.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MottParams {
    pub rho: f64,
    pub beta: f64,
    pub lambda: f64,
    pub kappa: f64,
}

/// Opaque environment handle.
pub struct MottEnvironment {
    inner: Arc<Environment>,
}

/// Opaque network handle.
pub struct MottNetwork {
    inner: TruncatedNetwork,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &MottError) -> MottStatus {
    match e {
        MottError::Parameter(_) | MottError::Config(_) => MottStatus::InvalidParam,
        MottError::Precondition { .. } | MottError::Provenance(_) | MottError::Grid { .. } => MottStatus::Precondition,
        MottError::Domain(_) | MottError::Disconnected => MottStatus::Domain,
        MottError::Numerical(_) => MottStatus::Numerical,
        MottError::Io(_) | MottError::Json(_) => MottStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), MottError>) -> MottStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MottStatus::Ok,
        Ok(Err(e)) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            MottStatus::Panic
        }
    }
}

macro_rules! check_null {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            set_error(format!("null pointer: {}", stringify!($p)));
            return MottStatus::NullPointer;
        })+
    };
}

fn to_params(p: &MottParams) -> ModelParams {
    let mut m = ModelParams::new(p.rho).with_beta(p.beta).with_lambda(p.lambda);
    if p.kappa > 0.0 && p.kappa < 1.0 {
        m = m.with_kappa(p.kappa);
    }
    m
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, MottError> {
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| MottError::Config("path is not valid UTF-8".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mott_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns its full length.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn mott_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map(|c| c.as_bytes()).unwrap_or(b"");
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Generates an environment on labels -half_width..=half_width.
///
/// # Safety
/// `params` must point to a valid struct and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn mott_environment_generate(
    params: *const MottParams,
    half_width: usize,
    seed: u64,
    stream_id: u64,
    out: *mut *mut MottEnvironment,
) -> MottStatus {
    check_null!(params, out);
    let p = to_params(&*params);
    guard(|| {
        let env = generate_environment(&p, half_width, RngStream::new(seed, stream_id))?;
        *out = Box::into_raw(Box::new(MottEnvironment { inner: Arc::new(env) }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_environment_load(path: *const c_char, out: *mut *mut MottEnvironment) -> MottStatus {
    check_null!(path, out);
    guard(|| {
        let env = Environment::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(MottEnvironment { inner: Arc::new(env) }));
        Ok(())
    })
}

/// # Safety
/// `env` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mott_environment_save(env: *const MottEnvironment, path: *const c_char) -> MottStatus {
    check_null!(env, path);
    guard(|| (*env).inner.save(path_arg(path)?))
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mott_environment_free(env: *mut MottEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_environment_half_width(env: *const MottEnvironment, out: *mut usize) -> MottStatus {
    check_null!(env, out);
    *out = (*env).inner.half_width();
    MottStatus::Ok
}

/// Position omega_i of site i.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_environment_omega(env: *const MottEnvironment, i: i64, out: *mut f64) -> MottStatus {
    check_null!(env, out);
    let e = &(*env).inner;
    if !e.contains(i) {
        set_error(format!("site {i} outside the window of half-width {}", e.half_width()));
        return MottStatus::Domain;
    }
    *out = e.omega(i);
    MottStatus::Ok
}

/// Builds the truncated network on [-Kn, Kn]. `cutoff = 0` picks the default.
/// The network keeps its own reference to the environment.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_network_build(
    env: *const MottEnvironment,
    k: usize,
    n: usize,
    cutoff: usize,
    out: *mut *mut MottNetwork,
) -> MottStatus {
    check_null!(env, out);
    let e = Arc::clone(&(*env).inner);
    guard(|| {
        let c = if cutoff == 0 { default_cutoff(e.params().rho, n) } else { cutoff };
        let net = build_truncated_network(e, k, n, c)?;
        *out = Box::into_raw(Box::new(MottNetwork { inner: net }));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mott_network_free(net: *mut MottNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of nodes 2Kn + 1.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_network_node_count(net: *const MottNetwork, out: *mut usize) -> MottStatus {
    check_null!(net, out);
    *out = (*net).inner.graph().nodes();
    MottStatus::Ok
}

/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_network_conductance(net: *const MottNetwork, i: i64, j: i64, out: *mut f64) -> MottStatus {
    check_null!(net, out);
    guard(|| {
        *out = (*net).inner.conductance(i, j)?;
        Ok(())
    })
}

/// Effective resistance between labels i and j.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_network_effective_resistance(net: *const MottNetwork, i: i64, j: i64, out: *mut f64) -> MottStatus {
    check_null!(net, out);
    guard(|| {
        *out = if i == j { 0.0 } else { effective_resistance(&(*net).inner, &[i], &[j])?.resistance };
        Ok(())
    })
}

/// Invariant mass of (floor(an), floor(bn)] divided by n.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mott_network_measure_interval(net: *const MottNetwork, a: f64, b: f64, out: *mut f64) -> MottStatus {
    check_null!(net, out);
    guard(|| {
        *out = (*net).inner.measure_interval(a, b)?.normalized;
        Ok(())
    })
}
