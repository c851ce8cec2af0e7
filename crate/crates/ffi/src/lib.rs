//! C ABI over the `irsbt` library.
//!
//! Handles are opaque pointers created by `*_new`/`*_load`/`*_from_*`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`IrsbtStatus`]; on failure the message is available through
//! [`irsbt_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use irsbt::estimator::{estimate_path, objective_g, GridSpec};
use irsbt::experiments::figures::run_figure;
use irsbt::experiments::{run_trial, trial_seed, ExperimentConfig};
use irsbt::geometry::{cos_add, cos_sub};
use irsbt::sounding::SoundingSession;
use irsbt::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsbtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    DegenerateGeometry = 4,
    IllConditioned = 5,
    InsufficientAnchors = 6,
    Numerical = 7,
    Config = 8,
    Parse = 9,
    Io = 10,
    Utf8 = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrsbtComplex {
    pub re: f64,
    pub im: f64,
}

/// One path estimate. `delta` is the physical path gain.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrsbtPathEstimate {
    pub delta: IrsbtComplex,
    pub theta: f64,
    pub phi: f64,
    pub residual_ratio: f64,
    pub objective: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Recorded sounding session of one link.
pub struct IrsbtSession {
    inner: SoundingSession,
}

/// Experiment configuration.
pub struct IrsbtExperiment {
    inner: ExperimentConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IrsbtStatus {
    match e {
        Error::InvalidArgument(_) | Error::UnknownIrs(_) | Error::RejectionBudgetExhausted { .. } => {
            IrsbtStatus::InvalidArgument
        }
        Error::DimensionMismatch { .. } => IrsbtStatus::DimensionMismatch,
        Error::DegenerateGeometry(_) => IrsbtStatus::DegenerateGeometry,
        Error::IllConditioned { .. } => IrsbtStatus::IllConditioned,
        Error::InsufficientAnchors { .. } => IrsbtStatus::InsufficientAnchors,
        Error::ZeroProjection | Error::ZeroMeasurement | Error::Unidentifiable => IrsbtStatus::Numerical,
        Error::Config(_) => IrsbtStatus::Config,
        Error::Parse(_) => IrsbtStatus::Parse,
        Error::Io(_) => IrsbtStatus::Io,
    }
}

fn fail(status: IrsbtStatus, msg: impl Into<String>) -> IrsbtStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, mapping library errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), IrsbtStatus>) -> IrsbtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IrsbtStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(IrsbtStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> IrsbtStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, IrsbtStatus> {
    str_arg(p).map(PathBuf::from)
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, IrsbtStatus> {
    if p.is_null() {
        return Err(fail(IrsbtStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(IrsbtStatus::Utf8, "string argument is not UTF-8"))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, IrsbtStatus> {
    p.as_mut().ok_or_else(|| fail(IrsbtStatus::NullPointer, "null output pointer"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, IrsbtStatus> {
    p.as_ref().ok_or_else(|| fail(IrsbtStatus::NullPointer, "null handle"))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn irsbt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn irsbt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn irsbt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Wrapped cosine-angle difference.
#[no_mangle]
pub extern "C" fn irsbt_cos_sub(a: f64, b: f64) -> f64 {
    cos_sub(a, b).value()
}

/// Wrapped cosine-angle sum.
#[no_mangle]
pub extern "C" fn irsbt_cos_add(a: f64, b: f64) -> f64 {
    cos_add(a, b).value()
}

/// Loads a session dump written by the library.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irsbt_session_load_csv(path: *const c_char, out: *mut *mut IrsbtSession) -> IrsbtStatus {
    guard(|| {
        let out = out_arg(out)?;
        let path = path_arg(path)?;
        let f = File::open(&path).map_err(|e| lib(e.into()))?;
        let inner = SoundingSession::read_csv(BufReader::new(f)).map_err(lib)?;
        *out = Box::into_raw(Box::new(IrsbtSession { inner }));
        Ok(())
    })
}

/// Writes a session dump.
///
/// # Safety
/// `session` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn irsbt_session_save_csv(session: *const IrsbtSession, path: *const c_char) -> IrsbtStatus {
    guard(|| {
        let s = handle(session)?;
        let path = path_arg(path)?;
        let f = File::create(&path).map_err(|e| lib(e.into()))?;
        s.inner.write_csv(std::io::BufWriter::new(f)).map_err(lib)
    })
}

/// Builds a session from row-major beam matrices: `tx` holds `rows × n_tx`
/// entries, `rx` holds `rows × n_rx` and `y` holds `rows`.
///
/// # Safety
/// The arrays must hold the stated number of elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn irsbt_session_new(
    link: usize,
    n_tx: usize,
    n_rx: usize,
    rows: usize,
    tx: *const IrsbtComplex,
    rx: *const IrsbtComplex,
    y: *const IrsbtComplex,
    gain_scale: f64,
    noise_variance: f64,
    out: *mut *mut IrsbtSession,
) -> IrsbtStatus {
    guard(|| {
        let out = out_arg(out)?;
        if tx.is_null() || rx.is_null() || y.is_null() {
            return Err(fail(IrsbtStatus::NullPointer, "null array argument"));
        }
        let c = |v: &IrsbtComplex| irsbt::Complex64::new(v.re, v.im);
        let tx = std::slice::from_raw_parts(tx, rows * n_tx);
        let rx = std::slice::from_raw_parts(rx, rows * n_rx);
        let y = std::slice::from_raw_parts(y, rows);
        let tx_rows = (0..rows).map(|n| tx[n * n_tx..(n + 1) * n_tx].iter().map(c).collect()).collect();
        let rx_rows = (0..rows).map(|n| rx[n * n_rx..(n + 1) * n_rx].iter().map(c).collect()).collect();
        let sensing = irsbt::sounding::SensingMatrix::new(tx_rows, rx_rows).map_err(lib)?;
        let inner = SoundingSession::new(link, sensing, y.iter().map(c).collect(), gain_scale, noise_variance)
            .map_err(lib)?;
        *out = Box::into_raw(Box::new(IrsbtSession { inner }));
        Ok(())
    })
}

/// Number of training slots in the session, 0 for NULL.
///
/// # Safety
/// `session` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irsbt_session_rows(session: *const IrsbtSession) -> usize {
    session.as_ref().map_or(0, |s| s.inner.sensing.rows())
}

/// # Safety
/// `session` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsbt_session_free(session: *mut IrsbtSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Estimates the dominant path. `grid` of 0 derives the coarse grid from
/// the array sizes.
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irsbt_estimate_path(
    session: *const IrsbtSession,
    grid: usize,
    out: *mut IrsbtPathEstimate,
) -> IrsbtStatus {
    guard(|| {
        let s = &handle(session)?.inner;
        let out = out_arg(out)?;
        let spec = if grid == 0 {
            GridSpec::for_arrays(s.sensing.n_tx(), s.sensing.n_rx())
        } else {
            GridSpec { z_theta: grid, z_phi: grid, peaks: 5 }
        };
        spec.validate().map_err(lib)?;
        let e = estimate_path(s, &spec, &Default::default()).map_err(lib)?;
        *out = IrsbtPathEstimate {
            delta: IrsbtComplex { re: e.delta.re, im: e.delta.im },
            theta: e.theta.value(),
            phi: e.phi.value(),
            residual_ratio: e.residual_ratio,
            objective: e.objective,
            iterations: e.iterations as u32,
            converged: e.converged,
        };
        Ok(())
    })
}

/// Matched-filter objective of the session at `(theta, phi)`.
///
/// # Safety
/// `session` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irsbt_objective(session: *const IrsbtSession, theta: f64, phi: f64, out: *mut f64) -> IrsbtStatus {
    guard(|| {
        let s = &handle(session)?.inner;
        let out = out_arg(out)?;
        *out = objective_g(theta, phi, &s.sensing, &s.y).map_err(lib)?;
        Ok(())
    })
}

/// Default experiment configuration.
#[no_mangle]
pub extern "C" fn irsbt_experiment_new() -> *mut IrsbtExperiment {
    Box::into_raw(Box::new(IrsbtExperiment { inner: ExperimentConfig::default() }))
}

/// Loads a TOML configuration; missing keys take defaults.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irsbt_experiment_from_file(path: *const c_char, out: *mut *mut IrsbtExperiment) -> IrsbtStatus {
    guard(|| {
        let out = out_arg(out)?;
        let inner = ExperimentConfig::from_file(&path_arg(path)?).map_err(lib)?;
        inner.validate().map_err(lib)?;
        *out = Box::into_raw(Box::new(IrsbtExperiment { inner }));
        Ok(())
    })
}

/// Overrides the base seed and the trial count of every figure.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn irsbt_experiment_configure(exp: *mut IrsbtExperiment, seed: u64, trials: usize) -> IrsbtStatus {
    guard(|| {
        let cfg = &mut exp.as_mut().ok_or_else(|| fail(IrsbtStatus::NullPointer, "null handle"))?.inner;
        if trials == 0 {
            return Err(fail(IrsbtStatus::InvalidArgument, "trials must be positive"));
        }
        cfg.run.seed = seed;
        cfg.run.trials = trials;
        for f in [&mut cfg.fig5.trials, &mut cfg.fig7.trials, &mut cfg.fig8.trials, &mut cfg.fig9.trials, &mut cfg.fig10.trials] {
            *f = Some(trials);
        }
        Ok(())
    })
}

/// Runs one full trial and returns its record as JSON. Release the string
/// with [`irsbt_string_free`].
///
/// # Safety
/// `exp` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn irsbt_experiment_run_trial(
    exp: *const IrsbtExperiment,
    index: usize,
    tx_power_dbm: f64,
    training_length: usize,
    out_json: *mut *mut c_char,
) -> IrsbtStatus {
    guard(|| {
        let cfg = &handle(exp)?.inner;
        let out = out_arg(out_json)?;
        let n = if training_length == 0 { cfg.sounding.training_length } else { training_length };
        let rec = run_trial(cfg, index, trial_seed(cfg.run.seed, index), tx_power_dbm, n).map_err(lib)?;
        *out = owned_string(rec.to_json());
        Ok(())
    })
}

/// Runs a named figure (`fig5`..`fig10`, `contour`) and writes its CSV
/// tables into `out_dir`.
///
/// # Safety
/// `exp` must be a live handle; `name` and `out_dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn irsbt_experiment_run_figure(
    exp: *const IrsbtExperiment,
    name: *const c_char,
    out_dir: *const c_char,
) -> IrsbtStatus {
    guard(|| {
        let cfg = &handle(exp)?.inner;
        let name = str_arg(name)?;
        let dir = path_arg(out_dir)?;
        for (stem, table) in run_figure(name, cfg).map_err(lib)? {
            table.write_to(&dir.join(format!("{stem}.csv"))).map_err(lib)?;
        }
        Ok(())
    })
}

/// # Safety
/// `exp` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsbt_experiment_free(exp: *mut IrsbtExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}
