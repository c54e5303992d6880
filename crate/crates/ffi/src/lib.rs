//! C ABI over the statrom pipeline.
//!
//! Every function returns a [`StatromStatus`]; on failure the message is
//! available from [`statrom_last_error`] on the same thread. Objects are
//! opaque handles returned through out-pointers and released with the
//! matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use statrom::cli::{self, Command, ExperimentConfig, RawConfig};
use statrom::pipeline::{self, Method, OfflineArtifacts, OnlineOptions, RunResult, SyntheticData};
use statrom::stochastic::Channel;
use statrom::Error;

/// Outcome of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatromStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidInput = 4,
    Numerical = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatromMethod {
    FullOrder = 0,
    Classical = 1,
    StatRom = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatromChannel {
    Real = 0,
    Imag = 1,
}

/// Experiment settings, editable key by key.
pub struct StatromConfig {
    raw: RawConfig,
}

/// Offline reduced bases for one configuration.
pub struct StatromArtifacts {
    inner: OfflineArtifacts,
}

/// Sensor readings and the reference field they were drawn from.
pub struct StatromDataset {
    inner: SyntheticData,
}

/// Posterior of every method at the dataset frequency.
pub struct StatromResult {
    inner: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = clean);
}

/// Internal failure carrying its status code.
struct Failure(StatromStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => StatromStatus::Config,
            Error::Io(_) => StatromStatus::Io,
            Error::SingularPivot { .. }
            | Error::NotSymmetric { .. }
            | Error::NotPositiveDefinite(_)
            | Error::Resonance { .. }
            | Error::SampleFailed { .. }
            | Error::NonPositiveKappa { .. } => StatromStatus::Numerical,
            _ => StatromStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure(StatromStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> FfiResult<()>>(body: F) -> StatromStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => StatromStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            StatromStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(StatromStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slot<'a, T>(p: *mut *mut T) -> FfiResult<&'a mut *mut T> {
    let slot = p.as_mut().ok_or_else(|| null("output pointer"))?;
    *slot = ptr::null_mut();
    Ok(slot)
}

fn build(cfg: &StatromConfig) -> FfiResult<ExperimentConfig> {
    Ok(ExperimentConfig::from_raw(&cfg.raw)?)
}

fn method(m: StatromMethod) -> Method {
    match m {
        StatromMethod::FullOrder => Method::FullOrder,
        StatromMethod::Classical => Method::Classical,
        StatromMethod::StatRom => Method::StatRom,
    }
}

fn channel(c: StatromChannel) -> Channel {
    match c {
        StatromChannel::Real => Channel::Re,
        StatromChannel::Imag => Channel::Im,
    }
}

/// Copies `values` into `out[0..len)`; `written` receives the full length
/// even when the buffer is too small.
unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize, written: *mut usize) -> FfiResult<()> {
    if let Some(w) = written.as_mut() {
        *w = values.len();
    }
    if len < values.len() {
        return Err(Failure(
            StatromStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn statrom_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses configuration text (`key = value` lines with optional
/// `[section]` headers).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn statrom_config_parse(text: *const c_char, out: *mut *mut StatromConfig) -> StatromStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let raw = RawConfig::parse(str_arg(text, "text")?)?;
        let cfg = StatromConfig { raw };
        build(&cfg)?;
        *slot = Box::into_raw(Box::new(cfg));
        Ok(())
    })
}

/// Sets one key, validating the result; on failure the config is unchanged.
///
/// # Safety
/// `cfg` must come from [`statrom_config_parse`]; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn statrom_config_set(cfg: *mut StatromConfig, key: *const c_char, value: *const c_char) -> StatromStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("config"))?;
        let mut next = cfg.raw.clone();
        next.set(str_arg(key, "key")?, str_arg(value, "value")?);
        ExperimentConfig::from_raw(&next)?;
        cfg.raw = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from [`statrom_config_parse`] or be null.
#[no_mangle]
pub unsafe extern "C" fn statrom_config_free(cfg: *mut StatromConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a harness command (`converge-rom`, `sweep`, ...) writing into the
/// configured output directory, or `out_dir` when non-null.
///
/// # Safety
/// `cfg` must be a live handle; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn statrom_run_command(cfg: *const StatromConfig, command: *const c_char, out_dir: *const c_char) -> StatromStatus {
    guard(|| {
        let mut exp = build(handle(cfg, "config")?)?;
        let name = str_arg(command, "command")?;
        let cmd = Command::parse(name).ok_or_else(|| Failure(StatromStatus::InvalidInput, format!("unknown command `{name}`")))?;
        if !out_dir.is_null() {
            exp.out_dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        }
        cli::run(cmd, &exp)?;
        Ok(())
    })
}

/// Builds reduced bases for every QMC sample.
///
/// # Safety
/// `cfg` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn statrom_offline(cfg: *const StatromConfig, out: *mut *mut StatromArtifacts) -> StatromStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let exp = build(handle(cfg, "config")?)?;
        let inner = pipeline::offline(&exp.problem)?;
        *slot = Box::into_raw(Box::new(StatromArtifacts { inner }));
        Ok(())
    })
}

/// Number of nodes of the prior mesh.
///
/// # Safety
/// `art` must be a live handle; `n_nodes` writable.
#[no_mangle]
pub unsafe extern "C" fn statrom_artifacts_nodes(art: *const StatromArtifacts, n_nodes: *mut usize) -> StatromStatus {
    guard(|| {
        let art = handle(art, "artifacts")?;
        *n_nodes.as_mut().ok_or_else(|| null("n_nodes"))? = art.inner.mesh().n_nodes();
        Ok(())
    })
}

/// # Safety
/// `art` must come from [`statrom_offline`] or be null.
#[no_mangle]
pub unsafe extern "C" fn statrom_artifacts_free(art: *mut StatromArtifacts) {
    if !art.is_null() {
        drop(Box::from_raw(art));
    }
}

/// Synthesizes sensor readings at `frequency_hz`.
///
/// # Safety
/// `cfg` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn statrom_generate_data(cfg: *const StatromConfig, frequency_hz: f64, out: *mut *mut StatromDataset) -> StatromStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let exp = build(handle(cfg, "config")?)?;
        if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
            return Err(Failure(StatromStatus::InvalidInput, format!("frequency must be positive, got {frequency_hz}")));
        }
        let inner = pipeline::generate_data(&exp.problem, 2.0 * std::f64::consts::PI * frequency_hz)?;
        *slot = Box::into_raw(Box::new(StatromDataset { inner }));
        Ok(())
    })
}

/// Reading matrix dimensions.
///
/// # Safety
/// `ds` must be a live handle; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn statrom_dataset_shape(ds: *const StatromDataset, n_sensors: *mut usize, n_obs: *mut usize) -> StatromStatus {
    guard(|| {
        let r = &handle(ds, "dataset")?.inner.data.readings;
        *n_sensors.as_mut().ok_or_else(|| null("n_sensors"))? = r.nrows();
        *n_obs.as_mut().ok_or_else(|| null("n_obs"))? = r.ncols();
        Ok(())
    })
}

/// One channel of the readings, row-major (sensor by observation).
///
/// # Safety
/// `ds` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn statrom_dataset_readings(
    ds: *const StatromDataset,
    ch: StatromChannel,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> StatromStatus {
    guard(|| {
        let r = &handle(ds, "dataset")?.inner.data.readings;
        let ch = channel(ch);
        let values: Vec<f64> = r.row_iter().flat_map(|row| row.iter().map(|z| ch.part(*z)).collect::<Vec<_>>()).collect();
        copy_out(&values, out, len, written)
    })
}

/// # Safety
/// `ds` must come from [`statrom_generate_data`] or be null.
#[no_mangle]
pub unsafe extern "C" fn statrom_dataset_free(ds: *mut StatromDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Conditions every method on the dataset at its own frequency.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn statrom_online(
    art: *const StatromArtifacts,
    ds: *const StatromDataset,
    full_order: bool,
    out: *mut *mut StatromResult,
) -> StatromStatus {
    guard(|| {
        let slot = out_slot(out)?;
        let art = &handle(art, "artifacts")?.inner;
        let ds = &handle(ds, "dataset")?.inner;
        let inner = pipeline::online(art, ds.reference.omega, ds, OnlineOptions { full_order })?;
        *slot = Box::into_raw(Box::new(StatromResult { inner }));
        Ok(())
    })
}

fn channel_result<'a>(res: &'a RunResult, m: StatromMethod, ch: StatromChannel) -> FfiResult<&'a pipeline::ChannelResult> {
    let m = method(m);
    res.method(m)
        .ok_or_else(|| Failure(StatromStatus::InvalidInput, format!("method {} was not run", m.as_str())))?
        .channel(channel(ch))
        .ok_or_else(|| Failure(StatromStatus::InvalidInput, "channel carries no data for this problem".into()))
}

/// Relative H¹ posterior error and learned model-mismatch scale.
///
/// # Safety
/// `res` must be a live handle; outputs writable or null.
#[no_mangle]
pub unsafe extern "C" fn statrom_result_error(
    res: *const StatromResult,
    m: StatromMethod,
    ch: StatromChannel,
    relative_error: *mut f64,
    sigma_d: *mut f64,
) -> StatromStatus {
    guard(|| {
        let c = channel_result(&handle(res, "result")?.inner, m, ch)?;
        if let Some(e) = relative_error.as_mut() {
            *e = c.relative_error;
        }
        if let Some(s) = sigma_d.as_mut() {
            *s = c.hp.sigma_d;
        }
        Ok(())
    })
}

/// Predictive nodal field on the prior mesh.
///
/// # Safety
/// `res` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn statrom_result_field(
    res: *const StatromResult,
    m: StatromMethod,
    ch: StatromChannel,
    out: *mut f64,
    len: usize,
    written: *mut usize,
) -> StatromStatus {
    guard(|| {
        let c = channel_result(&handle(res, "result")?.inner, m, ch)?;
        copy_out(c.field.as_slice(), out, len, written)
    })
}

/// # Safety
/// `res` must come from [`statrom_online`] or be null.
#[no_mangle]
pub unsafe extern "C" fn statrom_result_free(res: *mut StatromResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
