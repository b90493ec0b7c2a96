//! C ABI over `smm-core`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_run`
//! functions and released by the matching `*_free`. Every fallible call
//! returns an [`SmmStatus`]; on failure the message is available from
//! [`smm_last_error_message`] on the same thread. Panics are caught and
//! reported as [`SmmStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use smm_core::cli::config::DtSetting;
use smm_core::cli::RunConfig;
use smm_core::harness::{paper_initial_density, run_ensemble, EnsembleStats};
use smm_core::noise::NoiseStream;
use smm_core::problem::{build_stepper, Stepper};
use smm_core::smm::{cfl_dt, CflKind};
use smm_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmmStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    Blowup = 3,
    NullPointer = 10,
    Utf8 = 11,
    Numerical = 12,
    Panic = 13,
    Buffer = 14,
}

/// Parsed run configuration.
pub struct SmmConfig {
    inner: RunConfig,
}

/// A single path of `scheme.kind` started from `ρ⁰ = 1 − cos(2πx/L)`.
pub struct SmmStepper {
    stepper: Box<dyn Stepper>,
    stream: NoiseStream,
    modes: usize,
}

/// Statistics of a finished ensemble of `scheme.kind`.
pub struct SmmEnsemble {
    stats: EnsembleStats,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> SmmStatus {
    match err {
        Error::Config { .. } | Error::Precondition(_) | Error::Dimension { .. } | Error::Alignment { .. } => {
            SmmStatus::Config
        }
        Error::BlowUp { .. } | Error::EnsembleFailed { .. } => SmmStatus::Blowup,
        Error::Numerical(_) => SmmStatus::Numerical,
        Error::Io(_) => SmmStatus::Io,
    }
}

/// Runs `f`, recording the error message and mapping panics.
fn guarded(f: impl FnOnce() -> Result<(), (SmmStatus, String)>) -> SmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SmmStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            SmmStatus::Panic
        }
    }
}

fn core(err: Error) -> (SmmStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (SmmStatus, String) {
    (SmmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SmmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (SmmStatus::Utf8, format!("{what}: {e}")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (SmmStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SmmStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<(), (SmmStatus, String)> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err((
            SmmStatus::Buffer,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    // SAFETY: caller guarantees `buf` points to `len >= src.len()` writable doubles.
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    Ok(())
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn smm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML configuration. Unset keys take their defaults, so an
/// empty string gives the default configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_config_from_toml(toml: *const c_char, out: *mut *mut SmmConfig) -> SmmStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(toml, "toml")?;
        let inner = RunConfig::from_toml_str(text).map_err(core)?;
        *out = Box::into_raw(Box::new(SmmConfig { inner }));
        Ok(())
    })
}

/// Applies one `section.key=value` override.
///
/// # Safety
/// `config` must come from [`smm_config_from_toml`]; `assignment` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn smm_config_set(config: *mut SmmConfig, assignment: *const c_char) -> SmmStatus {
    guarded(|| {
        let cfg = out_arg(config, "config")?;
        let a = str_arg(assignment, "assignment")?;
        let text = cfg.inner.to_toml_string();
        cfg.inner = RunConfig::from_toml_with_overrides(&text, &[a.to_string()]).map_err(core)?;
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`smm_config_from_toml`] or be null.
#[no_mangle]
pub unsafe extern "C" fn smm_config_free(config: *mut SmmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Creates a stepper for `scheme.kind` driven by noise stream
/// `realization` of `noise.master_seed`.
///
/// # Safety
/// `config` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_stepper_new(
    config: *const SmmConfig,
    realization: u64,
    out: *mut *mut SmmStepper,
) -> SmmStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = &handle(config, "config")?.inner;
        let problem = cfg.problem().map_err(core)?;
        let kind = cfg.scheme.kind;
        let dt = match cfg.scheme.dt {
            DtSetting::Auto => problem.auto_dt(kind).map_err(core)?,
            DtSetting::Fixed(dt) => dt,
        };
        let rho0 = paper_initial_density(problem.grid());
        let modes = problem.noise().num_modes();
        let stepper = build_stepper(kind, problem, &rho0, dt).map_err(core)?;
        *out = Box::into_raw(Box::new(SmmStepper {
            stepper,
            stream: NoiseStream::new(cfg.noise.master_seed, realization),
            modes,
        }));
        Ok(())
    })
}

/// Advances `steps` time steps. On blow-up the stepper keeps the state of
/// the failing step and should be discarded.
///
/// # Safety
/// `stepper` must be a live stepper handle.
#[no_mangle]
pub unsafe extern "C" fn smm_stepper_advance(stepper: *mut SmmStepper, steps: u64) -> SmmStatus {
    guarded(|| {
        let s = out_arg(stepper, "stepper")?;
        for _ in 0..steps {
            let draw = s.stream.draw(s.stepper.steps_taken(), s.modes);
            s.stepper.step(&draw).map_err(core)?;
        }
        Ok(())
    })
}

/// Number of grid cells, the length of the density.
///
/// # Safety
/// `stepper` must be a live stepper handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_stepper_num_cells(stepper: *const SmmStepper, out: *mut usize) -> SmmStatus {
    guarded(|| {
        *out_arg(out, "out")? = handle(stepper, "stepper")?.stepper.density().len();
        Ok(())
    })
}

/// Copies `ρ` into `buf`, which must hold at least the cell count.
///
/// # Safety
/// `stepper` must be a live stepper handle; `buf` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn smm_stepper_density(stepper: *const SmmStepper, buf: *mut f64, len: usize) -> SmmStatus {
    guarded(|| copy_out(handle(stepper, "stepper")?.stepper.density(), buf, len))
}

/// # Safety
/// `stepper` must be a live stepper handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_stepper_time(stepper: *const SmmStepper, out: *mut f64) -> SmmStatus {
    guarded(|| {
        *out_arg(out, "out")? = handle(stepper, "stepper")?.stepper.time();
        Ok(())
    })
}

/// # Safety
/// `stepper` must be a live stepper handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_stepper_dt(stepper: *const SmmStepper, out: *mut f64) -> SmmStatus {
    guarded(|| {
        *out_arg(out, "out")? = handle(stepper, "stepper")?.stepper.dt();
        Ok(())
    })
}

/// # Safety
/// `stepper` must come from [`smm_stepper_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn smm_stepper_free(stepper: *mut SmmStepper) {
    if !stepper.is_null() {
        drop(Box::from_raw(stepper));
    }
}

/// Runs the ensemble of `scheme.kind` described by `config`.
///
/// # Safety
/// `config` must be a live config handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_ensemble_run(config: *const SmmConfig, out: *mut *mut SmmEnsemble) -> SmmStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = &handle(config, "config")?.inner;
        let ens = cfg.ensemble(&[cfg.scheme.kind]).map_err(core)?;
        let stats = run_ensemble(&ens).map_err(core)?;
        *out = Box::into_raw(Box::new(SmmEnsemble { stats }));
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be a live ensemble handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_ensemble_num_times(ensemble: *const SmmEnsemble, out: *mut usize) -> SmmStatus {
    guarded(|| {
        *out_arg(out, "out")? = handle(ensemble, "ensemble")?.stats.output_times.len();
        Ok(())
    })
}

/// # Safety
/// `ensemble` must be a live ensemble handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_ensemble_num_cells(ensemble: *const SmmEnsemble, out: *mut usize) -> SmmStatus {
    guarded(|| {
        *out_arg(out, "out")? = handle(ensemble, "ensemble")?.stats.x.len();
        Ok(())
    })
}

/// Number of realizations that survived to the last output time.
///
/// # Safety
/// `ensemble` must be a live ensemble handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_ensemble_survivors(ensemble: *const SmmEnsemble, out: *mut usize) -> SmmStatus {
    guarded(|| {
        let e = handle(ensemble, "ensemble")?;
        *out_arg(out, "out")? = e.stats.schemes[0]
            .fields
            .last()
            .map_or(e.stats.realizations, |f| f.count);
        Ok(())
    })
}

unsafe fn field_out(
    ensemble: *const SmmEnsemble,
    time_index: usize,
    buf: *mut f64,
    len: usize,
    pick: fn(&smm_core::harness::FieldStats) -> &[f64],
) -> SmmStatus {
    guarded(|| {
        let e = handle(ensemble, "ensemble")?;
        let fields = &e.stats.schemes[0].fields;
        let f = fields.get(time_index).ok_or_else(|| {
            (
                SmmStatus::Buffer,
                format!("time index {time_index} out of range ({} output times)", fields.len()),
            )
        })?;
        copy_out(pick(f), buf, len)
    })
}

/// Copies the pointwise mean of `ρ` at output `time_index`.
///
/// # Safety
/// `ensemble` must be a live ensemble handle; `buf` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn smm_ensemble_mean(
    ensemble: *const SmmEnsemble,
    time_index: usize,
    buf: *mut f64,
    len: usize,
) -> SmmStatus {
    field_out(ensemble, time_index, buf, len, |f| &f.mean)
}

/// Copies the pointwise sample variance of `ρ` at output `time_index`.
///
/// # Safety
/// As for [`smm_ensemble_mean`].
#[no_mangle]
pub unsafe extern "C" fn smm_ensemble_variance(
    ensemble: *const SmmEnsemble,
    time_index: usize,
    buf: *mut f64,
    len: usize,
) -> SmmStatus {
    field_out(ensemble, time_index, buf, len, |f| &f.variance)
}

/// # Safety
/// `ensemble` must come from [`smm_ensemble_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn smm_ensemble_free(ensemble: *mut SmmEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// `max_θ ‖Ã‖₂²` of the telegraph scheme over `samples` phase angles.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_stability_norm_sq(
    dt: f64,
    dx: f64,
    epsilon: f64,
    samples: usize,
    out: *mut f64,
) -> SmmStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        *out = smm_core::stability::max_norm_sq(dt, dx, epsilon, samples).map_err(core)?;
        Ok(())
    })
}

/// Largest stable step: `general = 0` for the telegraph condition, nonzero
/// for the general one with kernel bound `s_m` and scattering bound
/// `sigma_m`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_cfl_dt(
    dx: f64,
    epsilon: f64,
    s_m: f64,
    sigma_m: f64,
    general: i32,
    out: *mut f64,
) -> SmmStatus {
    guarded(|| {
        let out = out_arg(out, "out")?;
        let kind = if general == 0 {
            CflKind::Telegraph
        } else {
            CflKind::General
        };
        *out = cfl_dt(dx, epsilon, s_m, sigma_m, kind).map_err(core)?;
        Ok(())
    })
}
