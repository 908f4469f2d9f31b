//! C interface to the sisplan planner.
//!
//! Every function returns a [`SisplanStatus`]; on failure the message is
//! available from [`sisplan_last_error`] on the same thread. Panics never
//! cross the boundary: they are reported as `SISPLAN_STATUS_PANIC`.
//!
//! A planner handle must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use sisplan::harness::config::ExperimentConfig;
use sisplan::harness::metrics::HEADER;
use sisplan::harness::run::{derive_rng, make_predictor, PredictorInit};
use sisplan::planner::{EpisodeMetrics, Planner};
use sisplan::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SisplanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Runtime = 5,
    Panic = 6,
}

/// Opaque planner handle.
pub struct SisplanPlanner {
    planner: Planner,
}

/// Summary of one episode. Unavailable values are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SisplanEpisodeMetrics {
    pub episode: u64,
    pub total_return: f64,
    pub steps: u64,
    pub mean_step_time_ms: f64,
    pub mean_n_gs: f64,
    pub mean_n_ials: f64,
    pub mean_lhat: f64,
    pub train_loss: f64,
    pub buffer_size: u64,
    pub failed: bool,
}

impl From<&EpisodeMetrics> for SisplanEpisodeMetrics {
    fn from(m: &EpisodeMetrics) -> Self {
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        SisplanEpisodeMetrics {
            episode: m.episode as u64,
            total_return: m.total_return,
            steps: m.steps.len() as u64,
            mean_step_time_ms: nan(m.mean_step_time_ms()),
            mean_n_gs: nan(m.mean_n_gs()),
            mean_n_ials: nan(m.mean_n_ials()),
            mean_lhat: nan(m.mean_lhat()),
            train_loss: nan(m.train_loss),
            buffer_size: m.buffer_size as u64,
            failed: m.failed,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SisplanStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => SisplanStatus::Config,
            Error::Io { .. } | Error::Format { .. } | Error::Csv(_) => SisplanStatus::Io,
            _ => SisplanStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SisplanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SisplanStatus::Ok
        }
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
            SisplanStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SisplanStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SisplanStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a>(p: *mut SisplanPlanner) -> Result<&'a mut SisplanPlanner, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(SisplanStatus::NullPointer, "planner handle is null".into()))
}

/// Creates a planner from an experiment configuration in TOML form.
/// `run_id` selects the random stream under the configured seed, exactly as
/// run `run_id` of the command-line experiments. The planner uses the first
/// configured lambda. On success `*out` receives a handle to be released with
/// `sisplan_planner_free`.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sisplan_planner_new(
    config_toml: *const c_char,
    run_id: u64,
    out: *mut *mut SisplanPlanner,
) -> SisplanStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure(SisplanStatus::NullPointer, "out is null".into()));
        }
        *out = std::ptr::null_mut();
        let text = str_arg(config_toml, "config_toml")?;
        let cfg = ExperimentConfig::from_toml_str(text)?;
        let pcfg = cfg.planner_config(cfg.lambdas[0]);
        let domain = cfg.domain.build()?;
        let mut rng = derive_rng(cfg.seed, run_id);
        let predictor = make_predictor(&PredictorInit::Fresh, domain.as_ref(), &pcfg, &mut rng);
        let planner = Planner::new(Arc::clone(&domain), pcfg, predictor, rng);
        *out = Box::into_raw(Box::new(SisplanPlanner { planner }));
        Ok(())
    })
}

/// Releases a planner. Passing NULL is a no-op.
///
/// # Safety
/// `planner` must come from `sisplan_planner_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sisplan_planner_free(planner: *mut SisplanPlanner) {
    if !planner.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(planner))));
    }
}

/// Plays one real episode, training the predictor afterwards when the mode
/// allows it.
///
/// # Safety
/// `planner` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sisplan_planner_run_episode(
    planner: *mut SisplanPlanner,
    out: *mut SisplanEpisodeMetrics,
) -> SisplanStatus {
    guard(|| {
        let h = handle(planner)?;
        let out = out
            .as_mut()
            .ok_or_else(|| Failure(SisplanStatus::NullPointer, "out is null".into()))?;
        let result = h.planner.run_episode();
        *out = SisplanEpisodeMetrics::from(&result.metrics);
        Ok(())
    })
}

/// Changes the simulator cost weight used from the next decision on.
///
/// # Safety
/// `planner` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sisplan_planner_set_lambda(planner: *mut SisplanPlanner, lambda: f64) -> SisplanStatus {
    guard(|| {
        let h = handle(planner)?;
        let mut sel = h.planner.cfg.selector.clone();
        sel.lambda = lambda;
        sel.validate()?;
        h.planner.cfg.selector = sel.clone();
        h.planner.selector.cfg = sel;
        Ok(())
    })
}

/// Number of training sequences collected so far.
///
/// # Safety
/// `planner` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sisplan_planner_buffer_len(planner: *mut SisplanPlanner, out: *mut usize) -> SisplanStatus {
    guard(|| {
        let h = handle(planner)?;
        let out = out
            .as_mut()
            .ok_or_else(|| Failure(SisplanStatus::NullPointer, "out is null".into()))?;
        *out = h.planner.buffer.len();
        Ok(())
    })
}

/// Writes the replay buffer to `path` in the line-oriented buffer format.
///
/// # Safety
/// `planner` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sisplan_planner_export_buffer(
    planner: *mut SisplanPlanner,
    path: *const c_char,
) -> SisplanStatus {
    guard(|| {
        let h = handle(planner)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        h.planner.buffer.save(&path)?;
        Ok(())
    })
}

/// Writes the current predictor weights to `path` as JSON. Fails with
/// `SISPLAN_STATUS_RUNTIME` if the planner uses a fixed predictor.
///
/// # Safety
/// `planner` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sisplan_planner_save_predictor(
    planner: *mut SisplanPlanner,
    path: *const c_char,
) -> SisplanStatus {
    guard(|| {
        let h = handle(planner)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let learner = h
            .planner
            .predictor
            .learner()
            .ok_or_else(|| Failure(SisplanStatus::Runtime, "planner has no trainable predictor".into()))?;
        learner.params.save(&path)?;
        Ok(())
    })
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call into this library on this thread.
#[no_mangle]
pub extern "C" fn sisplan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sisplan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Column header of the metrics CSV, comma separated, as a static string.
#[no_mangle]
pub extern "C" fn sisplan_metrics_csv_header() -> *const c_char {
    static HEADER_C: std::sync::OnceLock<CString> = std::sync::OnceLock::new();
    HEADER_C
        .get_or_init(|| CString::new(HEADER.join(",")).unwrap_or_default())
        .as_ptr()
}
