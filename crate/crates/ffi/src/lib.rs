//! C ABI for the simulator.
//!
//! Objects are opaque handles created by `*_new`/`*_train`/`*_load`/`*_run`
//! and released by the matching `*_free`. Every fallible function returns a
//! [`JfsceStatus`]; the message of the last failure on the calling thread is
//! available from [`jfsce_last_error_message`]. Complex arrays are interleaved
//! `(re, im)` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use jfsce::baseline;
use jfsce::cascade::{model_fingerprint, CascadeModel};
use jfsce::harness::{self, EstimatorKind, RunOptions, SimConfig, SweepResult};
use jfsce::scenario::Link;
use jfsce::signal::{zadoff_chu, SampleWindow};
use jfsce::{Error, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JfsceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    ModelFormat = 5,
    ConfigMismatch = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JfsceEstimator {
    Ml = 0,
    Omp = 1,
    ElmCascade = 2,
    ElmRaw = 3,
}

impl From<JfsceEstimator> for EstimatorKind {
    fn from(e: JfsceEstimator) -> Self {
        match e {
            JfsceEstimator::Ml => EstimatorKind::Ml,
            JfsceEstimator::Omp => EstimatorKind::Omp,
            JfsceEstimator::ElmCascade => EstimatorKind::ElmCascade,
            JfsceEstimator::ElmRaw => EstimatorKind::ElmRaw,
        }
    }
}

impl From<EstimatorKind> for JfsceEstimator {
    fn from(e: EstimatorKind) -> Self {
        match e {
            EstimatorKind::Ml => JfsceEstimator::Ml,
            EstimatorKind::Omp => JfsceEstimator::Omp,
            EstimatorKind::ElmCascade => JfsceEstimator::ElmCascade,
            EstimatorKind::ElmRaw => JfsceEstimator::ElmRaw,
        }
    }
}

/// One (estimator, sweep value, SNR) result.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JfsceCell {
    pub estimator: JfsceEstimator,
    pub sweep_value: f64,
    pub snr_db: f64,
    pub e_error: f64,
    pub nmse: f64,
    pub n_trials: u64,
}

/// Simulation configuration.
pub struct JfsceConfig {
    inner: SimConfig,
}

/// Trained FS-NET/CE-NET pair.
pub struct JfsceModel {
    inner: CascadeModel,
}

/// Finished sweep.
pub struct JfsceSweep {
    inner: SweepResult,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(JfsceStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::LengthMismatch { .. } | Error::ZeroChannel(_) | Error::EmptyOutcomes => {
                JfsceStatus::InvalidArgument
            }
            Error::Config(_) | Error::CalibrationUnreachable { .. } => JfsceStatus::Config,
            Error::Io { .. } => JfsceStatus::Io,
            Error::ModelFormat { .. } | Error::Untrained | Error::TrainingOrder(_) => JfsceStatus::ModelFormat,
            Error::ConfigMismatch(_) => JfsceStatus::ConfigMismatch,
            Error::SvdNoConvergence
            | Error::EigenNoConvergence
            | Error::RankDeficient(_)
            | Error::ZeroReference => JfsceStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn null(what: &str) -> Failure {
    Failure(JfsceStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(JfsceStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Outcome) -> JfsceStatus {
    let (status, message) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return JfsceStatus::Ok,
        Ok(Err(Failure(s, m))) => (s, m),
        Err(payload) => {
            let m = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            (JfsceStatus::Panic, format!("internal panic: {m}"))
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
    status
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn complex_in(p: *const f64, n: usize, what: &str) -> Result<Vec<C64>, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let flat = std::slice::from_raw_parts(p, 2 * n);
    Ok(flat.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect())
}

unsafe fn complex_out(p: *mut f64, values: &[C64]) {
    let flat = std::slice::from_raw_parts_mut(p, 2 * values.len());
    for (c, v) in flat.chunks_exact_mut(2).zip(values) {
        c[0] = v.re;
        c[1] = v.im;
    }
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Copies the last error message of this thread, NUL-terminated, into `buf`
/// and returns the buffer size needed for the whole message. A null `buf`
/// only queries the size.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn jfsce_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn jfsce_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// New configuration with the default link; `desk` selects reduced training sizes.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jfsce_config_new(desk: bool, out: *mut *mut JfsceConfig) -> JfsceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = if desk { SimConfig::desk() } else { SimConfig::default() };
        write_out(out, JfsceConfig { inner });
        Ok(())
    })
}

/// Sets one configuration key from its text form, as in config files.
///
/// # Safety
/// `cfg` must come from [`jfsce_config_new`]; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn jfsce_config_set(cfg: *mut JfsceConfig, key: *const c_char, value: *const c_char) -> JfsceStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.inner.set(str_arg(key, "key")?, str_arg(value, "value")?)?;
        Ok(())
    })
}

/// Writes the configuration fingerprint (NUL-terminated hex) into `buf`.
///
/// # Safety
/// `cfg` must be a live handle; `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn jfsce_config_fingerprint(cfg: *const JfsceConfig, buf: *mut c_char, len: usize) -> JfsceStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let hash = cfg.inner.fingerprint();
        if len < hash.len() + 1 {
            return Err(Failure(
                JfsceStatus::BufferTooSmall,
                format!("fingerprint needs {} bytes", hash.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(hash.as_ptr(), buf.cast::<u8>(), hash.len());
        *buf.add(hash.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn jfsce_config_free(cfg: *mut JfsceConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn network_variant(e: JfsceEstimator) -> Result<jfsce::cascade::Variant, Failure> {
    EstimatorKind::from(e)
        .variant()
        .ok_or_else(|| invalid("only elm_cascade and elm_raw are trained models"))
}

/// Calibrates the link and trains the networks of `estimator`.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jfsce_model_train(
    cfg: *const JfsceConfig,
    estimator: JfsceEstimator,
    out: *mut *mut JfsceModel,
) -> JfsceStatus {
    guard(|| {
        let cfg = &handle(cfg, "cfg")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let variant = network_variant(estimator)?;
        cfg.validate()?;
        let link = Link::new(cfg.link_params(), cfg.master_seed)?;
        let inner = harness::load_or_train(&link, cfg, variant, None)?;
        write_out(out, JfsceModel { inner });
        Ok(())
    })
}

/// Writes the model into directory `dir`.
///
/// # Safety
/// `model` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn jfsce_model_save(model: *const JfsceModel, dir: *const c_char) -> JfsceStatus {
    guard(|| {
        let model = handle(model, "model")?;
        model.inner.save(PathBuf::from(str_arg(dir, "dir")?))?;
        Ok(())
    })
}

/// Loads a model saved for `estimator` under `cfg`; a model trained under
/// other settings gives `JFSCE_STATUS_CONFIG_MISMATCH`.
///
/// # Safety
/// `cfg` must be a live handle, `dir` a NUL-terminated path, `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jfsce_model_load(
    cfg: *const JfsceConfig,
    estimator: JfsceEstimator,
    dir: *const c_char,
    out: *mut *mut JfsceModel,
) -> JfsceStatus {
    guard(|| {
        let cfg = &handle(cfg, "cfg")?.inner;
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let variant = network_variant(estimator)?;
        let link = Link::new(cfg.link_params(), cfg.master_seed)?;
        let expected = model_fingerprint(link.params(), &cfg.extractor_config(variant), &cfg.training_config());
        let inner = CascadeModel::load(&dir, link.training(), Some(&expected))?;
        write_out(out, JfsceModel { inner });
        Ok(())
    })
}

/// Window length `M` and tap count `L` the model expects.
///
/// # Safety
/// `model` must be a live handle; `m` and `l` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn jfsce_model_shape(model: *const JfsceModel, m: *mut usize, l: *mut usize) -> JfsceStatus {
    guard(|| {
        let cfg = handle(model, "model")?.inner.extractor.config();
        if m.is_null() || l.is_null() {
            return Err(null("m or l"));
        }
        *m = cfg.m;
        *l = cfg.l;
        Ok(())
    })
}

/// Runs the model on one window of `m` complex samples. `frame` (also `m`
/// samples) is read only by models trained with the genie-frame OMP matrix
/// and may be null otherwise. Writes the offset to `tau` and `l` taps to `h`.
///
/// # Safety
/// `samples` and non-null `frame` must hold `2*m` doubles, `h` room for
/// `2*l` doubles, `tau` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jfsce_model_deploy(
    model: *const JfsceModel,
    samples: *const f64,
    m: usize,
    frame: *const f64,
    tau: *mut usize,
    h: *mut f64,
    l: usize,
) -> JfsceStatus {
    guard(|| {
        let model = &handle(model, "model")?.inner;
        let cfg = model.extractor.config();
        if m != cfg.m || l != cfg.l {
            return Err(invalid(format!("model expects m={} and l={}, got m={m} l={l}", cfg.m, cfg.l)));
        }
        if tau.is_null() || h.is_null() {
            return Err(null("tau or h"));
        }
        let window = SampleWindow::new(complex_in(samples, m, "samples")?, 0)?;
        let frame = if frame.is_null() { None } else { Some(complex_in(frame, m, "frame")?) };
        let est = model.deploy_with_frame(&window, frame.as_deref())?;
        *tau = est.tau_hat;
        complex_out(h, &est.h_hat);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn jfsce_model_free(model: *mut JfsceModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Zadoff-Chu sequence of length `ns` with root `root` into `out` (`2*ns` doubles).
///
/// # Safety
/// `out` must be valid for `2*ns` doubles.
#[no_mangle]
pub unsafe extern "C" fn jfsce_zadoff_chu(ns: usize, root: u64, out: *mut f64) -> JfsceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        complex_out(out, &zadoff_chu(ns, root)?);
        Ok(())
    })
}

/// Cyclic cross-correlation synchronizer: `tau` gets the first peak of
/// `|u|²`, and `u` (`2*m` doubles, may be null) the correlations.
///
/// # Safety
/// `samples` must hold `2*m` doubles, `training` `2*ns` doubles.
#[no_mangle]
pub unsafe extern "C" fn jfsce_crosscorr(
    samples: *const f64,
    m: usize,
    training: *const f64,
    ns: usize,
    tau: *mut usize,
    u: *mut f64,
) -> JfsceStatus {
    guard(|| {
        if tau.is_null() {
            return Err(null("tau"));
        }
        if ns == 0 || ns > m {
            return Err(invalid(format!("need 0 < ns <= m (ns={ns}, m={m})")));
        }
        let window = SampleWindow::new(complex_in(samples, m, "samples")?, 0)?;
        let (t, corr) = baseline::fs_crosscorr(&window, &complex_in(training, ns, "training")?)?;
        *tau = t;
        if !u.is_null() {
            complex_out(u, &corr);
        }
        Ok(())
    })
}

/// Runs the configured sweep on `workers` threads (0: all cores).
///
/// # Safety
/// `cfg` must be a live handle; `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jfsce_sweep_run(cfg: *const JfsceConfig, workers: usize, out: *mut *mut JfsceSweep) -> JfsceStatus {
    guard(|| {
        let cfg = &handle(cfg, "cfg")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = RunOptions {
            workers: (workers > 0).then_some(workers),
            ..Default::default()
        };
        let inner = harness::run_sweep(cfg, &opts)?;
        write_out(out, JfsceSweep { inner });
        Ok(())
    })
}

/// # Safety
/// `sweep` must be a live handle; `count` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jfsce_sweep_cell_count(sweep: *const JfsceSweep, count: *mut usize) -> JfsceStatus {
    guard(|| {
        let sweep = handle(sweep, "sweep")?;
        if count.is_null() {
            return Err(null("count"));
        }
        *count = sweep.inner.cells.len();
        Ok(())
    })
}

/// # Safety
/// `sweep` must be a live handle; `cell` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn jfsce_sweep_cell(sweep: *const JfsceSweep, index: usize, cell: *mut JfsceCell) -> JfsceStatus {
    guard(|| {
        let sweep = handle(sweep, "sweep")?;
        if cell.is_null() {
            return Err(null("cell"));
        }
        let c = sweep
            .inner
            .cells
            .get(index)
            .ok_or_else(|| invalid(format!("cell {index} out of range ({})", sweep.inner.cells.len())))?;
        *cell = JfsceCell {
            estimator: c.estimator.into(),
            sweep_value: c.sweep_value,
            snr_db: c.snr_db,
            e_error: c.e_error(),
            nmse: c.nmse(),
            n_trials: c.tally.trials,
        };
        Ok(())
    })
}

/// Writes the results CSV to `path` and its JSON companion next to it.
///
/// # Safety
/// `sweep` must be a live handle; `path` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn jfsce_sweep_write(sweep: *const JfsceSweep, path: *const c_char) -> JfsceStatus {
    guard(|| {
        let sweep = handle(sweep, "sweep")?;
        harness::emit_results(&sweep.inner, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `sweep` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn jfsce_sweep_free(sweep: *mut JfsceSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}
