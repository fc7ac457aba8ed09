//! C ABI over the marginforge core.
//!
//! Conventions:
//! * Every fallible function returns an [`MfStatus`]; results go through
//!   out-pointers that are written only on success.
//! * [`mf_last_error`] describes the most recent failure on the calling
//!   thread.
//! * Matrices are dense row-major `double` arrays with explicit `rows` and
//!   `cols`; labels are `size_t` class indices.
//! * Models are opaque [`MfModel`] handles released with [`mf_model_free`].
//! * Panics never cross the boundary; they surface as `MF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use marginforge::attack::{pgd_batch, AttackConfig, InnerObjective};
use marginforge::interpolate::{binary_search_alpha_batch, margins, InterpolationConfig};
use marginforge::model::{checkpoint, Mlp, SoftLabel};
use marginforge::schedule::{EpsSchedule, RhoSchedule, ScheduleSpec};
use marginforge::tensor::Tensor;
use marginforge::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    InvalidLabel = 4,
    NonFinite = 5,
    Io = 6,
    Checkpoint = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfObjective {
    CeHard = 0,
    CeSoft = 1,
    Kl = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MfScheduleKind {
    Const = 0,
    Linear = 1,
    Curious = 2,
}

/// Opaque classifier handle.
pub struct MfModel {
    inner: Mlp,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(MfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } => MfStatus::Shape,
            Error::InvalidLabel(_) => MfStatus::InvalidLabel,
            Error::NonFinite { .. } => MfStatus::NonFinite,
            Error::Io { .. } => MfStatus::Io,
            Error::Checkpoint(_) => MfStatus::Checkpoint,
            _ => MfStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MfStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MfStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const MfModel) -> Result<&'a Mlp, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn matrix(x: *const f64, rows: usize, cols: usize, what: &str) -> Result<Tensor, Fail> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Fail(MfStatus::InvalidArgument, format!("{what}: {rows} x {cols} overflows")))?;
    Ok(Tensor::matrix(rows, cols, slice(x, len, what)?.to_vec())?)
}

unsafe fn to_path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MfStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn one_hot(labels: &[usize], classes: usize) -> Result<Vec<SoftLabel>, Fail> {
    labels
        .iter()
        .map(|&y| SoftLabel::one_hot(y, classes).map_err(Fail::from))
        .collect()
}

/// Message for the last failure on this thread; empty if none. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// He-initialized ReLU MLP with layer widths `sizes[0..n_sizes]`.
///
/// # Safety
/// `sizes` must point to `n_sizes` values and `out_model` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn mf_model_new(sizes: *const usize, n_sizes: usize, seed: u64, out_model: *mut *mut MfModel) -> MfStatus {
    guard(|| {
        let sizes = slice(sizes, n_sizes, "sizes")?;
        let dst = out(out_model, "out_model")?;
        let inner = Mlp::init(sizes, seed)?;
        *dst = Box::into_raw(Box::new(MfModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn mf_model_free(model: *mut MfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn mf_model_load(path: *const c_char, out_model: *mut *mut MfModel) -> MfStatus {
    guard(|| {
        let p = to_path(path)?;
        let dst = out(out_model, "out_model")?;
        let inner = checkpoint::load(&p)?;
        *dst = Box::into_raw(Box::new(MfModel { inner }));
        Ok(())
    })
}

/// Write a checkpoint atomically.
///
/// # Safety
/// `model` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mf_model_save(model: *const MfModel, path: *const c_char) -> MfStatus {
    guard(|| {
        let m = model_ref(model)?;
        checkpoint::save(m, &to_path(path)?)?;
        Ok(())
    })
}

/// Input width and class count.
///
/// # Safety
/// `model` must be a live handle; both outputs writable.
#[no_mangle]
pub unsafe extern "C" fn mf_model_dims(model: *const MfModel, out_input_dim: *mut usize, out_classes: *mut usize) -> MfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (a, b) = (out(out_input_dim, "out_input_dim")?, out(out_classes, "out_classes")?);
        *a = m.input_dim();
        *b = m.class_count();
        Ok(())
    })
}

/// Logits for `rows` inputs into `out_logits` (`rows * classes` values).
///
/// # Safety
/// `x` holds `rows * cols` values; `out_logits` has room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn mf_model_forward(
    model: *const MfModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out_logits: *mut f64,
    out_len: usize,
) -> MfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let z = m.logits(&matrix(x, rows, cols, "x")?)?;
        if out_len != z.len() {
            return Err(Fail(MfStatus::Shape, format!("out_len {out_len}, need {}", z.len())));
        }
        slice_mut(out_logits, out_len, "out_logits")?.copy_from_slice(z.data());
        Ok(())
    })
}

/// Arg-max classes, ties to the lowest index.
///
/// # Safety
/// `x` holds `rows * cols` values; `out_classes` has room for `rows`.
#[no_mangle]
pub unsafe extern "C" fn mf_model_predict(
    model: *const MfModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out_classes: *mut usize,
) -> MfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let p = m.predict(&matrix(x, rows, cols, "x")?)?;
        slice_mut(out_classes, rows, "out_classes")?.copy_from_slice(&p);
        Ok(())
    })
}

/// ℓ∞ PGD against one-hot `labels`. `step_size <= 0` selects `epsilon / 4`;
/// `lo > hi` disables the domain clamp.
///
/// # Safety
/// `x` and `out_x_adv` hold `rows * cols` values, `labels` holds `rows`.
#[no_mangle]
pub unsafe extern "C" fn mf_pgd(
    model: *const MfModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    labels: *const usize,
    epsilon: f64,
    steps: usize,
    step_size: f64,
    objective: MfObjective,
    restarts: usize,
    lo: f64,
    hi: f64,
    seed: u64,
    out_x_adv: *mut f64,
) -> MfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let xt = matrix(x, rows, cols, "x")?;
        let targets = one_hot(slice(labels, rows, "labels")?, m.class_count())?;
        let cfg = AttackConfig {
            epsilon,
            steps,
            step_size: (step_size > 0.0).then_some(step_size),
            objective: match objective {
                MfObjective::CeHard => InnerObjective::CeHard,
                MfObjective::CeSoft => InnerObjective::CeSoft,
                MfObjective::Kl => InnerObjective::Kl,
            },
            domain_bounds: (lo <= hi).then_some((lo, hi)),
            restarts,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adv = pgd_batch(m, &xt, &targets, &cfg, &mut rng)?.x_adv;
        slice_mut(out_x_adv, xt.len(), "out_x_adv")?.copy_from_slice(adv.data());
        Ok(())
    })
}

/// Per-row bisection for the interpolation coefficient whose margin first
/// reaches `rho`, with `steps` probes at temperature `tau`.
///
/// # Safety
/// `x`, `x_pgd` and `out_x_adv` hold `rows * cols` values; `labels` and
/// `out_alpha` hold `rows`. `out_x_adv` may be null.
#[no_mangle]
pub unsafe extern "C" fn mf_binary_search_alpha(
    model: *const MfModel,
    x: *const f64,
    x_pgd: *const f64,
    rows: usize,
    cols: usize,
    labels: *const usize,
    rho: f64,
    tau: f64,
    steps: usize,
    out_alpha: *mut f64,
    out_x_adv: *mut f64,
) -> MfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let xt = matrix(x, rows, cols, "x")?;
        let xp = matrix(x_pgd, rows, cols, "x_pgd")?;
        let targets = one_hot(slice(labels, rows, "labels")?, m.class_count())?;
        let cfg = InterpolationConfig { rho, tau, steps };
        let r = binary_search_alpha_batch(m, &xt, &xp, &targets, &cfg)?;
        slice_mut(out_alpha, rows, "out_alpha")?.copy_from_slice(&r.alpha);
        if !out_x_adv.is_null() {
            slice_mut(out_x_adv, xt.len(), "out_x_adv")?.copy_from_slice(r.x_adv.data());
        }
        Ok(())
    })
}

/// Margin of the temperature-`tau` softmax against one-hot `labels`.
///
/// # Safety
/// `x` holds `rows * cols` values; `labels` and `out_margin` hold `rows`.
#[no_mangle]
pub unsafe extern "C" fn mf_margin(
    model: *const MfModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    labels: *const usize,
    tau: f64,
    out_margin: *mut f64,
) -> MfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let targets = one_hot(slice(labels, rows, "labels")?, m.class_count())?;
        let d = margins(m, &matrix(x, rows, cols, "x")?, &targets, tau)?;
        slice_mut(out_margin, rows, "out_margin")?.copy_from_slice(&d);
        Ok(())
    })
}

/// Budget upper bound at a 1-based `epoch`. `gamma` and `ramp_epochs` are
/// ignored where the kind does not use them.
///
/// # Safety
/// `out_eps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_eps_at(
    kind: MfScheduleKind,
    gamma: f64,
    ramp_epochs: usize,
    eps_base: f64,
    total_epochs: usize,
    epoch: usize,
    out_eps: *mut f64,
) -> MfStatus {
    guard(|| {
        let variant = match kind {
            MfScheduleKind::Const => EpsSchedule::Const,
            MfScheduleKind::Linear => EpsSchedule::Linear { ramp_epochs },
            MfScheduleKind::Curious => EpsSchedule::Curious { gamma, ramp_epochs },
        };
        let dst = out(out_eps, "out_eps")?;
        *dst = ScheduleSpec::new(variant, eps_base, total_epochs)?.eps_at(epoch)?;
        Ok(())
    })
}

/// Margin threshold at `epoch`; `double_at_epoch == 0` never doubles.
///
/// # Safety
/// `out_rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_rho_at(
    rho_initial: f64,
    double_at_epoch: usize,
    total_epochs: usize,
    epoch: usize,
    out_rho: *mut f64,
) -> MfStatus {
    guard(|| {
        let s = RhoSchedule {
            rho_initial,
            double_at_epoch: (double_at_epoch > 0).then_some(double_at_epoch),
        };
        s.validate(total_epochs)?;
        let dst = out(out_rho, "out_rho")?;
        *dst = s.rho_at(epoch);
        Ok(())
    })
}
