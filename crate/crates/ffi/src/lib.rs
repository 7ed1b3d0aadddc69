// SPDX-License-Identifier: Apache-2.0

//! C ABI over `siaf-core`.
//!
//! Models are opaque handles. Every fallible call returns a [`SiafStatus`];
//! on failure [`siaf_last_error_message`] describes the error for the calling
//! thread. Strings returned by the library are freed with [`siaf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use siaf_core::accel::AccelConfig;
use siaf_core::config::ConfigFile;
use siaf_core::gen::{generate, SizeClass};
use siaf_core::memory::{EnergyModel, SramBudget};
use siaf_core::reference::model::ModelConfig;
use siaf_core::report::{run_document, to_json};
use siaf_core::scheduler::{simulate, Schedule};
use siaf_core::siaf::TensorFile;
use siaf_core::tensor::ByteImage;
use siaf_core::verify::{compare_traces, reference_trace};
use siaf_core::Error;

/// Result of a library call. Values match the `siaf` command exit codes
/// where they overlap.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiafStatus {
    Ok = 0,
    /// Reference and simulator traces differ.
    Mismatch = 1,
    /// Unreadable or malformed file, or invalid configuration.
    InputError = 2,
    /// Simulation failed: overflow, capacity or unsupported layer.
    SimulationError = 3,
    /// Null pointer, bad UTF-8 or a too-small output buffer.
    InvalidArgument = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Opaque model handle.
pub struct SiafModel {
    model: ModelConfig,
    accel: AccelConfig,
    budget: SramBudget,
    energy: EnergyModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Fail {
    Core(Error),
    Arg(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<SiafStatus, Fail>) -> SiafStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(Fail::Core(e))) => {
            let s = if e.is_input_error() { SiafStatus::InputError } else { SiafStatus::SimulationError };
            set_error(e.to_string());
            s
        }
        Ok(Err(Fail::Arg(m))) => {
            set_error(m);
            SiafStatus::InvalidArgument
        }
        Err(_) => {
            set_error("panic inside siaf".into());
            SiafStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Arg(format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Arg(format!("{name} is not UTF-8")))
}

unsafe fn model_arg<'a>(p: *const SiafModel) -> Result<&'a SiafModel, Fail> {
    p.as_ref().ok_or_else(|| Fail::Arg("model is null".into()))
}

unsafe fn image_arg(m: &SiafModel, data: *const u8, len: usize) -> Result<ByteImage, Fail> {
    let [c, h, w] = m.model.input;
    if data.is_null() {
        return Err(Fail::Arg("image is null".into()));
    }
    if len != c * h * w {
        return Err(Fail::Arg(format!("image has {len} bytes, model expects {}", c * h * w)));
    }
    Ok(ByteImage::new(c, h, w, std::slice::from_raw_parts(data, len).to_vec())?)
}

unsafe fn schedule_arg(m: &SiafModel, name: *const c_char) -> Result<Schedule, Fail> {
    let name = str_arg(name, "schedule")?;
    Ok(Schedule::by_name(name, m.model.time_steps)?)
}

fn into_handle(m: SiafModel, out: *mut *mut SiafModel) -> SiafStatus {
    // SAFETY: caller checked `out` is non-null.
    unsafe { *out = Box::into_raw(Box::new(m)) };
    SiafStatus::Ok
}

/// Loads a model from a TOML config and a weight file.
///
/// # Safety
/// Paths must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn siaf_model_load(
    config_path: *const c_char,
    weights_path: *const c_char,
    out: *mut *mut SiafModel,
) -> SiafStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Arg("out is null".into()));
        }
        let cp = PathBuf::from(str_arg(config_path, "config_path")?);
        let wp = PathBuf::from(str_arg(weights_path, "weights_path")?);
        let file = ConfigFile::load(&cp)?;
        let tensors = TensorFile::load(&wp)?;
        let model = file.build_model(&tensors)?;
        file.accel.validate()?;
        file.energy.validate()?;
        Ok(into_handle(SiafModel { model, accel: file.accel, budget: file.budget, energy: file.energy }, out))
    })
}

/// Generates a random model: `size` is `tiny`, `small` or `paper-384`.
///
/// # Safety
/// `size` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn siaf_model_generate(
    size: *const c_char,
    seed: u64,
    time_steps: u32,
    out: *mut *mut SiafModel,
) -> SiafStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Arg("out is null".into()));
        }
        let size: SizeClass = str_arg(size, "size")?.parse()?;
        let model = generate(size, seed, time_steps as usize).map_err(|e| Error::Config(e.to_string()))?;
        Ok(into_handle(
            SiafModel {
                model,
                accel: AccelConfig::default(),
                budget: SramBudget::default(),
                energy: EnergyModel::default(),
            },
            out,
        ))
    })
}

/// Frees a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn siaf_model_free(model: *mut SiafModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes `[channels, height, width]` of the model input.
///
/// # Safety
/// `out` must point to three writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn siaf_model_input_shape(model: *const SiafModel, out: *mut usize) -> SiafStatus {
    guard(|| {
        let m = model_arg(model)?;
        if out.is_null() {
            return Err(Fail::Arg("out is null".into()));
        }
        ptr::copy_nonoverlapping(m.model.input.as_ptr(), out, 3);
        Ok(SiafStatus::Ok)
    })
}

/// Number of logits the model produces.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn siaf_model_classes(model: *const SiafModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.head.classes)
}

/// Simulates one inference. Logits go to `logits` (capacity `logits_cap`);
/// the JSON report goes to `*report_json` when that pointer is non-null.
///
/// # Safety
/// `image` must hold `image_len` bytes in `[c][h][w]` order; `logits` must
/// hold `logits_cap` values; `report_json` may be null.
#[no_mangle]
pub unsafe extern "C" fn siaf_run(
    model: *const SiafModel,
    image: *const u8,
    image_len: usize,
    schedule: *const c_char,
    logits: *mut i32,
    logits_cap: usize,
    report_json: *mut *mut c_char,
) -> SiafStatus {
    guard(|| {
        let m = model_arg(model)?;
        let img = image_arg(m, image, image_len)?;
        let sched = schedule_arg(m, schedule)?;
        if logits.is_null() || logits_cap < m.model.head.classes {
            return Err(Fail::Arg(format!("logits buffer needs {} values", m.model.head.classes)));
        }
        let exec = simulate(&m.model, &img, &m.accel, &sched, &m.budget)?;
        let l = exec.logits.data();
        ptr::copy_nonoverlapping(l.as_ptr(), logits, l.len());
        if !report_json.is_null() {
            let doc = to_json(&run_document(&m.model, &m.accel, &m.energy, &exec, None));
            *report_json = CString::new(doc).expect("json has no nul").into_raw();
        }
        Ok(SiafStatus::Ok)
    })
}

/// Runs reference and simulator and compares every trace entry. Returns
/// `Mismatch` on difference; the error message names the first one.
///
/// # Safety
/// As for [`siaf_run`].
#[no_mangle]
pub unsafe extern "C" fn siaf_verify(
    model: *const SiafModel,
    image: *const u8,
    image_len: usize,
    schedule: *const c_char,
) -> SiafStatus {
    guard(|| {
        let m = model_arg(model)?;
        let img = image_arg(m, image, image_len)?;
        let sched = schedule_arg(m, schedule)?;
        let exec = simulate(&m.model, &img, &m.accel, &sched, &m.budget)?;
        let gold = reference_trace(&m.model, &img)?;
        match compare_traces(&gold, &exec.trace).first_mismatch {
            None => Ok(SiafStatus::Ok),
            Some(x) => {
                set_error(format!(
                    "layer={} time_step={} index={}: {}",
                    x.layer,
                    x.time_step.map_or("-".into(), |t| t.to_string()),
                    x.index,
                    x.reason
                ));
                Ok(SiafStatus::Mismatch)
            }
        }
    })
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn siaf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn siaf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Processing elements of the default array configuration.
#[no_mangle]
pub extern "C" fn siaf_total_pes() -> usize {
    AccelConfig::default().total_pes()
}

/// Peak giga synaptic operations per second of the default configuration.
#[no_mangle]
pub extern "C" fn siaf_peak_gsops() -> f64 {
    AccelConfig::default().peak_gsops()
}
