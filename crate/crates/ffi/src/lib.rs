//! C ABI over the `hwr` recognizer.
//!
//! Every fallible function returns an [`HwrStatus`]; on failure a message is
//! available from [`hwr_last_error_message`] on the same thread. Models are
//! opaque handles created by [`hwr_model_load`] and released with
//! [`hwr_model_free`]. Strings returned by the library are released with
//! [`hwr_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hwr::ctc::ctc_loss;
use hwr::imageproc::GrayImage;
use hwr::metrics::edit_distance;
use hwr::network::FrameMatrix;
use hwr::trainer::{Checkpoint, Decoder, Model};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HwrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Image = 4,
    InvalidArgument = 5,
    Checkpoint = 6,
    Label = 7,
    NonFinite = 8,
    Internal = 99,
}

/// A loaded model. Opaque to C.
pub struct HwrModel {
    model: Model,
}

/// Edit operations turning a reference into a hypothesis.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HwrEdits {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(err: &hwr::Error) -> HwrStatus {
    use hwr::Error as E;
    match err {
        E::Io { .. } => HwrStatus::Io,
        E::Image { .. } => HwrStatus::Image,
        E::Checkpoint(_) | E::Json(_) | E::CharsetMismatch(_) => HwrStatus::Checkpoint,
        E::UnknownSymbol(_)
        | E::LabelOutOfRange { .. }
        | E::BlankInTarget
        | E::TargetTooLong { .. } => HwrStatus::Label,
        E::NonFinite(_) | E::NonFiniteLoss { .. } => HwrStatus::NonFinite,
        _ => HwrStatus::InvalidArgument,
    }
}

struct Failure(HwrStatus, String);

impl From<hwr::Error> for Failure {
    fn from(e: hwr::Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HwrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HwrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            HwrStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(HwrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(HwrStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn decoder(beam_width: usize) -> Decoder {
    if beam_width == 0 {
        Decoder::Greedy
    } else {
        Decoder::Beam(beam_width)
    }
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(HwrStatus::Internal, "string contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message for the most recent failure on this thread; empty after success.
/// The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn hwr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hwr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hwr_model_load(path: *const c_char, out: *mut *mut HwrModel) -> HwrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let ck = Checkpoint::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(HwrModel { model: ck.model }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`hwr_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hwr_model_free(model: *mut HwrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Output classes per frame, blank included.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn hwr_model_num_classes(model: *const HwrModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.config.num_classes)
}

/// Frames emitted per image.
#[no_mangle]
pub extern "C" fn hwr_model_num_frames() -> usize {
    hwr::network::FRAMES
}

unsafe fn image_arg(pixels: *const u8, height: usize, width: usize) -> Result<GrayImage, Failure> {
    if pixels.is_null() {
        return Err(null("pixels"));
    }
    let n = height
        .checked_mul(width)
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure(HwrStatus::InvalidArgument, "image must be non-empty".into()))?;
    let data = std::slice::from_raw_parts(pixels, n).iter().map(|&v| f64::from(v)).collect();
    Ok(GrayImage::new(height, width, data)?)
}

/// Recognizes a row-major 8-bit grayscale crop. `beam_width` 0 selects greedy
/// decoding. The result is written to `*out` and must be freed with
/// [`hwr_string_free`].
///
/// # Safety
/// `pixels` must point to `height * width` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hwr_model_predict_pixels(
    model: *const HwrModel,
    pixels: *const u8,
    height: usize,
    width: usize,
    beam_width: usize,
    out: *mut *mut c_char,
) -> HwrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let img = image_arg(pixels, height, width)?;
        let text = m.model.predict(&img, decoder(beam_width))?;
        write_string(out, text)
    })
}

/// Recognizes an image file. See [`hwr_model_predict_pixels`].
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hwr_model_predict_file(
    model: *const HwrModel,
    path: *const c_char,
    beam_width: usize,
    out: *mut *mut c_char,
) -> HwrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let img = GrayImage::load(Path::new(str_arg(path, "path")?))?;
        let text = m.model.predict(&img, decoder(beam_width))?;
        write_string(out, text)
    })
}

/// Writes the `frames × classes` probability matrix of a crop into `probs`,
/// which must hold `capacity` doubles.
///
/// # Safety
/// `pixels` must point to `height * width` bytes and `probs` to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hwr_model_frame_probs(
    model: *const HwrModel,
    pixels: *const u8,
    height: usize,
    width: usize,
    probs: *mut f64,
    capacity: usize,
) -> HwrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let img = image_arg(pixels, height, width)?;
        let frames = m.model.frames(&hwr::imageproc::preprocess(&img))?;
        let src = frames.probs();
        if capacity < src.len() {
            return Err(Failure(
                HwrStatus::InvalidArgument,
                format!("probs needs {} doubles, capacity is {capacity}", src.len()),
            ));
        }
        std::slice::from_raw_parts_mut(probs, src.len()).copy_from_slice(src);
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hwr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// CTC negative log-likelihood of `labels` under a row-stochastic
/// `frames × classes` matrix whose last class is the blank.
///
/// # Safety
/// `probs` must point to `frames * classes` doubles and `labels` to
/// `num_labels` values (may be null when `num_labels` is 0).
#[no_mangle]
pub unsafe extern "C" fn hwr_ctc_loss(
    probs: *const f64,
    frames: usize,
    classes: usize,
    labels: *const u32,
    num_labels: usize,
    out_loss: *mut f64,
) -> HwrStatus {
    guard(|| {
        if probs.is_null() {
            return Err(null("probs"));
        }
        if out_loss.is_null() {
            return Err(null("out_loss"));
        }
        if labels.is_null() && num_labels > 0 {
            return Err(null("labels"));
        }
        let n = frames.checked_mul(classes).ok_or_else(|| {
            Failure(HwrStatus::InvalidArgument, "frames * classes overflows".into())
        })?;
        let p = std::slice::from_raw_parts(probs, n).to_vec();
        let labels: Vec<usize> = if num_labels == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(labels, num_labels).iter().map(|&l| l as usize).collect()
        };
        let m = FrameMatrix::new(frames, classes, p)?;
        *out_loss = ctc_loss(&m, &labels)?;
        Ok(())
    })
}

/// Minimum edit breakdown between two UTF-8 strings, counted in code points.
///
/// # Safety
/// Both strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hwr_edit_distance(
    reference: *const c_char,
    hypothesis: *const c_char,
    out: *mut HwrEdits,
) -> HwrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let e = edit_distance(str_arg(reference, "reference")?, str_arg(hypothesis, "hypothesis")?);
        *out = HwrEdits {
            substitutions: e.substitutions,
            insertions: e.insertions,
            deletions: e.deletions,
        };
        Ok(())
    })
}
