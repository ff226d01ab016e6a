//! C ABI over the `corf` feature extractor.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! functions and released by the matching `*_free`. Every fallible call
//! returns a [`CorfStatus`]; on failure a description is available from
//! [`corf_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use corf::bank::{export_tensor, import_tensor, sigma_grid, DEFAULT_K};
use corf::cell::even_orientations;
use corf::{apply_bank, build_bank, BankConfig, BetaPolicy, CorfError, FeatureTensor, FilterBank, Image};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Io = 3,
    Format = 4,
    Dimension = 5,
    Configuration = 6,
    InvalidCell = 7,
    Data = 8,
    Divergence = 9,
    Panic = 10,
}

/// Grayscale image with intensities in [0, 1].
pub struct CorfImage(Image);

/// Configured push-pull filter bank.
pub struct CorfBank(FilterBank);

/// Height x width x channels feature tensor, channel-major f32.
pub struct CorfTensor(FeatureTensor);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn status_of(err: &CorfError) -> CorfStatus {
    match err {
        CorfError::Io { .. } => CorfStatus::Io,
        CorfError::Format(_) => CorfStatus::Format,
        CorfError::Dimension(_) => CorfStatus::Dimension,
        CorfError::InvalidParameter(_) => CorfStatus::InvalidParameter,
        CorfError::Configuration(_) => CorfStatus::Configuration,
        CorfError::InvalidCell(_) => CorfStatus::InvalidCell,
        CorfError::Divergence { .. } => CorfStatus::Divergence,
        CorfError::Data(_) => CorfStatus::Data,
    }
}

enum Failure {
    Null(&'static str),
    Corf(CorfError),
}

impl From<CorfError> for Failure {
    fn from(e: CorfError) -> Self {
        Failure::Corf(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CorfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CorfStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed as {what}"));
            CorfStatus::NullPointer
        }
        Ok(Err(Failure::Corf(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CorfStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let text = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| CorfError::InvalidParameter("path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(text))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn corf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn corf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `width * height` row-major intensities into a new image.
///
/// # Safety
/// `data` must point to `width * height` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corf_image_new(
    width: usize,
    height: usize,
    data: *const f64,
    out: *mut *mut CorfImage,
) -> CorfStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| CorfError::Dimension("image size overflows".into()))?;
        let pixels = std::slice::from_raw_parts(data, n).to_vec();
        store(out, CorfImage(Image::new(width, height, pixels)?))
    })
}

/// Loads a PNG or PGM file as grayscale.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corf_image_load(path: *const c_char, out: *mut *mut CorfImage) -> CorfStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, CorfImage(corf::load_grayscale(path)?))
    })
}

/// # Safety
/// `image` must be a live handle; the out pointers must be writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn corf_image_size(image: *const CorfImage, width: *mut usize, height: *mut usize) -> CorfStatus {
    guard(|| {
        let image = deref(image, "image")?;
        if let Some(w) = width.as_mut() {
            *w = image.0.width();
        }
        if let Some(h) = height.as_mut() {
            *h = image.0.height();
        }
        Ok(())
    })
}

/// # Safety
/// `image` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn corf_image_free(image: *mut CorfImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Default bank: 17 scales from 1 to 5, 12 orientations, k = 1.8, beta = sigma.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corf_bank_new_default(out: *mut *mut CorfBank) -> CorfStatus {
    guard(|| store(out, CorfBank(build_bank(BankConfig::default())?)))
}

/// Bank over the scale grid `sigma_start..=sigma_end` in `sigma_step`
/// increments. `beta < 0` selects beta = sigma; `k < 0` selects the default.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corf_bank_new(
    sigma_start: f64,
    sigma_end: f64,
    sigma_step: f64,
    orientations: usize,
    k: f64,
    beta: f64,
    out: *mut *mut CorfBank,
) -> CorfStatus {
    guard(|| {
        if orientations == 0 {
            return Err(CorfError::InvalidParameter("need at least one orientation".into()).into());
        }
        let config = BankConfig {
            sigmas: sigma_grid(sigma_start, sigma_end, sigma_step)?,
            orientations: even_orientations(orientations),
            k: if k < 0.0 { DEFAULT_K } else { k },
            beta: if beta < 0.0 {
                BetaPolicy::SigmaMultiple(1.0)
            } else {
                BetaPolicy::Fixed(beta)
            },
            rectify: true,
        };
        store(out, CorfBank(build_bank(config)?))
    })
}

/// # Safety
/// `bank` must be a live handle; `channels` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corf_bank_channels(bank: *const CorfBank, channels: *mut usize) -> CorfStatus {
    guard(|| {
        let bank = deref(bank, "bank")?;
        let out = channels.as_mut().ok_or(Failure::Null("channels"))?;
        *out = bank.0.channels();
        Ok(())
    })
}

/// # Safety
/// `bank` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn corf_bank_free(bank: *mut CorfBank) {
    if !bank.is_null() {
        drop(Box::from_raw(bank));
    }
}

/// Runs the bank on an image.
///
/// # Safety
/// `bank` and `image` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corf_bank_apply(
    bank: *const CorfBank,
    image: *const CorfImage,
    out: *mut *mut CorfTensor,
) -> CorfStatus {
    guard(|| {
        let bank = deref(bank, "bank")?;
        let image = deref(image, "image")?;
        store(out, CorfTensor(apply_bank(&image.0, &bank.0)?))
    })
}

/// # Safety
/// `tensor` must be a live handle; the out pointers must be writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn corf_tensor_shape(
    tensor: *const CorfTensor,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> CorfStatus {
    guard(|| {
        let t = &deref(tensor, "tensor")?.0;
        for (p, v) in [(height, t.height()), (width, t.width()), (channels, t.channels())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Borrowed pointer to the `height * width * channels` values, channel-major.
/// Valid while the tensor lives. Returns NULL for a NULL handle.
///
/// # Safety
/// `tensor` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn corf_tensor_data(tensor: *const CorfTensor) -> *const f32 {
    tensor.as_ref().map_or(ptr::null(), |t| t.0.data().as_ptr())
}

/// Writes the tensor in the binary `CORF` format.
///
/// # Safety
/// `tensor` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn corf_tensor_export(tensor: *const CorfTensor, path: *const c_char) -> CorfStatus {
    guard(|| {
        let t = deref(tensor, "tensor")?;
        export_tensor(&t.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corf_tensor_import(path: *const c_char, out: *mut *mut CorfTensor) -> CorfStatus {
    guard(|| {
        let path = path_arg(path)?;
        store(out, CorfTensor(import_tensor(path)?))
    })
}

/// Cosine similarity of two same-shape tensors (1 when both are all-zero).
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn corf_feature_stability(
    a: *const CorfTensor,
    b: *const CorfTensor,
    out: *mut f64,
) -> CorfStatus {
    guard(|| {
        let (a, b) = (deref(a, "a")?, deref(b, "b")?);
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = corf::noise::feature_stability(&a.0, &b.0)?;
        Ok(())
    })
}

/// # Safety
/// `tensor` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn corf_tensor_free(tensor: *mut CorfTensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}
