//! C ABI over the logoscope core.
//!
//! Every fallible call returns an [`LsStatus`]; on failure the message is
//! kept per thread and read with [`ls_last_error_message`]. Objects are
//! opaque handles released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use logoscope::corpus::{classify_shape, dominant_color, ColorBucket, ShapeBucket};
use logoscope::metrics::calibration::{brier, ece};
use logoscope::perturb::{apply_perturbation, Perturbation, PerturbationKind, PerturbationSpec, RotationProfile};
use logoscope::probe::{
    ablate, fit_probe, pool, random_placebo, top_k, AblationMask, EmbeddingMatrix, MaskOrigin, PooledFeature,
    ProbeModel,
};
use logoscope::{Error, ImageBuffer};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Upstream = 4,
    Invariant = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsColorBucket {
    BlackWhite = 0,
    Silver = 1,
    Red = 2,
    Yellow = 3,
    Blue = 4,
    Green = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsShapeBucket {
    Circle = 0,
    Square = 1,
    Triangle = 2,
    Irregular = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsPerturbation {
    Blur = 0,
    FlipH = 1,
    FlipV = 2,
    InvertColor = 3,
    Occlusion = 4,
    Rotate180 = 5,
    Rotate90 = 6,
    RotateRandom = 7,
    Sharpen = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsRotation {
    FullCircle = 0,
    Narrow = 1,
}

pub struct LsImage(ImageBuffer);
pub struct LsEmbedding(EmbeddingMatrix);
pub struct LsMask(AblationMask);
pub struct LsProbe(ProbeModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LsStatus {
    match e {
        Error::Io { .. } => LsStatus::Io,
        _ => match e.exit_code() {
            2 => LsStatus::InvalidArgument,
            3 => LsStatus::Upstream,
            _ => LsStatus::Invariant,
        },
    }
}

enum Fail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Run `f`, record any error or panic, and map it to a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            LsStatus::NullPointer
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LsStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ls_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- images

/// Copy `len` bytes of row-major 8-bit pixels (3 or 4 channels) into a new image.
///
/// # Safety
/// `pixels` must point to `len` readable bytes and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ls_image_new(
    width: u32,
    height: u32,
    channels: u8,
    pixels: *const u8,
    len: usize,
    out: *mut *mut LsImage,
) -> LsStatus {
    guard(|| {
        let px = slice(pixels, len, "pixels")?.to_vec();
        let dst = self::out(out, "out")?;
        *dst = boxed(LsImage(ImageBuffer::new(width, height, channels, px)?));
        Ok(())
    })
}

/// # Safety
/// `file` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_image_load(file: *const c_char, out: *mut *mut LsImage) -> LsStatus {
    guard(|| {
        let p = path(file)?;
        let dst = self::out(out, "out")?;
        *dst = boxed(LsImage(ImageBuffer::load(p)?));
        Ok(())
    })
}

/// Borrow the pixel buffer. The pointer lives as long as the image.
///
/// # Safety
/// All pointers must be valid; `img` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn ls_image_pixels(
    img: *const LsImage,
    width: *mut u32,
    height: *mut u32,
    channels: *mut u8,
    pixels: *mut *const u8,
    len: *mut usize,
) -> LsStatus {
    guard(|| {
        let im = &obj(img, "img")?.0;
        *out(width, "width")? = im.width();
        *out(height, "height")? = im.height();
        *out(channels, "channels")? = im.channels();
        *out(pixels, "pixels")? = im.pixels().as_ptr();
        *out(len, "len")? = im.pixels().len();
        Ok(())
    })
}

/// # Safety
/// `img` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ls_image_free(img: *mut LsImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// # Safety
/// `img` must be a live image; `bucket` and `hue_gap` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_dominant_color(
    img: *const LsImage,
    bucket: *mut LsColorBucket,
    hue_gap: *mut bool,
) -> LsStatus {
    guard(|| {
        let a = dominant_color(&obj(img, "img")?.0);
        *out(bucket, "bucket")? = match a.bucket {
            ColorBucket::BlackWhite => LsColorBucket::BlackWhite,
            ColorBucket::Silver => LsColorBucket::Silver,
            ColorBucket::Red => LsColorBucket::Red,
            ColorBucket::Yellow => LsColorBucket::Yellow,
            ColorBucket::Blue => LsColorBucket::Blue,
            ColorBucket::Green => LsColorBucket::Green,
        };
        *out(hue_gap, "hue_gap")? = a.unassigned_hue;
        Ok(())
    })
}

/// # Safety
/// `img` must be a live image; `bucket` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_classify_shape(img: *const LsImage, bucket: *mut LsShapeBucket) -> LsStatus {
    guard(|| {
        let s = classify_shape(&obj(img, "img")?.0)?;
        *out(bucket, "bucket")? = match s {
            ShapeBucket::Circle => LsShapeBucket::Circle,
            ShapeBucket::Square => LsShapeBucket::Square,
            ShapeBucket::Triangle => LsShapeBucket::Triangle,
            ShapeBucket::Irregular => LsShapeBucket::Irregular,
        };
        Ok(())
    })
}

/// Apply one standard perturbation with an explicit seed.
///
/// # Safety
/// `img` must be a live image; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_perturb(
    img: *const LsImage,
    kind: LsPerturbation,
    rotation: LsRotation,
    seed: u64,
    out: *mut *mut LsImage,
) -> LsStatus {
    guard(|| {
        let src = &obj(img, "img")?.0;
        let kind = PerturbationKind::ALL[kind as usize];
        let rotation = match rotation {
            LsRotation::FullCircle => RotationProfile::FullCircle,
            LsRotation::Narrow => RotationProfile::Narrow,
        };
        let spec = PerturbationSpec { perturbation: Perturbation::standard(kind, rotation), seed };
        let dst = self::out(out, "out")?;
        *dst = boxed(LsImage(apply_perturbation(&spec, src)?));
        Ok(())
    })
}

// ---- embeddings and masks

/// # Safety
/// `file` must be a NUL-terminated path; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_embedding_read(file: *const c_char, out: *mut *mut LsEmbedding) -> LsStatus {
    guard(|| {
        let p = path(file)?;
        let dst = self::out(out, "out")?;
        *dst = boxed(LsEmbedding(EmbeddingMatrix::read(p)?));
        Ok(())
    })
}

/// Build an embedding from `n * d` row-major values.
///
/// # Safety
/// `logo_id` must be NUL-terminated, `values` must hold `n * d` floats.
#[no_mangle]
pub unsafe extern "C" fn ls_embedding_new(
    logo_id: *const c_char,
    n: usize,
    d: usize,
    values: *const f32,
    out: *mut *mut LsEmbedding,
) -> LsStatus {
    guard(|| {
        if logo_id.is_null() {
            return Err(Fail::Null("logo_id"));
        }
        let id = CStr::from_ptr(logo_id).to_string_lossy();
        let total = n.checked_mul(d).ok_or_else(|| Error::InvalidArgument("n * d overflows".into()))?;
        let v = slice(values, total, "values")?;
        let rows: Vec<Vec<f32>> = if d == 0 { vec![vec![]; n] } else { v.chunks(d).map(<[f32]>::to_vec).collect() };
        let dst = self::out(out, "out")?;
        *dst = boxed(LsEmbedding(EmbeddingMatrix::from_rows(&id, &rows)?));
        Ok(())
    })
}

/// # Safety
/// `emb` must be live; `file` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ls_embedding_write(emb: *const LsEmbedding, file: *const c_char) -> LsStatus {
    guard(|| {
        let e = &obj(emb, "emb")?.0;
        e.write(path(file)?)?;
        Ok(())
    })
}

/// # Safety
/// `emb` must be live; `n`, `d` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_embedding_dims(emb: *const LsEmbedding, n: *mut usize, d: *mut usize) -> LsStatus {
    guard(|| {
        let e = &obj(emb, "emb")?.0;
        *out(n, "n")? = e.n();
        *out(d, "d")? = e.d();
        Ok(())
    })
}

/// Mean over tokens into `pooled`, which must hold `d` doubles.
///
/// # Safety
/// `emb` must be live; `pooled` must have room for `d` values.
#[no_mangle]
pub unsafe extern "C" fn ls_pool(emb: *const LsEmbedding, pooled: *mut f64, d: usize) -> LsStatus {
    guard(|| {
        let e = &obj(emb, "emb")?.0;
        if d != e.d() {
            return Err(Error::DimensionMismatch { expected: e.d(), got: d }.into());
        }
        if pooled.is_null() {
            return Err(Fail::Null("pooled"));
        }
        std::slice::from_raw_parts_mut(pooled, d).copy_from_slice(&pool(e));
        Ok(())
    })
}

/// Copy of `emb` with the masked coordinates zeroed in every token.
///
/// # Safety
/// `emb` and `mask` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_ablate(
    emb: *const LsEmbedding,
    mask: *const LsMask,
    out: *mut *mut LsEmbedding,
) -> LsStatus {
    guard(|| {
        let z = ablate(&obj(emb, "emb")?.0, &obj(mask, "mask")?.0)?;
        *self::out(out, "out")? = boxed(LsEmbedding(z));
        Ok(())
    })
}

/// # Safety
/// `emb` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ls_embedding_free(emb: *mut LsEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Mask of the `k` largest-|w| coordinates of a `d`-vector.
///
/// # Safety
/// `w` must hold `d` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_mask_top_k(w: *const f64, d: usize, k: usize, out: *mut *mut LsMask) -> LsStatus {
    guard(|| {
        let w = slice(w, d, "w")?;
        let m = AblationMask::new(MaskOrigin::Probe, d, top_k(w, k)?, None)?;
        *self::out(out, "out")? = boxed(LsMask(m));
        Ok(())
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ls_mask_placebo(d: usize, k: usize, seed: u64, out: *mut *mut LsMask) -> LsStatus {
    guard(|| {
        *self::out(out, "out")? = boxed(LsMask(random_placebo(d, k, seed)?));
        Ok(())
    })
}

/// # Safety
/// `file` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_mask_load(file: *const c_char, out: *mut *mut LsMask) -> LsStatus {
    guard(|| {
        let p = path(file)?;
        *self::out(out, "out")? = boxed(LsMask(AblationMask::load(p)?));
        Ok(())
    })
}

/// Borrow the sorted indices. The pointer lives as long as the mask.
///
/// # Safety
/// `mask` must be live; `indices` and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_mask_indices(mask: *const LsMask, indices: *mut *const usize, len: *mut usize) -> LsStatus {
    guard(|| {
        let m = &obj(mask, "mask")?.0;
        *out(indices, "indices")? = m.indices.as_ptr();
        *out(len, "len")? = m.indices.len();
        Ok(())
    })
}

/// # Safety
/// `mask` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ls_mask_free(mask: *mut LsMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

// ---- probe

/// Fit the L1 probe on `m` pooled rows of width `d` (row-major) with 0/1 labels.
///
/// # Safety
/// `x` must hold `m * d` doubles, `labels` `m` bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_probe_fit(
    x: *const f64,
    labels: *const u8,
    m: usize,
    d: usize,
    c: f64,
    out: *mut *mut LsProbe,
) -> LsStatus {
    guard(|| {
        let total = m.checked_mul(d).ok_or_else(|| Error::InvalidArgument("m * d overflows".into()))?;
        let x = slice(x, total, "x")?;
        let y = slice(labels, m, "labels")?;
        if d == 0 {
            return Err(Error::InvalidArgument("d must be positive".into()).into());
        }
        let features: Vec<PooledFeature> = x
            .chunks(d)
            .zip(y)
            .enumerate()
            .map(|(i, (row, &l))| PooledFeature { logo_id: i.to_string(), z_bar: row.to_vec(), label: l != 0 })
            .collect();
        *self::out(out, "out")? = boxed(LsProbe(fit_probe(&features, c)?));
        Ok(())
    })
}

/// Copy the `d` raw-space weights and the intercept.
///
/// # Safety
/// `probe` live; `w` room for `d` doubles; `b` and `nnz` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_probe_weights(
    probe: *const LsProbe,
    w: *mut f64,
    d: usize,
    b: *mut f64,
    nnz: *mut usize,
) -> LsStatus {
    guard(|| {
        let p = &obj(probe, "probe")?.0;
        if d != p.d {
            return Err(Error::DimensionMismatch { expected: p.d, got: d }.into());
        }
        if w.is_null() {
            return Err(Fail::Null("w"));
        }
        std::slice::from_raw_parts_mut(w, d).copy_from_slice(&p.w);
        *out(b, "b")? = p.b;
        *out(nnz, "nnz")? = p.nnz();
        Ok(())
    })
}

/// # Safety
/// `probe` live; `z` holds `d` doubles; `prob` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_probe_predict(probe: *const LsProbe, z: *const f64, d: usize, prob: *mut f64) -> LsStatus {
    guard(|| {
        let p = &obj(probe, "probe")?.0;
        *out(prob, "prob")? = p.predict_proba(slice(z, d, "z")?)?;
        Ok(())
    })
}

/// # Safety
/// `probe` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn ls_probe_free(probe: *mut LsProbe) {
    if !probe.is_null() {
        drop(Box::from_raw(probe));
    }
}

// ---- calibration

unsafe fn prob_label(probs: *const f64, labels: *const u8, n: usize) -> Result<(Vec<f64>, Vec<bool>), Fail> {
    Ok((slice(probs, n, "probs")?.to_vec(), slice(labels, n, "labels")?.iter().map(|&l| l != 0).collect()))
}

/// Expected calibration error over `bins` equal-width bins.
///
/// # Safety
/// `probs` and `labels` hold `n` entries; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_ece(probs: *const f64, labels: *const u8, n: usize, bins: usize, out: *mut f64) -> LsStatus {
    guard(|| {
        let (p, y) = prob_label(probs, labels, n)?;
        *self::out(out, "out")? = ece(&p, &y, bins)?;
        Ok(())
    })
}

/// # Safety
/// `probs` and `labels` hold `n` entries; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ls_brier(probs: *const f64, labels: *const u8, n: usize, out: *mut f64) -> LsStatus {
    guard(|| {
        let (p, y) = prob_label(probs, labels, n)?;
        *self::out(out, "out")? = brier(&p, &y)?;
        Ok(())
    })
}
