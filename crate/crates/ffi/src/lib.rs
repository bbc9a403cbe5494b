//! C ABI over the depthseg library.
//!
//! Objects are opaque handles created by `ds_*_new`/`ds_*_load` functions and
//! released by the matching `ds_*_free`. Every fallible call returns a
//! [`DsStatus`] value as an `int32_t`; the message of the last failure on the calling thread
//! is available from [`ds_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use depthseg::boundaries::{frame_boundaries, BoundaryMap};
use depthseg::imaging::{Intrinsics, RgbdFrame, SegmentMask};
use depthseg::inference::{infer_labeling, Criterion};
use depthseg::pipeline::{propose, PipelineConfig};
use depthseg::proposals::{ObjectnessRanker, ProposalPool};
use depthseg::recognition::LabeledSegment;
use depthseg::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    DimensionMismatch = 5,
    Numerical = 6,
    Panic = 7,
}

/// An RGB-D frame with camera intrinsics.
pub struct DsFrame(RgbdFrame);

/// A per-pixel boundary strength map.
pub struct DsBoundaries(BoundaryMap);

/// A ranked proposal pool.
pub struct DsPool(ProposalPool);

/// Pipeline configuration.
pub struct DsConfig(PipelineConfig);

/// Labeled segments awaiting inference.
pub struct DsSegments {
    width: usize,
    height: usize,
    items: Vec<LabeledSegment>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DsStatus {
    match e {
        Error::Io { .. } => DsStatus::Io,
        Error::Format { .. }
        | Error::MalformedHeader { .. }
        | Error::UnsupportedBitDepth { .. } => DsStatus::Format,
        Error::DimensionMismatch { .. } | Error::DescriptorDim { .. } => {
            DsStatus::DimensionMismatch
        }
        Error::NotPositiveDefinite(_) => DsStatus::Numerical,
        _ => DsStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (DsStatus, String)>) -> i32 {
    let status = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DsStatus::Panic
        }
    };
    status as i32
}

fn lib<T>(r: depthseg::Result<T>) -> Result<T, (DsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (DsStatus, String) {
    (DsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (DsStatus, String) {
    (DsStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (DsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn out_handle<T>(out: *mut *mut T, value: T) -> Result<(), (DsStatus, String)> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a frame from a color PPM, a 16-bit millimeter depth PGM and an
/// `fx fy cx cy` intrinsics file.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_frame_load(
    color_path: *const c_char,
    depth_path: *const c_char,
    intrinsics_path: *const c_char,
    out: *mut *mut DsFrame,
) -> i32 {
    guard(|| {
        let color = PathBuf::from(str_arg(color_path, "color path")?);
        let depth = PathBuf::from(str_arg(depth_path, "depth path")?);
        let intr = lib(Intrinsics::load(&PathBuf::from(str_arg(
            intrinsics_path,
            "intrinsics path",
        )?)))?;
        let frame = lib(RgbdFrame::load(&color, &depth, Some(intr)))?;
        out_handle(out, DsFrame(frame))
    })
}

/// Builds a frame from interleaved 8-bit RGB and depth in meters
/// (0 = invalid), both `width * height` pixels, row-major.
///
/// # Safety
/// `rgb` must hold `3 * width * height` bytes and `depth` `width * height`
/// values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_frame_new(
    width: usize,
    height: usize,
    rgb: *const u8,
    depth: *const f64,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    out: *mut *mut DsFrame,
) -> i32 {
    guard(|| {
        if rgb.is_null() || depth.is_null() {
            return Err(null("pixel buffer"));
        }
        let n = width
            .checked_mul(height)
            .ok_or_else(|| invalid("frame is too large"))?;
        let rgb = std::slice::from_raw_parts(rgb, 3 * n);
        let depth = std::slice::from_raw_parts(depth, n).to_vec();
        let pixels = rgb
            .chunks_exact(3)
            .map(|c| {
                [
                    c[0] as f64 / 255.0,
                    c[1] as f64 / 255.0,
                    c[2] as f64 / 255.0,
                ]
            })
            .collect();
        let frame = lib(RgbdFrame::new(
            width,
            height,
            pixels,
            depth,
            Some(Intrinsics { fx, fy, cx, cy }),
        ))?;
        out_handle(out, DsFrame(frame))
    })
}

/// # Safety
/// `frame` must come from a `ds_frame_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_frame_free(frame: *mut DsFrame) {
    free_handle(frame)
}

/// Default configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_config_new(out: *mut *mut DsConfig) -> i32 {
    guard(|| out_handle(out, DsConfig(PipelineConfig::default())))
}

/// Sets one `key = value` configuration entry. Constraints spanning
/// several keys are checked when the configuration is used.
///
/// # Safety
/// `config` must be a live handle; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ds_config_set(
    config: *mut DsConfig,
    key: *const c_char,
    value: *const c_char,
) -> i32 {
    guard(|| {
        let config = config.as_mut().ok_or_else(|| null("config"))?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        lib(config.0.set(key, value))
    })
}

/// # Safety
/// `config` must come from [`ds_config_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_config_free(config: *mut DsConfig) {
    free_handle(config)
}

/// Boundary map of a frame (color and, when the config enables it, depth).
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_boundaries_compute(
    frame: *const DsFrame,
    config: *const DsConfig,
    out: *mut *mut DsBoundaries,
) -> i32 {
    guard(|| {
        let frame = frame.as_ref().ok_or_else(|| null("frame"))?;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        let map = frame_boundaries(&frame.0, config.0.use_depth, &config.0.gradient_params());
        out_handle(out, DsBoundaries(map))
    })
}

/// Copies the `width * height` boundary values into `values`.
///
/// # Safety
/// `values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_boundaries_values(
    map: *const DsBoundaries,
    values: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("boundaries"))?;
        if values.is_null() {
            return Err(null("values"));
        }
        let src = map.0.values();
        if len != src.len() {
            return Err(invalid(format!(
                "buffer holds {len} values, map has {}",
                src.len()
            )));
        }
        std::slice::from_raw_parts_mut(values, len).copy_from_slice(src);
        Ok(())
    })
}

/// # Safety
/// `map` must come from [`ds_boundaries_compute`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_boundaries_free(map: *mut DsBoundaries) {
    free_handle(map)
}

/// Ranked, diversified proposals from a boundary map with the built-in
/// objectness weights (or the config's ranker file).
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_propose(
    map: *const DsBoundaries,
    config: *const DsConfig,
    out: *mut *mut DsPool,
) -> i32 {
    guard(|| {
        let map = map.as_ref().ok_or_else(|| null("boundaries"))?;
        let config = config.as_ref().ok_or_else(|| null("config"))?;
        lib(config.0.validate())?;
        let ranker = match &config.0.ranker {
            Some(p) => lib(ObjectnessRanker::load(p))?,
            None => ObjectnessRanker::default(),
        };
        let pool = lib(propose(&map.0, &config.0, &ranker))?;
        out_handle(out, DsPool(pool))
    })
}

/// Number of proposals, 0 for a null handle.
///
/// # Safety
/// `pool` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn ds_pool_len(pool: *const DsPool) -> usize {
    pool.as_ref().map_or(0, |p| p.0.len())
}

/// Writes proposal `index` as `width * height` bytes (1 = foreground) and
/// its objectness score.
///
/// # Safety
/// `mask` must hold `len` bytes; `score` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn ds_pool_mask(
    pool: *const DsPool,
    index: usize,
    mask: *mut u8,
    len: usize,
    score: *mut f64,
) -> i32 {
    guard(|| {
        let pool = pool.as_ref().ok_or_else(|| null("pool"))?;
        let m = pool
            .0
            .masks
            .get(index)
            .ok_or_else(|| invalid(format!("no proposal {index}")))?;
        if mask.is_null() {
            return Err(null("mask"));
        }
        let (w, h) = m.dims();
        if len != w * h {
            return Err(invalid(format!(
                "buffer holds {len} bytes, mask has {}",
                w * h
            )));
        }
        let dst = std::slice::from_raw_parts_mut(mask, len);
        for (d, b) in dst.iter_mut().zip(m.to_bools()) {
            *d = u8::from(b);
        }
        if !score.is_null() {
            *score = pool.0.objectness[index];
        }
        Ok(())
    })
}

/// # Safety
/// `pool` must come from [`ds_propose`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_pool_free(pool: *mut DsPool) {
    free_handle(pool)
}

/// Empty segment list for `width × height` masks.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_segments_new(
    width: usize,
    height: usize,
    out: *mut *mut DsSegments,
) -> i32 {
    guard(|| {
        if width == 0 || height == 0 {
            return Err(invalid("masks must be non-empty"));
        }
        out_handle(
            out,
            DsSegments {
                width,
                height,
                items: Vec::new(),
            },
        )
    })
}

/// Appends a labeled segment given as `width * height` bytes (nonzero =
/// inside).
///
/// # Safety
/// `mask` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ds_segments_add(
    segments: *mut DsSegments,
    mask: *const u8,
    len: usize,
    class_id: u32,
    confidence: f64,
) -> i32 {
    guard(|| {
        let s = segments.as_mut().ok_or_else(|| null("segments"))?;
        if mask.is_null() {
            return Err(null("mask"));
        }
        if len != s.width * s.height {
            return Err((
                DsStatus::DimensionMismatch,
                format!("mask has {len} bytes, expected {}", s.width * s.height),
            ));
        }
        let bits: Vec<bool> = std::slice::from_raw_parts(mask, len)
            .iter()
            .map(|&b| b != 0)
            .collect();
        let mask = lib(SegmentMask::from_bools(s.width, s.height, &bits))?;
        s.items.push(LabeledSegment {
            mask,
            class_id,
            confidence,
        });
        Ok(())
    })
}

/// Criterion codes accepted by [`ds_infer`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsCriterion {
    Overlap = 0,
    OverlapConfidence = 1,
    Confidence = 2,
}

/// Paints the `max_segments` most confident segments and writes the class
/// of every pixel (0 = unlabeled) into `class_map`.
///
/// # Safety
/// `class_map` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn ds_infer(
    segments: *const DsSegments,
    max_segments: usize,
    criterion: i32,
    class_map: *mut u32,
    len: usize,
) -> i32 {
    guard(|| {
        let s = segments.as_ref().ok_or_else(|| null("segments"))?;
        if class_map.is_null() {
            return Err(null("class map"));
        }
        if len != s.width * s.height {
            return Err((
                DsStatus::DimensionMismatch,
                format!(
                    "class map holds {len} values, expected {}",
                    s.width * s.height
                ),
            ));
        }
        let criterion = match criterion {
            c if c == DsCriterion::Overlap as i32 => Criterion::Overlap,
            c if c == DsCriterion::OverlapConfidence as i32 => Criterion::OverlapConfidence,
            c if c == DsCriterion::Confidence as i32 => Criterion::Confidence,
            c => return Err(invalid(format!("unknown criterion {c}"))),
        };
        let labeling = lib(infer_labeling(&s.items, max_segments, criterion))?;
        std::slice::from_raw_parts_mut(class_map, len).copy_from_slice(labeling.class_map());
        Ok(())
    })
}

/// # Safety
/// `segments` must come from [`ds_segments_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn ds_segments_free(segments: *mut DsSegments) {
    free_handle(segments)
}
