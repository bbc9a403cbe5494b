use std::ffi::{CStr, CString};
use std::ptr;

use depthseg_ffi::*;

const OK: i32 = DsStatus::Ok as i32;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ds_last_error()) }
        .to_string_lossy()
        .into_owned()
}

/// 64×48 frame: a near box in front of a far wall.
fn box_frame() -> *mut DsFrame {
    let (w, h) = (64usize, 48usize);
    let mut rgb = vec![0u8; w * h * 3];
    let mut depth = vec![3.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let inside = (20..44).contains(&x) && (14..34).contains(&y);
            let c = if inside { [200, 40, 40] } else { [90, 90, 160] };
            rgb[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
            if inside {
                depth[y * w + x] = 1.5;
            }
        }
    }
    let mut frame = ptr::null_mut();
    let s = unsafe {
        ds_frame_new(
            w,
            h,
            rgb.as_ptr(),
            depth.as_ptr(),
            58.0,
            58.0,
            32.0,
            24.0,
            &mut frame,
        )
    };
    assert_eq!(s, OK, "{}", last_error());
    frame
}

fn set(config: *mut DsConfig, key: &str, value: &str) -> i32 {
    let k = CString::new(key).unwrap();
    let v = CString::new(value).unwrap();
    unsafe { ds_config_set(config, k.as_ptr(), v.as_ptr()) }
}

#[test]
fn null_handles_are_reported() {
    let mut out = ptr::null_mut();
    let s = unsafe { ds_boundaries_compute(ptr::null(), ptr::null(), &mut out) };
    assert_eq!(s, DsStatus::NullPointer as i32);
    assert!(last_error().contains("null"));
    assert!(out.is_null());
    assert_eq!(unsafe { ds_pool_len(ptr::null()) }, 0);
    unsafe {
        ds_frame_free(ptr::null_mut());
        ds_pool_free(ptr::null_mut());
    }
}

#[test]
fn config_rejects_bad_values() {
    let mut config = ptr::null_mut();
    assert_eq!(unsafe { ds_config_new(&mut config) }, OK);
    assert_eq!(set(config, "grid", "3"), OK);
    assert_eq!(
        set(config, "grid", "zero"),
        DsStatus::InvalidArgument as i32
    );
    assert!(last_error().contains("grid"));
    assert_eq!(
        set(config, "no_such_key", "1"),
        DsStatus::InvalidArgument as i32
    );
    unsafe { ds_config_free(config) };
}

#[test]
fn missing_files_give_io_errors() {
    let p = CString::new("/nonexistent/color.ppm").unwrap();
    let mut frame = ptr::null_mut();
    let s = unsafe { ds_frame_load(p.as_ptr(), p.as_ptr(), p.as_ptr(), &mut frame) };
    assert_eq!(s, DsStatus::Io as i32);
    assert!(last_error().contains("/nonexistent"));
}

#[test]
fn boundaries_and_proposals_find_the_box() {
    let frame = box_frame();
    let mut config = ptr::null_mut();
    unsafe { ds_config_new(&mut config) };
    assert_eq!(set(config, "grid", "3"), OK);
    assert_eq!(set(config, "sigmas", "0.1"), OK);
    let mut map = ptr::null_mut();
    assert_eq!(
        unsafe { ds_boundaries_compute(frame, config, &mut map) },
        OK
    );
    let mut values = vec![0.0; 64 * 48];
    assert_eq!(
        unsafe { ds_boundaries_values(map, values.as_mut_ptr(), values.len()) },
        OK
    );
    assert!(values[24 * 64 + 20] > values[24 * 64 + 5]);
    let s = unsafe { ds_boundaries_values(map, values.as_mut_ptr(), 10) };
    assert_eq!(s, DsStatus::InvalidArgument as i32);

    let mut pool = ptr::null_mut();
    assert_eq!(
        unsafe { ds_propose(map, config, &mut pool) },
        OK,
        "{}",
        last_error()
    );
    let n = unsafe { ds_pool_len(pool) };
    assert!(n > 0);
    let mut best = 0.0f64;
    let mut mask = vec![0u8; 64 * 48];
    for i in 0..n {
        let mut score = f64::NAN;
        assert_eq!(
            unsafe { ds_pool_mask(pool, i, mask.as_mut_ptr(), mask.len(), &mut score) },
            OK
        );
        assert!(score.is_finite());
        let (mut inter, mut union) = (0, 0);
        for y in 0..48 {
            for x in 0..64 {
                let a = mask[y * 64 + x] == 1;
                let b = (20..44).contains(&x) && (14..34).contains(&y);
                inter += usize::from(a && b);
                union += usize::from(a || b);
            }
        }
        best = best.max(inter as f64 / union as f64);
    }
    assert!(best > 0.9, "best IoU {best}");
    assert_eq!(
        unsafe { ds_pool_mask(pool, n, mask.as_mut_ptr(), mask.len(), ptr::null_mut()) },
        DsStatus::InvalidArgument as i32
    );
    unsafe {
        ds_pool_free(pool);
        ds_boundaries_free(map);
        ds_config_free(config);
        ds_frame_free(frame);
    }
}

#[test]
fn inference_paints_nested_segments() {
    let (w, h) = (8usize, 8usize);
    let mut segs = ptr::null_mut();
    assert_eq!(unsafe { ds_segments_new(w, h, &mut segs) }, OK);
    let outer = vec![1u8; w * h];
    let inner: Vec<u8> = (0..w * h)
        .map(|i| u8::from(i % w < 3 && i / w < 3))
        .collect();
    assert_eq!(
        unsafe { ds_segments_add(segs, outer.as_ptr(), outer.len(), 1, 0.9) },
        OK
    );
    assert_eq!(
        unsafe { ds_segments_add(segs, inner.as_ptr(), inner.len(), 2, 0.2) },
        OK
    );
    let bad = unsafe { ds_segments_add(segs, inner.as_ptr(), 5, 2, 0.2) };
    assert_eq!(bad, DsStatus::DimensionMismatch as i32);

    let mut classes = vec![0u32; w * h];
    let s = unsafe {
        ds_infer(
            segs,
            10,
            DsCriterion::Overlap as i32,
            classes.as_mut_ptr(),
            classes.len(),
        )
    };
    assert_eq!(s, OK);
    assert_eq!(classes[0], 2);
    assert_eq!(classes[w * h - 1], 1);
    let s = unsafe {
        ds_infer(
            segs,
            10,
            DsCriterion::Confidence as i32,
            classes.as_mut_ptr(),
            classes.len(),
        )
    };
    assert_eq!(s, OK);
    assert!(classes.iter().all(|&c| c == 1));
    let s = unsafe { ds_infer(segs, 10, 42, classes.as_mut_ptr(), classes.len()) };
    assert_eq!(s, DsStatus::InvalidArgument as i32);
    unsafe { ds_segments_free(segs) };
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/depthseg.h"))
            .unwrap();
    for name in [
        "ds_last_error",
        "ds_frame_load",
        "ds_frame_new",
        "ds_frame_free",
        "ds_config_new",
        "ds_config_set",
        "ds_config_free",
        "ds_boundaries_compute",
        "ds_boundaries_values",
        "ds_boundaries_free",
        "ds_propose",
        "ds_pool_len",
        "ds_pool_mask",
        "ds_pool_free",
        "ds_segments_new",
        "ds_segments_add",
        "ds_infer",
        "ds_segments_free",
        "typedef struct DsFrame DsFrame",
        "DS_STATUS_DIMENSION_MISMATCH = 5",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
