//! Dense SIFT-like gradient histograms and uniform LBP histograms on a
//! stride grid, with optional masking of pixels outside the region.

use std::f64::consts::PI;

use crate::imaging::SegmentMask;

pub const SIFT_DIM: usize = 128;
pub const LBP_DIM: usize = 59;
pub const PATCH: usize = 16;
pub const STRIDE: usize = 4;
const CELLS: usize = 4;
const ORIENTATIONS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalKind {
    SiftLike,
    Lbp,
}

impl LocalKind {
    pub fn dim(self) -> usize {
        match self {
            LocalKind::SiftLike => SIFT_DIM,
            LocalKind::Lbp => LBP_DIM,
        }
    }
}

/// Per-pixel gradient magnitude and direction in `[0, 2π)` from central
/// differences (one-sided at the image edge).
#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    magnitude: Vec<f64>,
    angle: Vec<f64>,
}

impl GradientField {
    pub fn new(channel: &[f64], width: usize, height: usize) -> Self {
        assert_eq!(channel.len(), width * height);
        let at = |x: usize, y: usize| channel[y * width + x];
        let mut magnitude = vec![0.0; width * height];
        let mut angle = vec![0.0; width * height];
        for y in 0..height {
            for x in 0..width {
                let (x0, x1) = (x.saturating_sub(1), (x + 1).min(width - 1));
                let (y0, y1) = (y.saturating_sub(1), (y + 1).min(height - 1));
                let gx = if x1 > x0 {
                    (at(x1, y) - at(x0, y)) / (x1 - x0) as f64
                } else {
                    0.0
                };
                let gy = if y1 > y0 {
                    (at(x, y1) - at(x, y0)) / (y1 - y0) as f64
                } else {
                    0.0
                };
                let i = y * width + x;
                magnitude[i] = gx.hypot(gy);
                angle[i] = gy.atan2(gx).rem_euclid(2.0 * PI);
            }
        }
        GradientField {
            width,
            height,
            magnitude,
            angle,
        }
    }

    pub fn magnitude(&self) -> &[f64] {
        &self.magnitude
    }

    pub fn angle(&self) -> &[f64] {
        &self.angle
    }
}

/// Splits an angle between the two nearest of 8 bins centered at
/// `(k + 0.5)·45°`. Returns `(bin, weight, next bin, weight)`.
pub fn orientation_bins(angle: f64) -> (usize, f64, usize, f64) {
    let t = angle / (2.0 * PI / ORIENTATIONS as f64) - 0.5;
    let f = t.floor();
    let frac = t - f;
    let b0 = (f as i64).rem_euclid(ORIENTATIONS as i64) as usize;
    (b0, 1.0 - frac, (b0 + 1) % ORIENTATIONS, frac)
}

/// Patch pixel range `[c - PATCH/2, c + PATCH/2)` clipped to `[0, n)`.
fn patch_range(c: usize, n: usize) -> std::ops::Range<usize> {
    c.saturating_sub(PATCH / 2)..(c + PATCH / 2).min(n)
}

/// Unnormalized 4×4×8 gradient histogram of the patch centered at `(cx, cy)`.
/// Index layout: `(cell_y * 4 + cell_x) * 8 + orientation`.
pub fn sift_like_at(
    field: &GradientField,
    cx: usize,
    cy: usize,
    mask: Option<&SegmentMask>,
) -> [f64; SIFT_DIM] {
    let mut hist = [0.0; SIFT_DIM];
    let (x_start, y_start) = (
        cx as i64 - (PATCH / 2) as i64,
        cy as i64 - (PATCH / 2) as i64,
    );
    for y in patch_range(cy, field.height) {
        let cell_y = (y as i64 - y_start) as usize / (PATCH / CELLS);
        for x in patch_range(cx, field.width) {
            let i = y * field.width + x;
            if mask.is_some_and(|m| !m.contains_index(i)) {
                continue;
            }
            let m = field.magnitude[i];
            if m == 0.0 {
                continue;
            }
            let cell_x = (x as i64 - x_start) as usize / (PATCH / CELLS);
            let base = (cell_y * CELLS + cell_x) * ORIENTATIONS;
            let (b0, w0, b1, w1) = orientation_bins(field.angle[i]);
            hist[base + b0] += m * w0;
            hist[base + b1] += m * w1;
        }
    }
    hist
}

/// Maps each 8-bit LBP code to one of 58 uniform patterns (at most two 0/1
/// transitions around the ring, numbered in increasing code order) or to the
/// shared non-uniform bin 58.
pub fn uniform_lbp_table() -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut next = 0u8;
    for code in 0..256u32 {
        let rotated = (code >> 1) | ((code & 1) << 7);
        if (code ^ rotated).count_ones() <= 2 {
            table[code as usize] = next;
            next += 1;
        } else {
            table[code as usize] = 58;
        }
    }
    debug_assert_eq!(next, 58);
    table
}

/// Uniform LBP bin of every pixel: ring of the 8 neighbors (edge-replicated),
/// bit set where the neighbor is at least the center value.
pub fn lbp_codes(channel: &[f64], width: usize, height: usize) -> Vec<u8> {
    assert_eq!(channel.len(), width * height);
    let table = uniform_lbp_table();
    const RING: [(i64, i64); 8] = [
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
    ];
    let mut out = vec![0u8; width * height];
    for y in 0..height {
        for x in 0..width {
            let c = channel[y * width + x];
            let mut code = 0usize;
            for (bit, (dx, dy)) in RING.iter().enumerate() {
                let nx = (x as i64 + dx).clamp(0, width as i64 - 1) as usize;
                let ny = (y as i64 + dy).clamp(0, height as i64 - 1) as usize;
                if channel[ny * width + nx] >= c {
                    code |= 1 << bit;
                }
            }
            out[y * width + x] = table[code];
        }
    }
    out
}

/// Unnormalized LBP-bin histogram of the patch centered at `(cx, cy)`.
pub fn lbp_at(
    codes: &[u8],
    width: usize,
    height: usize,
    cx: usize,
    cy: usize,
    mask: Option<&SegmentMask>,
) -> [f64; LBP_DIM] {
    let mut hist = [0.0; LBP_DIM];
    for y in patch_range(cy, height) {
        for x in patch_range(cx, width) {
            let i = y * width + x;
            if mask.is_some_and(|m| !m.contains_index(i)) {
                continue;
            }
            hist[codes[i] as usize] += 1.0;
        }
    }
    hist
}

/// Scales to unit ℓ2 norm; all-zero input stays zero.
pub fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-12 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Grid points `(x, y)` with `x, y ≡ STRIDE/2 (mod STRIDE)` inside the mask.
/// A region too thin to contain one gets the mask pixel nearest its centroid.
pub fn grid_points(mask: &SegmentMask) -> Vec<(usize, usize)> {
    let (w, h) = mask.dims();
    let mut pts = Vec::new();
    let off = STRIDE / 2;
    for y in (off..h).step_by(STRIDE) {
        for x in (off..w).step_by(STRIDE) {
            if mask.get(x, y) {
                pts.push((x, y));
            }
        }
    }
    if pts.is_empty() && !mask.is_empty() {
        pts.push(central_pixel(mask));
    }
    pts
}

/// Mask pixel nearest the mask centroid (lowest index on ties).
pub fn central_pixel(mask: &SegmentMask) -> (usize, usize) {
    let w = mask.width();
    let n = mask.area() as f64;
    let (sx, sy) = mask.iter_indices().fold((0.0, 0.0), |(a, b), i| {
        (a + (i % w) as f64, b + (i / w) as f64)
    });
    let (cx, cy) = (sx / n, sy / n);
    let best = mask
        .iter_indices()
        .min_by(|&a, &b| {
            let da = ((a % w) as f64 - cx).powi(2) + ((a / w) as f64 - cy).powi(2);
            let db = ((b % w) as f64 - cx).powi(2) + ((b / w) as f64 - cy).powi(2);
            da.total_cmp(&db)
        })
        .expect("nonempty mask");
    (best % w, best / w)
}
