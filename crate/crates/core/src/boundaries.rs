//! Boundary-probability maps for the color and depth channels, their fusion,
//! and the contrast-sensitive pairwise penalty built on top of them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::RgbdFrame;

/// Per-pixel boundary strength in [0,1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl BoundaryMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (values.len(), 1),
            });
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("boundary map", "values must lie in [0,1]"));
        }
        Ok(BoundaryMap {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        BoundaryMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Reads the raw map format: `width, height, 1` as u32 LE, then f32 LE samples.
    pub fn read_raw(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 12 {
            return Err(Error::format(path, "shorter than the 12-byte header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let (w, h, c) = (word(0) as usize, word(1) as usize, word(2));
        if c != 1 {
            return Err(Error::format(
                path,
                format!("expected 1 channel, found {c}"),
            ));
        }
        if bytes.len() != 12 + 4 * w * h {
            return Err(Error::format(
                path,
                format!(
                    "{w}x{h} map needs {} bytes, file has {}",
                    12 + 4 * w * h,
                    bytes.len()
                ),
            ));
        }
        let values = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        BoundaryMap::new(w, h, values).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(12 + 4 * self.values.len());
        for v in [self.width as u32, self.height as u32, 1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for &v in &self.values {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Parameters of the gradient-based boundary estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientParams {
    /// Gaussian blur scales in pixels.
    pub scales: Vec<f64>,
    pub orientations: usize,
    /// Normalization percentile in (0,1].
    pub percentile: f64,
    /// Thin responses to one-pixel ridges before normalization.
    pub thin: bool,
}

impl Default for GradientParams {
    fn default() -> Self {
        GradientParams {
            scales: vec![1.0, 2.0],
            orientations: 4,
            percentile: 0.99,
            thin: true,
        }
    }
}

pub(crate) fn gaussian_kernels(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut g: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    let dg = (-radius..=radius)
        .zip(&g)
        .map(|(k, gv)| -(k as f64) / (sigma * sigma) * gv)
        .collect();
    (g, dg)
}

fn convolve_rows(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let xx = (x as isize + i as isize - r).clamp(0, width as isize - 1) as usize;
                acc += k * row[xx];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for (i, k) in kernel.iter().enumerate() {
            let yy = (y as isize + i as isize - r).clamp(0, height as isize - 1) as usize;
            let src_row = &src[yy * width..(yy + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += k * s;
            }
        }
    }
    out
}

/// Scale-normalized Gaussian-derivative gradient `(gx, gy)` at one blur scale,
/// with edge replication at the borders.
pub fn gaussian_gradient(
    channel: &[f64],
    width: usize,
    height: usize,
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (g, dg) = gaussian_kernels(sigma);
    let gx = convolve_cols(
        &convolve_rows(channel, width, height, &dg),
        width,
        height,
        &g,
    );
    let gy = convolve_cols(
        &convolve_rows(channel, width, height, &g),
        width,
        height,
        &dg,
    );
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x * sigma).collect::<Vec<_>>();
    (scale(gx), scale(gy))
}

/// Per-pixel maximum over scales and orientations of the absolute oriented
/// derivative, together with the index of the winning orientation.
pub fn oriented_gradient_response(
    channel: &[f64],
    width: usize,
    height: usize,
    params: &GradientParams,
) -> (Vec<f64>, Vec<usize>) {
    let n = width * height;
    let mut best = vec![0.0f64; n];
    let mut best_dir = vec![0usize; n];
    let dirs: Vec<(f64, f64)> = (0..params.orientations)
        .map(|j| {
            let t = std::f64::consts::PI * j as f64 / params.orientations as f64;
            (t.cos(), t.sin())
        })
        .collect();
    for &sigma in &params.scales {
        let (gx, gy) = gaussian_gradient(channel, width, height, sigma);
        for i in 0..n {
            for (j, (c, s)) in dirs.iter().enumerate() {
                let r = (c * gx[i] + s * gy[i]).abs();
                if r > best[i] {
                    best[i] = r;
                    best_dir[i] = j;
                }
            }
        }
    }
    (best, best_dir)
}

/// Keeps pixels that are maximal along their gradient direction. Of two equal
/// neighbors the one with the larger coordinate survives so a step between
/// pixels yields a one-pixel ridge.
fn thin_ridges(
    response: &[f64],
    dirs: &[usize],
    orientations: usize,
    width: usize,
    height: usize,
) -> Vec<f64> {
    let peak = response.iter().cloned().fold(0.0, f64::max);
    let tie = 1e-9 * peak;
    let mut out = vec![0.0; response.len()];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let m = response[i];
            if m <= 0.0 {
                continue;
            }
            let t = std::f64::consts::PI * dirs[i] as f64 / orientations as f64;
            let (dx, dy) = (t.cos().round() as isize, t.sin().round() as isize);
            let at = |ox: isize, oy: isize| {
                let xx = (x as isize + ox).clamp(0, width as isize - 1) as usize;
                let yy = (y as isize + oy).clamp(0, height as isize - 1) as usize;
                response[yy * width + xx]
            };
            let prev = at(-dx, -dy);
            let next = at(dx, dy);
            if m >= prev - tie && m > next + tie {
                out[i] = m;
            }
        }
    }
    out
}

fn percentile_normalize(values: &mut [f64], percentile: f64) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percentile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let mut scale = sorted[rank - 1];
    if scale <= 0.0 {
        scale = *sorted.last().unwrap();
    }
    if scale <= 0.0 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    values
        .iter_mut()
        .for_each(|v| *v = (*v / scale).clamp(0.0, 1.0));
}

/// Gradient-based boundary map with the default parameters.
pub fn estimate_boundaries(channel: &[f64], width: usize, height: usize) -> BoundaryMap {
    estimate_boundaries_with(channel, width, height, &GradientParams::default())
}

pub fn estimate_boundaries_with(
    channel: &[f64],
    width: usize,
    height: usize,
    params: &GradientParams,
) -> BoundaryMap {
    assert_eq!(channel.len(), width * height, "channel size");
    let (response, dirs) = oriented_gradient_response(channel, width, height, params);
    let mut values = if params.thin {
        thin_ridges(&response, &dirs, params.orientations, width, height)
    } else {
        response
    };
    percentile_normalize(&mut values, params.percentile);
    BoundaryMap {
        width,
        height,
        values,
    }
}

/// Boundary map of a multi-channel image: the per-pixel maximum response over
/// channels, thinned and normalized as one map.
pub fn estimate_multichannel_boundaries(
    channels: &[Vec<f64>],
    width: usize,
    height: usize,
    params: &GradientParams,
) -> BoundaryMap {
    let n = width * height;
    let mut response = vec![0.0f64; n];
    let mut dirs = vec![0usize; n];
    for channel in channels {
        assert_eq!(channel.len(), n, "channel size");
        let (r, d) = oriented_gradient_response(channel, width, height, params);
        for i in 0..n {
            if r[i] > response[i] {
                response[i] = r[i];
                dirs[i] = d[i];
            }
        }
    }
    let mut values = if params.thin {
        thin_ridges(&response, &dirs, params.orientations, width, height)
    } else {
        response
    };
    percentile_normalize(&mut values, params.percentile);
    BoundaryMap {
        width,
        height,
        values,
    }
}

/// Color boundaries from the three RGB channels.
pub fn color_boundaries(frame: &RgbdFrame, params: &GradientParams) -> BoundaryMap {
    let channels: Vec<Vec<f64>> = (0..3)
        .map(|c| frame.rgb().iter().map(|p| p[c]).collect())
        .collect();
    estimate_multichannel_boundaries(&channels, frame.width(), frame.height(), params)
}

/// Boundaries of the raw metric depth image.
pub fn depth_boundaries(frame: &RgbdFrame, params: &GradientParams) -> BoundaryMap {
    estimate_boundaries_with(frame.depth(), frame.width(), frame.height(), params)
}

/// Fused color+depth map, or the color map alone when `use_depth` is false.
pub fn frame_boundaries(
    frame: &RgbdFrame,
    use_depth: bool,
    params: &GradientParams,
) -> BoundaryMap {
    let rgb = color_boundaries(frame, params);
    if use_depth {
        fuse_boundaries(&rgb, &depth_boundaries(frame, params)).expect("same frame dimensions")
    } else {
        rgb
    }
}

/// Per-pixel maximum of two maps.
pub fn fuse_boundaries(rgb_map: &BoundaryMap, depth_map: &BoundaryMap) -> Result<BoundaryMap> {
    if rgb_map.dims() != depth_map.dims() {
        return Err(Error::DimensionMismatch {
            expected: rgb_map.dims(),
            actual: depth_map.dims(),
        });
    }
    Ok(BoundaryMap {
        width: rgb_map.width,
        height: rgb_map.height,
        values: rgb_map
            .values
            .iter()
            .zip(&depth_map.values)
            .map(|(a, b)| a.max(*b))
            .collect(),
    })
}

/// `exp(-max(map(x), map(y)) / sigma^2)`.
pub fn pairwise_penalty(
    map: &BoundaryMap,
    x: (usize, usize),
    y: (usize, usize),
    sigma: f64,
) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
    }
    for (px, py) in [x, y] {
        if px >= map.width || py >= map.height {
            return Err(Error::param(
                "pixel",
                format!("({px},{py}) outside {}x{}", map.width, map.height),
            ));
        }
    }
    Ok(penalty_value(map.get(x.0, x.1), map.get(y.0, y.1), sigma))
}

#[inline]
pub(crate) fn penalty_value(bx: f64, by: f64, sigma: f64) -> f64 {
    (-bx.max(by) / (sigma * sigma)).exp()
}
