//! RGB-D frames, point clouds and binary masks.

mod mask;
pub mod netpbm;

use std::path::Path;

pub use mask::{mask_iou, BBox, SegmentMask};

use crate::error::{Error, Result};

/// Pinhole camera parameters, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Reads a plain-text `fx fy cx cy` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|reason| Error::format(path, reason))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<std::result::Result<_, _>>()?;
        if values.len() != 4 {
            return Err(format!("expected 4 values, found {}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) || values[0] <= 0.0 || values[1] <= 0.0 {
            return Err("focal lengths must be positive and all values finite".into());
        }
        Ok(Intrinsics {
            fx: values[0],
            fy: values[1],
            cx: values[2],
            cy: values[3],
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = format!("{} {} {} {}\n", self.fx, self.fy, self.cx, self.cy);
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Registered color and metric depth images of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    width: usize,
    height: usize,
    rgb: Vec<[f64; 3]>,
    depth: Vec<f64>,
    intrinsics: Option<Intrinsics>,
}

impl RgbdFrame {
    /// `rgb` values must lie in [0,1], `depth` in meters with 0 marking invalid pixels.
    pub fn new(
        width: usize,
        height: usize,
        rgb: Vec<[f64; 3]>,
        depth: Vec<f64>,
        intrinsics: Option<Intrinsics>,
    ) -> Result<Self> {
        let n = width * height;
        if rgb.len() != n || depth.len() != n {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (rgb.len().min(depth.len()), 1),
            });
        }
        if rgb.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("rgb", "values must lie in [0,1]"));
        }
        if depth.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::param("depth", "values must be finite and >= 0"));
        }
        Ok(RgbdFrame {
            width,
            height,
            rgb,
            depth,
            intrinsics,
        })
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

    pub fn rgb(&self) -> &[[f64; 3]] {
        &self.rgb
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn intrinsics(&self) -> Option<Intrinsics> {
        self.intrinsics
    }

    pub fn with_intrinsics(mut self, intrinsics: Intrinsics) -> Self {
        self.intrinsics = Some(intrinsics);
        self
    }

    pub fn is_valid_depth(&self, idx: usize) -> bool {
        self.depth[idx] > 0.0
    }

    /// Rec. 601 luma.
    pub fn gray(&self) -> Vec<f64> {
        self.rgb
            .iter()
            .map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }

    /// Reads a P6 color image and a 16-bit P5 depth image in millimeters.
    pub fn load(
        color_path: &Path,
        depth_path: &Path,
        intrinsics: Option<Intrinsics>,
    ) -> Result<Self> {
        let (cw, ch, rgb8) = netpbm::read_ppm(color_path)?;
        let (dw, dh, mm) = netpbm::read_pgm16(depth_path)?;
        if (cw, ch) != (dw, dh) {
            return Err(Error::DimensionMismatch {
                expected: (cw, ch),
                actual: (dw, dh),
            });
        }
        let rgb = rgb8
            .chunks_exact(3)
            .map(|c| {
                [
                    c[0] as f64 / 255.0,
                    c[1] as f64 / 255.0,
                    c[2] as f64 / 255.0,
                ]
            })
            .collect();
        let depth = mm.iter().map(|&v| v as f64 / 1000.0).collect();
        RgbdFrame::new(cw, ch, rgb, depth, intrinsics)
    }

    /// Writes the color image (8-bit) and depth image (millimeters, rounded).
    pub fn save(&self, color_path: &Path, depth_path: &Path) -> Result<()> {
        let rgb8: Vec<u8> = self
            .rgb
            .iter()
            .flatten()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        netpbm::write_ppm(color_path, self.width, self.height, &rgb8)?;
        let mm: Vec<u16> = self
            .depth
            .iter()
            .map(|d| (d * 1000.0).round().clamp(0.0, 65535.0) as u16)
            .collect();
        netpbm::write_pgm16(depth_path, self.width, self.height, &mm)
    }
}

/// Convenience wrapper around [`RgbdFrame::load`].
pub fn load_frame(
    color_path: &Path,
    depth_path: &Path,
    intrinsics: Option<Intrinsics>,
) -> Result<RgbdFrame> {
    RgbdFrame::load(color_path, depth_path, intrinsics)
}

/// Camera-frame 3D points for every valid-depth pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    width: usize,
    height: usize,
    points: Vec<[f64; 3]>,
    pixel_index: Vec<usize>,
    lookup: Vec<u32>,
}

const NO_POINT: u32 = u32::MAX;

impl PointCloud {
    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn pixel_index(&self) -> &[usize] {
        &self.pixel_index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Position in `points` of the point back-projected from `pixel`.
    pub fn point_id(&self, pixel: usize) -> Option<usize> {
        match self.lookup.get(pixel) {
            Some(&id) if id != NO_POINT => Some(id as usize),
            _ => None,
        }
    }

    pub fn point_at(&self, pixel: usize) -> Option<[f64; 3]> {
        self.point_id(pixel).map(|i| self.points[i])
    }

    /// Points whose source pixel lies in `mask`.
    pub fn region_points(&self, mask: &SegmentMask) -> Vec<[f64; 3]> {
        mask.iter_indices()
            .filter_map(|p| self.point_at(p))
            .collect()
    }

    /// Builds a cloud directly from points, for tests and synthetic data.
    /// Each point is attributed to a distinct pseudo-pixel.
    pub fn from_points(points: Vec<[f64; 3]>) -> Self {
        let n = points.len();
        PointCloud {
            width: n,
            height: 1,
            pixel_index: (0..n).collect(),
            lookup: (0..n as u32).collect(),
            points,
        }
    }

    /// Organized cloud with one point per pixel of a `width × height` grid.
    pub fn from_grid(width: usize, height: usize, points: Vec<[f64; 3]>) -> Self {
        assert_eq!(points.len(), width * height);
        let n = points.len();
        PointCloud {
            width,
            height,
            pixel_index: (0..n).collect(),
            lookup: (0..n as u32).collect(),
            points,
        }
    }
}

/// Pinhole back-projection of all valid-depth pixels.
pub fn backproject(frame: &RgbdFrame) -> Result<PointCloud> {
    let k = frame.intrinsics.ok_or(Error::MissingIntrinsics)?;
    let mut points = Vec::new();
    let mut pixel_index = Vec::new();
    let mut lookup = vec![NO_POINT; frame.width * frame.height];
    for v in 0..frame.height {
        for u in 0..frame.width {
            let idx = v * frame.width + u;
            let z = frame.depth[idx];
            if z <= 0.0 {
                continue;
            }
            lookup[idx] = points.len() as u32;
            points.push([
                (u as f64 - k.cx) * z / k.fx,
                (v as f64 - k.cy) * z / k.fy,
                z,
            ]);
            pixel_index.push(idx);
        }
    }
    Ok(PointCloud {
        width: frame.width,
        height: frame.height,
        points,
        pixel_index,
        lookup,
    })
}
