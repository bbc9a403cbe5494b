//! Region descriptors: dense local features pooled by second-order average
//! pooling, mapped through the matrix logarithm, reduced by PCA, plus 3D box
//! statistics of the region's point cloud.

mod bbox3d;
mod local;
mod o2p;
mod pca;
mod region;
mod spin;

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

pub use bbox3d::{
    box_features, box_statistics, point_cloud_features, trimmed_extent, BOX_FEATURES,
    POINT_CLOUD_DIM, TRIM_LEVELS,
};
pub use local::{
    central_pixel, grid_points, lbp_at, lbp_codes, orientation_bins, sift_like_at,
    uniform_lbp_table, GradientField, LocalKind, LBP_DIM, PATCH, SIFT_DIM, STRIDE,
};
pub use o2p::{
    flatten_and_normalize, log_map, o2p_pool, pooled_log, SpdMatrix, DEFAULT_POWER, SPD_EPSILON,
};
pub use pca::{pca_fit, PcaModel};
pub use region::{BlockKind, DescriptorConfig, FrameContext, PcaBank, RegionDescriptor};
pub use spin::{estimate_normal, spin_bin, SpinIndex, DEFAULT_RADII};

use crate::error::{Error, Result};
use crate::imaging::{PointCloud, RgbdFrame, SegmentMask};

/// Location and color appended to every local descriptor.
pub const ENRICHMENT_DIM: usize = 6;

/// Local descriptors (rows) and the pixels they were taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptorSet {
    pub descriptors: DMatrix<f64>,
    pub locations: Vec<(usize, usize)>,
}

impl LocalDescriptorSet {
    pub fn from_rows(rows: &[Vec<f64>], locations: Vec<(usize, usize)>) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        LocalDescriptorSet {
            descriptors: DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]),
            locations,
        }
    }

    pub fn len(&self) -> usize {
        self.descriptors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.descriptors.ncols()
    }
}

/// `[x/W, y/H, depth/10 m, r, g, b]` at a pixel.
pub fn enrichment(frame: &RgbdFrame, x: usize, y: usize) -> [f64; ENRICHMENT_DIM] {
    let (w, h) = frame.dims();
    let i = y * w + x;
    let [r, g, b] = frame.rgb()[i];
    [
        x as f64 / w as f64,
        y as f64 / h as f64,
        frame.depth()[i] / 10.0,
        r,
        g,
        b,
    ]
}

/// Which scalar image the 2-D descriptors run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Intensity,
    Depth,
}

pub fn channel_values(frame: &RgbdFrame, channel: Channel) -> Vec<f64> {
    match channel {
        Channel::Intensity => frame.gray(),
        Channel::Depth => frame.depth().to_vec(),
    }
}

/// ℓ2-normalized SIFT-like or LBP descriptors at the region's grid points,
/// each followed by its enrichment. The masked variant ignores patch pixels
/// outside the region.
pub fn dense_grid_descriptors(
    frame: &RgbdFrame,
    channel: Channel,
    mask: &SegmentMask,
    kind: LocalKind,
    masked: bool,
) -> Result<LocalDescriptorSet> {
    check_mask(frame.dims(), mask)?;
    let (w, h) = frame.dims();
    let values = channel_values(frame, channel);
    let locations = grid_points(mask);
    let m = masked.then_some(mask);
    let rows: Vec<Vec<f64>> = match kind {
        LocalKind::SiftLike => {
            let field = GradientField::new(&values, w, h);
            locations
                .iter()
                .map(|&(x, y)| finish(sift_like_at(&field, x, y, m).to_vec(), frame, x, y))
                .collect()
        }
        LocalKind::Lbp => {
            let codes = lbp_codes(&values, w, h);
            locations
                .iter()
                .map(|&(x, y)| finish(lbp_at(&codes, w, h, x, y, m).to_vec(), frame, x, y))
                .collect()
        }
    };
    Ok(LocalDescriptorSet::from_rows(&rows, locations))
}

pub(crate) fn finish(mut v: Vec<f64>, frame: &RgbdFrame, x: usize, y: usize) -> Vec<f64> {
    local::l2_normalize(&mut v);
    v.extend_from_slice(&enrichment(frame, x, y));
    v
}

fn check_mask(dims: (usize, usize), mask: &SegmentMask) -> Result<()> {
    if mask.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: mask.dims(),
        });
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Region grid points that carry a 3D point; falls back to the valid pixel
/// nearest the region centroid.
pub fn spin_locations(cloud: &PointCloud, mask: &SegmentMask) -> Result<Vec<(usize, usize)>> {
    let w = mask.width();
    let pts: Vec<(usize, usize)> = grid_points(mask)
        .into_iter()
        .filter(|&(x, y)| cloud.point_id(y * w + x).is_some())
        .collect();
    if !pts.is_empty() {
        return Ok(pts);
    }
    let valid = SegmentMask::from_indices(
        w,
        mask.height(),
        mask.iter_indices().filter(|&i| cloud.point_id(i).is_some()),
    );
    if valid.is_empty() {
        return Err(Error::NoValidDepth);
    }
    Ok(vec![central_pixel(&valid)])
}

/// Spin images (one histogram per radius, concatenated, ℓ2-normalized, then
/// enriched) at the region's grid points. The masked variant only counts
/// neighbors inside the region.
pub fn spin_images(
    frame: &RgbdFrame,
    cloud: &PointCloud,
    mask: &SegmentMask,
    radii: &[f64],
    bins: usize,
    masked: bool,
) -> Result<LocalDescriptorSet> {
    check_mask(frame.dims(), mask)?;
    let cell = radii.iter().copied().fold(0.0, f64::max);
    let index = SpinIndex::new(cloud.points().to_vec(), cell);
    let locations = spin_locations(cloud, mask)?;
    let w = frame.width();
    let rows: Vec<Vec<f64>> = locations
        .iter()
        .map(|&(x, y)| {
            let pixel = y * w + x;
            let id = cloud.point_id(pixel).expect("valid location");
            let n = estimate_normal(cloud, pixel).expect("valid location");
            let hist = index.histograms(id, &n, radii, bins, |j| {
                !masked || mask.contains_index(cloud.pixel_index()[j])
            });
            finish(hist, frame, x, y)
        })
        .collect();
    Ok(LocalDescriptorSet::from_rows(&rows, locations))
}

const DESCRIPTOR_MAGIC: u32 = 0x4453_4443;
const DESCRIPTOR_VERSION: u32 = 1;

/// Writes rows as `magic, version, n_regions, dim` (u32 LE) followed by
/// row-major f32 LE values.
pub fn write_descriptor_file(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DescriptorDim {
            expected: dim,
            actual: bad.len(),
        });
    }
    let mut buf = Vec::with_capacity(16 + rows.len() * dim * 4);
    for v in [
        DESCRIPTOR_MAGIC,
        DESCRIPTOR_VERSION,
        rows.len() as u32,
        dim as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for r in rows {
        for &v in r {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_descriptor_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::format(path, "truncated header"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap());
    if word(0) != DESCRIPTOR_MAGIC {
        return Err(Error::format(path, "not a descriptor file"));
    }
    if word(1) != DESCRIPTOR_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported version {}", word(1)),
        ));
    }
    let (n, dim) = (word(2) as usize, word(3) as usize);
    if bytes.len() != 16 + n * dim * 4 {
        return Err(Error::format(
            path,
            format!(
                "expected {} bytes of data, found {}",
                n * dim * 4,
                bytes.len() - 16
            ),
        ));
    }
    Ok(bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect::<Vec<_>>()
        .chunks(dim.max(1))
        .take(n)
        .map(|c| c.to_vec())
        .collect())
}
