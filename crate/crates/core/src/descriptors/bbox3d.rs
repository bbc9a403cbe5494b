//! Axis-aligned 3D box statistics of a region's points at several outlier
//! trimming levels.

use crate::error::{Error, Result};
use crate::imaging::{PointCloud, SegmentMask};

pub const BOX_FEATURES: usize = 11;
pub const TRIM_LEVELS: [f64; 4] = [0.0, 0.025, 0.05, 0.075];
pub const POINT_CLOUD_DIM: usize = BOX_FEATURES * TRIM_LEVELS.len();

/// `[volume, surface, diagonal, perimeter, min side, median side, max side,
///   sx, sy, sz, min/max side]` of a box with side lengths `s`.
pub fn box_statistics(s: [f64; 3]) -> [f64; BOX_FEATURES] {
    let [sx, sy, sz] = s;
    let mut sorted = s;
    sorted.sort_by(f64::total_cmp);
    let aspect = if sorted[2] > 0.0 {
        sorted[0] / sorted[2]
    } else {
        0.0
    };
    [
        sx * sy * sz,
        2.0 * (sx * sy + sy * sz + sx * sz),
        (sx * sx + sy * sy + sz * sz).sqrt(),
        4.0 * (sx + sy + sz),
        sorted[0],
        sorted[1],
        sorted[2],
        sx,
        sy,
        sz,
        aspect,
    ]
}

/// Side lengths of the bounding box left after discarding the
/// `round(q·N)` most extremal points. A point's extremality is its smallest
/// rank distance to either end of any axis ordering, so points near the box
/// faces go first; ties keep the lower index.
pub fn trimmed_extent(points: &[[f64; 3]], q: f64) -> [f64; 3] {
    let n = points.len();
    let drop = ((q * n as f64).round() as usize).min(n.saturating_sub(1));
    let keep: Vec<usize> = if drop == 0 {
        (0..n).collect()
    } else {
        let mut depth = vec![usize::MAX; n];
        for axis in 0..3 {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
            for (rank, &i) in order.iter().enumerate() {
                depth[i] = depth[i].min(rank.min(n - 1 - rank));
            }
        }
        let mut by_depth: Vec<usize> = (0..n).collect();
        by_depth.sort_by(|&a, &b| depth[a].cmp(&depth[b]).then(a.cmp(&b)));
        by_depth[drop..].to_vec()
    };
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &keep {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
}

/// Box statistics of raw points at every trimming level, concatenated.
pub fn box_features(points: &[[f64; 3]]) -> Result<[f64; POINT_CLOUD_DIM]> {
    if points.is_empty() {
        return Err(Error::NoValidDepth);
    }
    let mut out = [0.0; POINT_CLOUD_DIM];
    for (k, &q) in TRIM_LEVELS.iter().enumerate() {
        let stats = box_statistics(trimmed_extent(points, q));
        out[k * BOX_FEATURES..(k + 1) * BOX_FEATURES].copy_from_slice(&stats);
    }
    Ok(out)
}

/// [`box_features`] of the valid 3D points inside `mask`.
pub fn point_cloud_features(
    mask: &SegmentMask,
    cloud: &PointCloud,
) -> Result<[f64; POINT_CLOUD_DIM]> {
    if mask.dims() != cloud.dims() {
        return Err(Error::DimensionMismatch {
            expected: cloud.dims(),
            actual: mask.dims(),
        });
    }
    box_features(&cloud.region_points(mask))
}
