//! Spin images: 2-D histograms of neighbor positions in the cylindrical frame
//! of a point and its surface normal.

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::imaging::PointCloud;

pub const DEFAULT_RADII: [f64; 2] = [0.3, 0.5];

/// Unit normal at a pixel from a plane fit to the valid points in its 5×5
/// pixel neighborhood, flipped to face the camera. Falls back to the viewing
/// direction when fewer than three neighbors are valid or the fit is
/// degenerate.
pub fn estimate_normal(cloud: &PointCloud, pixel: usize) -> Option<[f64; 3]> {
    let p = cloud.point_at(pixel)?;
    let (w, h) = cloud.dims();
    let (x, y) = ((pixel % w) as i64, (pixel / w) as i64);
    let mut pts = Vec::with_capacity(25);
    for dy in -2..=2 {
        for dx in -2..=2 {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            if let Some(q) = cloud.point_at(ny as usize * w + nx as usize) {
                pts.push(Vector3::from(q));
            }
        }
    }
    let view = Vector3::from(p);
    let toward_camera = -view / view.norm().max(1e-12);
    if pts.len() < 3 {
        return Some(toward_camera.into());
    }
    let mean = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let cov = pts
        .iter()
        .map(|q| (q - mean) * (q - mean).transpose())
        .sum::<Matrix3<f64>>();
    let eig = SymmetricEigen::new(cov);
    let order = {
        let mut o = [0, 1, 2];
        o.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        o
    };
    // a line or a point has no well-defined plane
    if eig.eigenvalues[order[1]] <= 1e-12 * eig.eigenvalues[order[2]].max(1e-300) {
        return Some(toward_camera.into());
    }
    let mut n: Vector3<f64> = eig.eigenvectors.column(order[0]).into();
    n /= n.norm();
    if n.dot(&toward_camera) < 0.0 {
        n = -n;
    }
    Some(n.into())
}

/// `(α, β)` bin of `q` relative to center `p` with unit normal `n`, or
/// `None` when `q` is not strictly within `radius`. α (distance from the
/// normal axis) spans `[0, r)`, β (signed height along the normal) spans
/// `[-r, r)`; the flat index is `β_bin * bins + α_bin`.
pub fn spin_bin(
    p: &[f64; 3],
    n: &[f64; 3],
    q: &[f64; 3],
    radius: f64,
    bins: usize,
) -> Option<usize> {
    let d = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
    let dist2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if dist2 >= radius * radius {
        return None;
    }
    let beta = d[0] * n[0] + d[1] * n[1] + d[2] * n[2];
    let alpha = (dist2 - beta * beta).max(0.0).sqrt();
    let a = ((alpha / radius * bins as f64) as usize).min(bins - 1);
    let b = (((beta + radius) / (2.0 * radius) * bins as f64)
        .floor()
        .max(0.0) as usize)
        .min(bins - 1);
    Some(b * bins + a)
}

/// Uniform voxel hash over a point set for fixed-radius neighbor queries.
#[derive(Debug, Clone)]
pub struct SpinIndex {
    points: Vec<[f64; 3]>,
    cell: f64,
    voxels: HashMap<(i64, i64, i64), Vec<u32>>,
}

impl SpinIndex {
    /// `cell` should be at least the largest query radius.
    pub fn new(points: Vec<[f64; 3]>, cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut voxels: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            voxels.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        SpinIndex {
            points,
            cell,
            voxels,
        }
    }

    fn key(p: &[f64; 3], cell: f64) -> (i64, i64, i64) {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Concatenated raw histograms, one per radius, of all indexed points
    /// other than `center` passing `keep`.
    pub fn histograms(
        &self,
        center: usize,
        normal: &[f64; 3],
        radii: &[f64],
        bins: usize,
        keep: impl Fn(usize) -> bool,
    ) -> Vec<f64> {
        let r_max = radii.iter().copied().fold(0.0, f64::max);
        assert!(r_max <= self.cell);
        let p = self.points[center];
        let (kx, ky, kz) = Self::key(&p, self.cell);
        let mut out = vec![0.0; radii.len() * bins * bins];
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(ids) = self.voxels.get(&(kx + dx, ky + dy, kz + dz)) else {
                        continue;
                    };
                    for &j in ids {
                        let j = j as usize;
                        if j == center || !keep(j) {
                            continue;
                        }
                        let q = &self.points[j];
                        for (k, &r) in radii.iter().enumerate() {
                            if let Some(b) = spin_bin(&p, normal, q, r, bins) {
                                out[k * bins * bins + b] += 1.0;
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
