//! Figure-ground proposal pools: seed grid, per-seed breakpoint solutions,
//! filtering, de-duplication, objectness ranking and MMR diversification.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::boundaries::BoundaryMap;
use crate::error::{Error, Result};
use crate::imaging::SegmentMask;
use crate::parametric::{solve_breakpoints_pruned, LambdaRange, SpatialEnergy};
use crate::regression::{design_matrix, fit_ridge};

/// Number of objectness features.
pub const OBJECTNESS_DIM: usize = 7;

pub type Seed = Vec<(usize, usize)>;

/// `n × n` single-pixel seeds at grid-cell centers.
pub fn generate_seeds(width: usize, height: usize, n: usize) -> Result<Vec<Seed>> {
    if n == 0 {
        return Err(Error::param("grid", "must be >= 1"));
    }
    if width <= 3 * n || height <= 3 * n {
        return Err(Error::ImageTooSmall {
            width,
            height,
            grid: n,
        });
    }
    let mut seeds = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let x = (2 * i + 1) * width / (2 * n);
            let y = (2 * j + 1) * height / (2 * n);
            seeds.push(vec![(x, y)]);
        }
    }
    Ok(seeds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalConfig {
    pub sigmas: Vec<f64>,
    pub lambda_range: LambdaRange,
    /// Masks below this fraction of the image are dropped.
    pub min_area_fraction: f64,
    /// Masks above this fraction of the image are dropped.
    pub max_area_fraction: f64,
    pub dedup_iou: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        ProposalConfig {
            sigmas: vec![0.05, 0.1, 0.2],
            lambda_range: LambdaRange::default(),
            min_area_fraction: 0.0005,
            max_area_fraction: 0.9,
            dedup_iou: 0.95,
        }
    }
}

/// Where a proposal came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub seed: usize,
    pub lambda: f64,
}

/// Aligned lists of masks, objectness features, scores and provenance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProposalPool {
    pub masks: Vec<SegmentMask>,
    pub features: Vec<[f64; OBJECTNESS_DIM]>,
    pub objectness: Vec<f64>,
    pub provenance: Vec<Provenance>,
}

impl ProposalPool {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    fn push(
        &mut self,
        mask: SegmentMask,
        features: [f64; OBJECTNESS_DIM],
        score: f64,
        prov: Provenance,
    ) {
        self.masks.push(mask);
        self.features.push(features);
        self.objectness.push(score);
        self.provenance.push(prov);
    }

    pub fn subset(&self, indices: &[usize]) -> ProposalPool {
        let mut out = ProposalPool::default();
        for &i in indices {
            out.push(
                self.masks[i].clone(),
                self.features[i],
                self.objectness[i],
                self.provenance[i],
            );
        }
        out
    }

    /// Appends `other`, skipping masks identical to one already present.
    pub fn merge(&mut self, other: &ProposalPool) {
        let mut seen: HashSet<SegmentMask> = self.masks.iter().cloned().collect();
        for i in 0..other.len() {
            if seen.insert(other.masks[i].clone()) {
                self.push(
                    other.masks[i].clone(),
                    other.features[i],
                    other.objectness[i],
                    other.provenance[i],
                );
            }
        }
    }

    /// Mean over ground-truth objects of the best IoU achieved by any proposal.
    pub fn best_iou_per_object(&self, objects: &[SegmentMask]) -> Vec<f64> {
        objects
            .iter()
            .map(|gt| self.masks.iter().map(|m| m.iou(gt)).fold(0.0, f64::max))
            .collect()
    }

    /// Writes `mask_NNNNN.pbm` files plus `index.txt` with
    /// `mask_file seed_idx lambda objectness` lines.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = String::new();
        for (i, mask) in self.masks.iter().enumerate() {
            let name = format!("mask_{i:05}.pbm");
            mask.write_pbm(&dir.join(&name))?;
            let p = self.provenance[i];
            writeln!(
                index,
                "{name} {} {:?} {:?}",
                p.seed, p.lambda, self.objectness[i]
            )
            .unwrap();
        }
        let path = dir.join("index.txt");
        std::fs::write(&path, index).map_err(|e| Error::io(&path, e))
    }

    /// Reads a pool written by [`ProposalPool::save`]; objectness features are
    /// recomputed from `fused` when given, zero otherwise.
    pub fn load(dir: &Path, fused: Option<&BoundaryMap>) -> Result<ProposalPool> {
        let path = dir.join("index.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut pool = ProposalPool::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::format(&path, format!("line {}: expected 4 fields", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(bad());
            }
            let seed: usize = fields[1].parse().map_err(|_| bad())?;
            let lambda: f64 = fields[2].parse().map_err(|_| bad())?;
            let score: f64 = fields[3].parse().map_err(|_| bad())?;
            let mask = SegmentMask::read_pbm(&dir.join(fields[0]))?;
            let features = match fused {
                Some(b) if !mask.is_empty() => objectness_features(&mask, b)?,
                _ => [0.0; OBJECTNESS_DIM],
            };
            pool.push(mask, features, score, Provenance { seed, lambda });
        }
        Ok(pool)
    }
}

/// Raw union of breakpoint solutions over seeds and σ values, filtered by
/// area and de-duplicated (earlier masks win). Scores come from `ranker`.
/// λ intervals whose end labelings are already duplicates at the dedup
/// threshold, or whose labelings would all fail the area filter, are not
/// refined.
pub fn generate_pool(
    fused: &BoundaryMap,
    seeds: &[Seed],
    config: &ProposalConfig,
    ranker: &ObjectnessRanker,
) -> Result<ProposalPool> {
    let jobs: Vec<(usize, f64)> = (0..seeds.len())
        .flat_map(|s| config.sigmas.iter().map(move |&sigma| (s, sigma)))
        .collect();
    let total = (fused.width() * fused.height()) as f64;
    let min_area = config.min_area_fraction * total;
    let max_area = config.max_area_fraction * total;
    let solved: Vec<Vec<(SegmentMask, Provenance)>> = jobs
        .par_iter()
        .map(|&(s, sigma)| -> Result<_> {
            let energy = SpatialEnergy::build(fused, &seeds[s], sigma, config.lambda_range)?;
            let solutions = solve_breakpoints_pruned(&energy, &|a, b| {
                (a.area() as f64) > max_area
                    || (b.area() as f64) < min_area
                    || a.iou(b) >= config.dedup_iou
            });
            Ok(solutions
                .into_iter()
                .map(|sol| {
                    (
                        sol.foreground,
                        Provenance {
                            seed: s,
                            lambda: sol.lambda,
                        },
                    )
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let candidates = solved
        .into_iter()
        .flatten()
        .filter(|(m, _)| (m.area() as f64) >= min_area && (m.area() as f64) <= max_area);
    let kept = dedup(candidates, config.dedup_iou);

    let scored: Vec<_> = kept
        .par_iter()
        .map(|(m, _)| objectness_features(m, fused))
        .collect::<Result<_>>()?;
    let mut pool = ProposalPool::default();
    for ((mask, prov), features) in kept.into_iter().zip(scored) {
        let score = ranker.score(&features);
        pool.push(mask, features, score, prov);
    }
    Ok(pool)
}

/// Drops exact duplicates and any mask with IoU ≥ `threshold` against an
/// earlier kept mask.
fn dedup(
    candidates: impl Iterator<Item = (SegmentMask, Provenance)>,
    threshold: f64,
) -> Vec<(SegmentMask, Provenance)> {
    let mut kept: Vec<(SegmentMask, Provenance)> = Vec::new();
    let mut exact: HashSet<SegmentMask> = HashSet::new();
    // kept indices by area; IoU ≥ t needs area ratio ≥ t
    let mut by_area: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (mask, prov) in candidates {
        if exact.contains(&mask) {
            continue;
        }
        let a = mask.area() as f64;
        let lo = (a * threshold).floor() as usize;
        let hi = (a / threshold).ceil() as usize;
        let near = lo <= hi
            && by_area
                .range(lo..=hi)
                .flat_map(|(_, ids)| ids.iter())
                .any(|&k| kept[k].0.iou(&mask) >= threshold);
        if near {
            continue;
        }
        exact.insert(mask.clone());
        by_area.entry(mask.area()).or_default().push(kept.len());
        kept.push((mask, prov));
    }
    kept
}

/// Shape and boundary statistics of a mask:
/// `[area fraction, perimeter/√area, mean boundary on the mask contour,
///   area/bbox area, Euler number, bbox min/max side, centroid distance to
///   image center / half diagonal]`.
pub fn objectness_features(
    mask: &SegmentMask,
    fused: &BoundaryMap,
) -> Result<[f64; OBJECTNESS_DIM]> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    if mask.dims() != fused.dims() {
        return Err(Error::DimensionMismatch {
            expected: fused.dims(),
            actual: mask.dims(),
        });
    }
    let (w, h) = mask.dims();
    let area = mask.area() as f64;
    let mut perimeter = 0usize;
    let mut contour_sum = 0.0;
    let mut contour_count = 0usize;
    let (mut cx, mut cy) = (0.0, 0.0);
    for idx in mask.iter_indices() {
        let (x, y) = (idx % w, idx / w);
        cx += x as f64;
        cy += y as f64;
        let outside = [
            x == 0 || !mask.get(x - 1, y),
            x + 1 == w || !mask.get(x + 1, y),
            y == 0 || !mask.get(x, y - 1),
            y + 1 == h || !mask.get(x, y + 1),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if outside > 0 {
            perimeter += outside;
            contour_sum += fused.values()[idx];
            contour_count += 1;
        }
    }
    let bbox = mask.bbox().expect("nonempty");
    let (bw, bh) = (bbox.width() as f64, bbox.height() as f64);
    let (cx, cy) = (cx / area, cy / area);
    let (icx, icy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let half_diag = (icx * icx + icy * icy).sqrt().max(1e-12);
    Ok([
        area / (w * h) as f64,
        perimeter as f64 / area.sqrt(),
        contour_sum / contour_count.max(1) as f64,
        area / (bw * bh),
        euler_number(mask) as f64,
        bw.min(bh) / bw.max(bh),
        ((cx - icx).powi(2) + (cy - icy).powi(2)).sqrt() / half_diag,
    ])
}

/// Foreground components (4-connected) minus holes (8-connected background
/// components not touching the image border).
pub fn euler_number(mask: &SegmentMask) -> i64 {
    let (w, h) = mask.dims();
    // pad by one pixel so the outside background is a single component
    let (pw, ph) = (w + 2, h + 2);
    let fg = |x: usize, y: usize| x >= 1 && y >= 1 && x <= w && y <= h && mask.get(x - 1, y - 1);
    let mut seen = vec![false; pw * ph];
    let mut count = |want_fg: bool, eight: bool| -> i64 {
        let mut comps = 0;
        let mut stack = Vec::new();
        for start in 0..pw * ph {
            let (sx, sy) = (start % pw, start / pw);
            if seen[start] || fg(sx, sy) != want_fg {
                continue;
            }
            comps += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (x, y) = ((p % pw) as isize, (p / pw) as isize);
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= pw as isize || ny >= ph as isize {
                            continue;
                        }
                        let q = ny as usize * pw + nx as usize;
                        if !seen[q] && fg(nx as usize, ny as usize) == want_fg {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
        }
        comps
    };
    let components = count(true, false);
    let background = count(false, true);
    components - (background - 1)
}

/// Linear objectness scorer over [`objectness_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectnessRanker {
    pub weights: [f64; OBJECTNESS_DIM],
    pub bias: f64,
}

impl Default for ObjectnessRanker {
    /// Weights fitted by `pipeline::fit_ranker` on a 40-scene default
    /// synthetic corpus (seed 7), regularization 1.
    fn default() -> Self {
        ObjectnessRanker {
            weights: [
                -1.032172, 0.015511, 0.320143, 1.253239, -0.001389, 0.066110, -0.593591,
            ],
            bias: -0.303810,
        }
    }
}

impl ObjectnessRanker {
    pub fn score(&self, features: &[f64; OBJECTNESS_DIM]) -> f64 {
        self.bias
            + self
                .weights
                .iter()
                .zip(features)
                .map(|(w, f)| w * f)
                .sum::<f64>()
    }

    /// Ridge fit from features to a target such as best IoU with ground truth.
    pub fn fit(features: &[[f64; OBJECTNESS_DIM]], targets: &[f64], reg: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = features.iter().map(|f| f.to_vec()).collect();
        let model = fit_ridge(&design_matrix(&rows)?, targets, reg)?;
        let mut weights = [0.0; OBJECTNESS_DIM];
        weights.copy_from_slice(&model.weights);
        Ok(ObjectnessRanker {
            weights,
            bias: model.bias,
        })
    }

    /// Plain text: the 7 weights then the bias, whitespace separated.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self
            .weights
            .iter()
            .chain(std::iter::once(&self.bias))
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(" ");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let values: Vec<f64> = text
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::format(path, format!("bad number {t:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != OBJECTNESS_DIM + 1 {
            return Err(Error::format(
                path,
                format!(
                    "expected {} values, found {}",
                    OBJECTNESS_DIM + 1,
                    values.len()
                ),
            ));
        }
        let mut weights = [0.0; OBJECTNESS_DIM];
        weights.copy_from_slice(&values[..OBJECTNESS_DIM]);
        Ok(ObjectnessRanker {
            weights,
            bias: values[OBJECTNESS_DIM],
        })
    }
}

/// Greedy maximal-marginal-relevance selection: repeatedly take the item
/// maximizing `score − gamma · max IoU with the selected set`. Ties go to the
/// lower index. Returns indices in selection order.
pub fn mmr_select(masks: &[SegmentMask], scores: &[f64], k: usize, gamma: f64) -> Vec<usize> {
    assert_eq!(masks.len(), scores.len());
    let n = masks.len();
    let mut max_overlap = vec![0.0f64; n];
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(k.min(n));
    while order.len() < k.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let gain = scores[i] - gamma * max_overlap[i];
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (pick, _) = best.expect("remaining items");
        taken[pick] = true;
        order.push(pick);
        if gamma != 0.0 {
            let chosen = &masks[pick];
            max_overlap
                .par_iter_mut()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .for_each(|(i, m)| *m = m.max(masks[i].iou(chosen)));
        }
    }
    order
}

/// Re-scores the pool with `ranker` and keeps the first `k` MMR selections.
pub fn rank_and_diversify(
    pool: &ProposalPool,
    ranker: &ObjectnessRanker,
    k: usize,
    gamma: f64,
) -> Result<ProposalPool> {
    if k == 0 {
        return Err(Error::param("K", "must be >= 1"));
    }
    let mut scored = pool.clone();
    scored.objectness = pool.features.iter().map(|f| ranker.score(f)).collect();
    let order = mmr_select(&scored.masks, &scored.objectness, k, gamma);
    Ok(scored.subset(&order))
}
