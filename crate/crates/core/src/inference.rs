//! Sequential conflict-resolving painting of labeled segments into a
//! per-pixel labeling, and evaluation of labelings.

use std::cmp::Ordering;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::netpbm;
use crate::imaging::SegmentMask;
use crate::recognition::LabeledSegment;

/// Rule deciding who keeps pixels claimed by two segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// The smaller segment wins.
    Overlap,
    /// The smaller segment wins when it is under half the other's area;
    /// otherwise the more confident one wins.
    OverlapConfidence,
    /// The more confident segment wins.
    Confidence,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Overlap => "overlap",
            Criterion::OverlapConfidence => "overlap_confidence",
            Criterion::Confidence => "confidence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "overlap" => Some(Criterion::Overlap),
            "overlap_confidence" => Some(Criterion::OverlapConfidence),
            "confidence" => Some(Criterion::Confidence),
            _ => None,
        }
    }
}

/// Per-pixel class ids (0 = unlabeled) and owning segment (-1 = none).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneLabeling {
    width: usize,
    height: usize,
    class_map: Vec<u32>,
    owner_map: Vec<i32>,
}

impl SceneLabeling {
    pub fn unlabeled(width: usize, height: usize) -> Self {
        SceneLabeling {
            width,
            height,
            class_map: vec![0; width * height],
            owner_map: vec![-1; width * height],
        }
    }

    /// Labeling given only by classes (e.g. ground truth); owners stay -1.
    pub fn from_classes(width: usize, height: usize, class_map: Vec<u32>) -> Result<Self> {
        if class_map.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (class_map.len(), 1),
            });
        }
        Ok(SceneLabeling {
            width,
            height,
            class_map,
            owner_map: vec![-1; width * height],
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

    pub fn class_map(&self) -> &[u32] {
        &self.class_map
    }

    pub fn owner_map(&self) -> &[i32] {
        &self.owner_map
    }

    pub fn class_at(&self, x: usize, y: usize) -> u32 {
        self.class_map[y * self.width + x]
    }

    /// Pixels of one class.
    pub fn class_mask(&self, class_id: u32) -> SegmentMask {
        SegmentMask::from_indices(
            self.width,
            self.height,
            (0..self.class_map.len()).filter(|&i| self.class_map[i] == class_id),
        )
    }

    /// 16-bit PGM of class ids.
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        if let Some(&c) = self.class_map.iter().find(|&&c| c > u16::MAX as u32) {
            return Err(Error::param(
                "class id",
                format!("{c} does not fit 16 bits"),
            ));
        }
        let v: Vec<u16> = self.class_map.iter().map(|&c| c as u16).collect();
        netpbm::write_pgm16(path, self.width, self.height, &v)
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        let (w, h, v) = netpbm::read_pgm16(path)?;
        Self::from_classes(w, h, v.into_iter().map(u32::from).collect())
    }
}

/// Writes `class_id name` lines.
pub fn save_legend(path: &Path, names: &[(u32, String)]) -> Result<()> {
    let text: String = names.iter().map(|(c, n)| format!("{c} {n}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_legend(path: &Path) -> Result<Vec<(u32, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (id, name) = l
                .trim()
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::format(path, format!("bad legend line {l:?}")))?;
            let id = id
                .parse()
                .map_err(|_| Error::format(path, format!("bad class id {id:?}")))?;
            Ok((id, name.trim().to_string()))
        })
        .collect()
}

/// Indices of the `s` most confident segments, by decreasing confidence
/// (ties keep the original order).
pub fn select_top_confident(segments: &[LabeledSegment], s: usize) -> Result<Vec<usize>> {
    if s == 0 {
        return Err(Error::param("S", "must be >= 1"));
    }
    let mut idx: Vec<usize> = (0..segments.len()).collect();
    idx.sort_by(|&a, &b| {
        segments[b]
            .confidence
            .total_cmp(&segments[a].confidence)
            .then(a.cmp(&b))
    });
    idx.truncate(s);
    Ok(idx)
}

/// Segment as seen by the conflict rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contender {
    pub area: usize,
    pub confidence: f64,
    pub index: usize,
}

/// Tie order shared by every criterion: higher confidence, then lower index.
fn tie_break(a: &Contender, b: &Contender) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.index.cmp(&b.index))
}

/// `true` when `current` takes the conflict pixels from `previous`.
pub fn current_wins(current: &Contender, previous: &Contender, criterion: Criterion) -> bool {
    let by_area = || {
        current
            .area
            .cmp(&previous.area)
            .then_with(|| tie_break(current, previous))
    };
    let order = match criterion {
        Criterion::Overlap => by_area(),
        Criterion::OverlapConfidence => {
            let (small, large) = (
                current.area.min(previous.area),
                current.area.max(previous.area),
            );
            if (small as f64) < 0.5 * large as f64 {
                by_area()
            } else {
                tie_break(current, previous)
            }
        }
        Criterion::Confidence => tie_break(current, previous),
    };
    order == Ordering::Less
}

/// Conflict winner between two overlapping labeled segments.
pub fn resolve_conflict<'a>(
    current: (&'a LabeledSegment, usize),
    previous: (&'a LabeledSegment, usize),
    criterion: Criterion,
) -> Result<&'a LabeledSegment> {
    if !current.0.mask.overlaps(&previous.0.mask) {
        return Err(Error::NoOverlap);
    }
    let c = contender(current.0, current.1);
    let p = contender(previous.0, previous.1);
    Ok(if current_wins(&c, &p, criterion) {
        current.0
    } else {
        previous.0
    })
}

fn contender(s: &LabeledSegment, index: usize) -> Contender {
    Contender {
        area: s.mask.area(),
        confidence: s.confidence,
        index,
    }
}

/// Paints segments in the given order. Each new segment claims its unowned
/// pixels and, against every earlier owner it overlaps, the shared pixels
/// when it wins the conflict with that owner.
pub fn sequential_paint(
    segments: &[LabeledSegment],
    order: &[usize],
    criterion: Criterion,
) -> Result<SceneLabeling> {
    let Some(first) = segments.first() else {
        return Err(Error::param("segments", "need at least one segment"));
    };
    let (w, h) = first.mask.dims();
    if let Some(bad) = segments.iter().find(|s| s.mask.dims() != (w, h)) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            actual: bad.mask.dims(),
        });
    }
    let mut out = SceneLabeling::unlabeled(w, h);
    // decision cache per prior owner for the current segment
    let mut verdict: Vec<u8> = vec![0; segments.len()];
    let mut touched: Vec<usize> = Vec::new();
    for &k in order {
        let seg = &segments[k];
        let me = contender(seg, k);
        for p in seg.mask.iter_indices() {
            let owner = out.owner_map[p];
            let take = if owner < 0 {
                true
            } else {
                let o = owner as usize;
                if verdict[o] == 0 {
                    let prev = contender(&segments[o], o);
                    verdict[o] = if current_wins(&me, &prev, criterion) {
                        1
                    } else {
                        2
                    };
                    touched.push(o);
                }
                verdict[o] == 1
            };
            if take {
                out.owner_map[p] = k as i32;
                out.class_map[p] = seg.class_id;
            }
        }
        for o in touched.drain(..) {
            verdict[o] = 0;
        }
    }
    Ok(out)
}

/// Full inference: keep the `s` most confident segments and paint them in
/// decreasing confidence.
pub fn infer_labeling(
    segments: &[LabeledSegment],
    s: usize,
    criterion: Criterion,
) -> Result<SceneLabeling> {
    let order = select_top_confident(segments, s)?;
    sequential_paint(segments, &order, criterion)
}

/// Per-class pixel recall over classes present in the truth (class 0 is
/// unlabeled and not scored).
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub per_class: Vec<(u32, f64)>,
    pub mean_recall: f64,
    pub pixel_accuracy: f64,
}

pub fn evaluate(predicted: &SceneLabeling, truth: &SceneLabeling) -> Result<Metrics> {
    if predicted.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            expected: truth.dims(),
            actual: predicted.dims(),
        });
    }
    let mut counts: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    for (&t, &p) in truth.class_map.iter().zip(&predicted.class_map) {
        if t == 0 {
            continue;
        }
        let e = counts.entry(t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    Ok(metrics_from_counts(&counts))
}

/// Metrics pooled over several images: recall per class counts all pixels
/// of that class in the corpus.
pub fn evaluate_corpus(pairs: &[(SceneLabeling, SceneLabeling)]) -> Result<Metrics> {
    let mut counts: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    for (predicted, truth) in pairs {
        if predicted.dims() != truth.dims() {
            return Err(Error::DimensionMismatch {
                expected: truth.dims(),
                actual: predicted.dims(),
            });
        }
        for (&t, &p) in truth.class_map.iter().zip(&predicted.class_map) {
            if t == 0 {
                continue;
            }
            let e = counts.entry(t).or_default();
            e.1 += 1;
            if p == t {
                e.0 += 1;
            }
        }
    }
    Ok(metrics_from_counts(&counts))
}

fn metrics_from_counts(counts: &std::collections::BTreeMap<u32, (usize, usize)>) -> Metrics {
    let per_class: Vec<(u32, f64)> = counts
        .iter()
        .map(|(&c, &(hit, total))| (c, hit as f64 / total as f64))
        .collect();
    let mean_recall = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(|(_, r)| r).sum::<f64>() / per_class.len() as f64
    };
    let (hit, total) = counts
        .values()
        .fold((0, 0), |(a, b), &(h, t)| (a + h, b + t));
    Metrics {
        per_class,
        mean_recall,
        pixel_accuracy: if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        },
    }
}

/// Mean over objects of the best IoU reached by any proposal.
pub fn pool_upper_bound(proposals: &[SegmentMask], objects: &[SegmentMask]) -> f64 {
    if objects.is_empty() {
        return 0.0;
    }
    objects
        .iter()
        .map(|o| proposals.iter().map(|p| p.iou(o)).fold(0.0, f64::max))
        .sum::<f64>()
        / objects.len() as f64
}
