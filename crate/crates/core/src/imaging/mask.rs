use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::netpbm;

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub xmin: usize,
    pub ymin: usize,
    pub xmax: usize,
    pub ymax: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.xmax - self.xmin + 1
    }

    pub fn height(&self) -> usize {
        self.ymax - self.ymin + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }
}

/// Binary region over a pixel grid.
///
/// Bits are packed row-major into 64-bit words. The area and bounding box
/// are computed once at construction and never go stale because the mask
/// has no mutating methods.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegmentMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
    area: usize,
    bbox: Option<BBox>,
}

impl SegmentMask {
    fn from_words(width: usize, height: usize, words: Vec<u64>) -> Self {
        let mut mask = SegmentMask {
            width,
            height,
            words,
            area: 0,
            bbox: None,
        };
        mask.refresh();
        mask
    }

    fn refresh(&mut self) {
        self.area = self.words.iter().map(|w| w.count_ones() as usize).sum();
        let mut bbox: Option<BBox> = None;
        for idx in self.iter_indices() {
            let (x, y) = (idx % self.width, idx / self.width);
            bbox = Some(match bbox {
                None => BBox {
                    xmin: x,
                    ymin: y,
                    xmax: x,
                    ymax: y,
                },
                Some(b) => BBox {
                    xmin: b.xmin.min(x),
                    ymin: b.ymin.min(y),
                    xmax: b.xmax.max(x),
                    ymax: b.ymax.max(y),
                },
            });
        }
        self.bbox = bbox;
    }

    fn word_count(width: usize, height: usize) -> usize {
        (width * height).div_ceil(64)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_words(width, height, vec![0; Self::word_count(width, height)])
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |_, _| true)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut words = vec![0u64; Self::word_count(width, height)];
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    let i = y * width + x;
                    words[i / 64] |= 1 << (i % 64);
                }
            }
        }
        Self::from_words(width, height, words)
    }

    pub fn from_bools(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (bits.len(), 1),
            });
        }
        Ok(Self::from_fn(width, height, |x, y| bits[y * width + x]))
    }

    /// Out-of-range indices are ignored.
    pub fn from_indices(
        width: usize,
        height: usize,
        indices: impl IntoIterator<Item = usize>,
    ) -> Self {
        let n = width * height;
        let mut words = vec![0u64; Self::word_count(width, height)];
        for i in indices.into_iter().filter(|&i| i < n) {
            words[i / 64] |= 1 << (i % 64);
        }
        Self::from_words(width, height, words)
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

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    pub fn bbox(&self) -> Option<BBox> {
        self.bbox
    }

    #[inline]
    pub fn contains_index(&self, idx: usize) -> bool {
        idx < self.width * self.height && self.words[idx / 64] & (1 << (idx % 64)) != 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.contains_index(y * self.width + x)
    }

    pub fn iter_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.width * self.height)
            .map(|i| self.contains_index(i))
            .collect()
    }

    fn check_dims(&self, other: &SegmentMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Panics on mismatched dimensions; use [`mask_iou`] for the checked path.
    pub fn intersection_area(&self, other: &SegmentMask) -> usize {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_area(&self, other: &SegmentMask) -> usize {
        self.area + other.area - self.intersection_area(other)
    }

    /// IoU without the dimension check. Empty-vs-empty is 0.
    pub fn iou(&self, other: &SegmentMask) -> f64 {
        if let (Some(a), Some(b)) = (self.bbox, other.bbox) {
            if a.xmax < b.xmin || b.xmax < a.xmin || a.ymax < b.ymin || b.ymax < a.ymin {
                return 0.0;
            }
        }
        let inter = self.intersection_area(other);
        let union = self.area + other.area - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn overlaps(&self, other: &SegmentMask) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn is_subset_of(&self, other: &SegmentMask) -> bool {
        self.dims() == other.dims()
            && self
                .words
                .iter()
                .zip(&other.words)
                .all(|(a, b)| a & !b == 0)
    }

    fn combine(&self, other: &SegmentMask, op: impl Fn(u64, u64) -> u64) -> Result<SegmentMask> {
        self.check_dims(other)?;
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(Self::from_words(self.width, self.height, words))
    }

    pub fn intersection(&self, other: &SegmentMask) -> Result<SegmentMask> {
        self.combine(other, |a, b| a & b)
    }

    pub fn union(&self, other: &SegmentMask) -> Result<SegmentMask> {
        self.combine(other, |a, b| a | b)
    }

    pub fn difference(&self, other: &SegmentMask) -> Result<SegmentMask> {
        self.combine(other, |a, b| a & !b)
    }

    pub fn write_pbm(&self, path: &Path) -> Result<()> {
        netpbm::write_pbm(path, self.width, self.height, &self.to_bools())
    }

    pub fn read_pbm(path: &Path) -> Result<SegmentMask> {
        let (w, h, bits) = netpbm::read_pbm(path)?;
        SegmentMask::from_bools(w, h, &bits)
    }
}

/// Intersection over union of two same-sized masks; 0 when the union is empty.
pub fn mask_iou(a: &SegmentMask, b: &SegmentMask) -> Result<f64> {
    a.check_dims(b)?;
    Ok(a.iou(b))
}
