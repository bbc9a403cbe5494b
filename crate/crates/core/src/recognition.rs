//! Per-class overlap regressors, proposal labeling and spatial-pyramid scene
//! classification.

use std::path::Path;

use rayon::prelude::*;

use crate::descriptors::{FrameContext, PcaBank};
use crate::error::{Error, Result};
use crate::imaging::SegmentMask;
use crate::regression::{design_matrix, fit, Loss, RidgeSolver};

/// Linear predictor of the IoU between a region and the best object of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryModel {
    pub class_id: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub regularization: f64,
}

impl CategoryModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// A region with its predicted class and confidence (the predicted IoU).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSegment {
    pub mask: SegmentMask,
    pub class_id: u32,
    pub confidence: f64,
}

/// A ground-truth object.
#[derive(Debug, Clone, PartialEq)]
pub struct Object {
    pub mask: SegmentMask,
    pub class_id: u32,
}

/// One training image: its objects and proposals with their descriptors
/// (objects first, then proposals).
#[derive(Debug, Clone)]
pub struct TrainingImage {
    pub objects: Vec<Object>,
    pub proposals: Vec<SegmentMask>,
    pub descriptors: Vec<Option<Vec<f64>>>,
}

/// Shared sample rows with one target vector per class.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub rows: Vec<Vec<f64>>,
    pub classes: Vec<u32>,
    pub targets: Vec<Vec<f64>>,
}

/// Targets per class: an object gets 1 for its own class and 0 otherwise;
/// a proposal gets its best IoU with an object of the class (0 if none).
pub fn assemble_training(images: &[TrainingImage], classes: &[u32]) -> Result<TrainingSet> {
    let mut set = TrainingSet {
        rows: Vec::new(),
        classes: classes.to_vec(),
        targets: vec![Vec::new(); classes.len()],
    };
    let mut offset = 0;
    for img in images {
        let n = img.objects.len() + img.proposals.len();
        if img.descriptors.len() != n {
            return Err(Error::MissingDescriptor(
                offset + img.descriptors.len().min(n),
            ));
        }
        for (k, d) in img.descriptors.iter().enumerate() {
            let d = d.as_ref().ok_or(Error::MissingDescriptor(offset + k))?;
            set.rows.push(d.clone());
        }
        for (c, &class) in classes.iter().enumerate() {
            let t = &mut set.targets[c];
            t.extend(
                img.objects
                    .iter()
                    .map(|o| f64::from(u8::from(o.class_id == class))),
            );
            t.extend(img.proposals.iter().map(|p| {
                img.objects
                    .iter()
                    .filter(|o| o.class_id == class)
                    .map(|o| p.iou(&o.mask))
                    .fold(0.0, f64::max)
            }));
        }
        offset += n;
    }
    Ok(set)
}

/// One regressor per class. Ridge shares a single factorization across
/// classes.
pub fn train_category_models(
    set: &TrainingSet,
    regularization: f64,
    loss: Loss,
) -> Result<Vec<CategoryModel>> {
    if set.rows.len() < 2 {
        return Err(Error::param("training set", "need at least 2 samples"));
    }
    let x = design_matrix(&set.rows)?;
    let fitted: Vec<_> = match loss {
        Loss::Ridge => {
            let solver = RidgeSolver::new(&x, regularization)?;
            set.targets
                .iter()
                .map(|t| solver.solve(t))
                .collect::<Result<_>>()?
        }
        Loss::Svr { .. } => set
            .targets
            .par_iter()
            .map(|t| fit(&x, t, loss, regularization))
            .collect::<Result<_>>()?,
    };
    Ok(set
        .classes
        .iter()
        .zip(fitted)
        .map(|(&class_id, m)| CategoryModel {
            class_id,
            weights: m.weights,
            bias: m.bias,
            regularization,
        })
        .collect())
}

/// Highest-scoring class (lowest class id on ties) and its score.
pub fn argmax_class(models: &[CategoryModel], x: &[f64]) -> Result<(u32, f64)> {
    let mut best: Option<(u32, f64)> = None;
    for m in models {
        if m.dim() != x.len() {
            return Err(Error::DescriptorDim {
                expected: m.dim(),
                actual: x.len(),
            });
        }
        let s = m.predict(x);
        best = match best {
            Some((c, b)) if b > s || (b == s && c < m.class_id) => Some((c, b)),
            _ => Some((m.class_id, s)),
        };
    }
    best.ok_or(Error::Untrained)
}

pub fn label_proposals(
    masks: &[SegmentMask],
    descriptors: &[Vec<f64>],
    models: &[CategoryModel],
) -> Result<Vec<LabeledSegment>> {
    if masks.len() != descriptors.len() {
        return Err(Error::MissingDescriptor(descriptors.len().min(masks.len())));
    }
    masks
        .iter()
        .zip(descriptors)
        .map(|(mask, d)| {
            let (class_id, confidence) = argmax_class(models, d)?;
            Ok(LabeledSegment {
                mask: mask.clone(),
                class_id,
                confidence,
            })
        })
        .collect()
}

const MODEL_MAGIC: &[u8; 4] = b"DSCM";

/// Binary: magic, then class count and dimension (u32 LE), then per class its
/// id (u32 LE), weights and bias (f32 LE).
pub fn save_models(path: &Path, models: &[CategoryModel]) -> Result<()> {
    let dim = models.first().map_or(0, |m| m.dim());
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&(models.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for m in models {
        if m.dim() != dim {
            return Err(Error::DescriptorDim {
                expected: dim,
                actual: m.dim(),
            });
        }
        buf.extend_from_slice(&m.class_id.to_le_bytes());
        for v in m.weights.iter().chain(std::iter::once(&m.bias)) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_models(path: &Path) -> Result<Vec<CategoryModel>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::format(path, "not a model file"));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
    let (count, dim) = (word(4) as usize, word(8) as usize);
    let stride = 4 + 4 * (dim + 1);
    if bytes.len() != 12 + count * stride {
        return Err(Error::format(path, "size does not match header"));
    }
    Ok((0..count)
        .map(|c| {
            let base = 12 + c * stride;
            let vals: Vec<f64> = bytes[base + 4..base + stride]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            CategoryModel {
                class_id: word(base),
                weights: vals[..dim].to_vec(),
                bias: vals[dim],
                regularization: f64::NAN,
            }
        })
        .collect())
}

/// Pyramid levels: 1×1, 2×2 and 4×4 grids.
pub const PYRAMID_LEVELS: [usize; 3] = [1, 2, 4];

/// The 21 pyramid cells of a `width × height` image, coarse to fine,
/// row-major within a level.
pub fn pyramid_cells(width: usize, height: usize) -> Vec<SegmentMask> {
    let mut cells = Vec::new();
    for g in PYRAMID_LEVELS {
        for j in 0..g {
            for i in 0..g {
                let (x0, x1) = (i * width / g, (i + 1) * width / g);
                let (y0, y1) = (j * height / g, (j + 1) * height / g);
                cells.push(SegmentMask::from_fn(width, height, |x, y| {
                    x >= x0 && x < x1 && y >= y0 && y < y1
                }));
            }
        }
    }
    cells
}

/// Raw (pre-PCA) blocks of every pyramid cell, cell-major.
pub fn scene_raw_blocks(ctx: &FrameContext) -> Result<Vec<Vec<Vec<f64>>>> {
    let (w, h) = ctx.frame().dims();
    pyramid_cells(w, h)
        .iter()
        .map(|c| ctx.raw_blocks(c))
        .collect()
}

/// Concatenated cell descriptors.
pub fn scene_descriptor(ctx: &FrameContext, bank: &PcaBank) -> Result<Vec<f64>> {
    let (w, h) = ctx.frame().dims();
    let cells = pyramid_cells(w, h);
    let raw = cells
        .iter()
        .map(|c| ctx.raw_blocks(c))
        .collect::<Result<Vec<_>>>()?;
    scene_descriptor_from_raw(ctx, bank, &cells, raw)
}

pub fn scene_descriptor_from_raw(
    ctx: &FrameContext,
    bank: &PcaBank,
    cells: &[SegmentMask],
    raw: Vec<Vec<Vec<f64>>>,
) -> Result<Vec<f64>> {
    let config = ctx.config();
    let mut out = Vec::new();
    for (cell, blocks) in cells.iter().zip(raw) {
        let pc = if config.point_cloud {
            Some(ctx.point_cloud_block(cell)?)
        } else {
            None
        };
        out.extend(bank.assemble(config, blocks, pc, None)?.concatenated);
    }
    Ok(out)
}

/// One-vs-all linear scene classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneClassifier {
    pub labels: Vec<String>,
    pub models: Vec<CategoryModel>,
}

impl SceneClassifier {
    /// Ridge one-vs-all with targets 1 (own class) and 0.
    pub fn train(
        descriptors: &[Vec<f64>],
        labels: &[usize],
        names: &[String],
        regularization: f64,
    ) -> Result<Self> {
        if descriptors.len() != labels.len() {
            return Err(Error::MissingDescriptor(
                descriptors.len().min(labels.len()),
            ));
        }
        let set = TrainingSet {
            rows: descriptors.to_vec(),
            classes: (0..names.len() as u32).collect(),
            targets: (0..names.len())
                .map(|c| {
                    labels
                        .iter()
                        .map(|&l| f64::from(u8::from(l == c)))
                        .collect()
                })
                .collect(),
        };
        Ok(SceneClassifier {
            labels: names.to_vec(),
            models: train_category_models(&set, regularization, Loss::Ridge)?,
        })
    }

    /// Winning scene index and all scores.
    pub fn classify(&self, descriptor: &[f64]) -> Result<(usize, Vec<f64>)> {
        if self.models.is_empty() {
            return Err(Error::Untrained);
        }
        let (best, _) = argmax_class(&self.models, descriptor)?;
        let scores = self.models.iter().map(|m| m.predict(descriptor)).collect();
        Ok((best as usize, scores))
    }
}

/// Scene class and per-class scores of a frame.
pub fn scene_classify(
    ctx: &FrameContext,
    bank: &PcaBank,
    classifier: &SceneClassifier,
) -> Result<(usize, Vec<f64>)> {
    if classifier.models.is_empty() {
        return Err(Error::Untrained);
    }
    classifier.classify(&scene_descriptor(ctx, bank)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(class_id: u32, w: f64, b: f64) -> CategoryModel {
        CategoryModel {
            class_id,
            weights: vec![w],
            bias: b,
            regularization: 1.0,
        }
    }

    #[test]
    fn argmax_and_ties() {
        let models = [model(0, 0.0, 0.7), model(1, 0.0, 0.2)];
        assert_eq!(argmax_class(&models, &[1.0]).unwrap(), (0, 0.7));
        let tied = [model(4, 0.0, 0.5), model(2, 0.0, 0.5)];
        assert_eq!(argmax_class(&tied, &[1.0]).unwrap().0, 2);
        assert!(matches!(
            argmax_class(&models, &[1.0, 2.0]),
            Err(Error::DescriptorDim { .. })
        ));
        assert!(matches!(argmax_class(&[], &[1.0]), Err(Error::Untrained)));
    }

    #[test]
    fn targets_follow_iou() {
        let obj = SegmentMask::from_fn(10, 10, |x, _| x < 5);
        let half = SegmentMask::from_fn(10, 10, |x, y| x < 5 && y < 4);
        let img = TrainingImage {
            objects: vec![Object {
                mask: obj.clone(),
                class_id: 3,
            }],
            proposals: vec![obj, half],
            descriptors: vec![Some(vec![0.0]), Some(vec![1.0]), Some(vec![2.0])],
        };
        let set = assemble_training(std::slice::from_ref(&img), &[1, 3]).unwrap();
        assert_eq!(set.targets[1], vec![1.0, 1.0, 0.4]);
        assert_eq!(set.targets[0], vec![0.0, 0.0, 0.0]);
        let mut missing = img;
        missing.descriptors[2] = None;
        assert!(matches!(
            assemble_training(&[missing], &[3]),
            Err(Error::MissingDescriptor(2))
        ));
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        let models = vec![
            CategoryModel {
                class_id: 1,
                weights: vec![0.5, -0.25],
                bias: 0.125,
                regularization: 1.0,
            },
            CategoryModel {
                class_id: 7,
                weights: vec![2.0, 0.0],
                bias: -1.0,
                regularization: 1.0,
            },
        ];
        save_models(&p, &models).unwrap();
        let back = load_models(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].class_id, 7);
        assert_eq!(back[0].weights, models[0].weights);
        assert_eq!(back[1].bias, -1.0);
    }

    #[test]
    fn pyramid_has_21_cells_that_tile_each_level() {
        for (w, h) in [(16, 12), (37, 23)] {
            let cells = pyramid_cells(w, h);
            assert_eq!(cells.len(), 21);
            assert_eq!(cells[0].area(), w * h);
            assert_eq!(cells[1..5].iter().map(|c| c.area()).sum::<usize>(), w * h);
            assert_eq!(cells[5..].iter().map(|c| c.area()).sum::<usize>(), w * h);
        }
    }
}
