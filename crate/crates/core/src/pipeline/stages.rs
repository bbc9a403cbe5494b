//! In-memory pipeline stages shared by the command-line verbs and by
//! whole-corpus experiments.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::PipelineConfig;
use crate::boundaries::{frame_boundaries, BoundaryMap};
use crate::descriptors::{DescriptorConfig, FrameContext, PcaBank};
use crate::error::{Error, Result};
use crate::imaging::{RgbdFrame, SegmentMask};
use crate::inference::{
    evaluate_corpus, infer_labeling, pool_upper_bound, Criterion, Metrics, SceneLabeling,
};
use crate::proposals::{
    generate_pool, generate_seeds, rank_and_diversify, ObjectnessRanker, ProposalPool,
};
use crate::recognition::{
    assemble_training, label_proposals, pyramid_cells, scene_descriptor_from_raw, scene_raw_blocks,
    train_category_models, CategoryModel, LabeledSegment, Object, SceneClassifier, TrainingImage,
};
use crate::synth::{SyntheticScene, SCENE_TYPES};

/// Scene indices of the training and test splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// The first `round(fraction · count)` scenes train, the rest test; both
/// sides keep at least one scene when `count >= 2`.
pub fn split_indices(count: usize, fraction: f64) -> Split {
    let n_train = if count < 2 {
        count
    } else {
        ((count as f64 * fraction).round() as usize).clamp(1, count - 1)
    };
    Split {
        train: (0..n_train).collect(),
        test: (n_train..count).collect(),
    }
}

pub fn load_ranker(config: &PipelineConfig) -> Result<ObjectnessRanker> {
    match &config.ranker {
        Some(path) => ObjectnessRanker::load(path),
        None => Ok(ObjectnessRanker::default()),
    }
}

pub fn scene_boundaries(frame: &RgbdFrame, config: &PipelineConfig) -> BoundaryMap {
    frame_boundaries(frame, config.use_depth, &config.gradient_params())
}

/// Full pool before ranking.
pub fn raw_pool(
    boundaries: &BoundaryMap,
    config: &PipelineConfig,
    ranker: &ObjectnessRanker,
) -> Result<ProposalPool> {
    let seeds = generate_seeds(boundaries.width(), boundaries.height(), config.grid)?;
    generate_pool(boundaries, &seeds, &config.proposal_config(), ranker)
}

/// Ranked and diversified pool holding enough proposals for either split.
pub fn propose(
    boundaries: &BoundaryMap,
    config: &PipelineConfig,
    ranker: &ObjectnessRanker,
) -> Result<ProposalPool> {
    let pool = raw_pool(boundaries, config, ranker)?;
    rank_and_diversify(&pool, ranker, config.k_max(), config.gamma)
}

/// Fits the objectness ranker on `scenes`: features of every raw pool mask
/// regressed onto its best IoU with a ground-truth object.
pub fn fit_ranker(
    scenes: &[&SyntheticScene],
    config: &PipelineConfig,
    regularization: f64,
) -> Result<ObjectnessRanker> {
    let per_scene: Vec<(Vec<[f64; 7]>, Vec<f64>)> = scenes
        .iter()
        .map(|s| {
            let b = scene_boundaries(&s.frame, config);
            let pool = raw_pool(&b, config, &ObjectnessRanker::default())?;
            let targets = pool
                .masks
                .iter()
                .map(|m| s.objects.iter().map(|o| o.mask.iou(m)).fold(0.0, f64::max))
                .collect();
            Ok((pool.features, targets))
        })
        .collect::<Result<_>>()?;
    let (features, targets): (Vec<_>, Vec<_>) = per_scene.into_iter().unzip();
    ObjectnessRanker::fit(&features.concat(), &targets.concat(), regularization)
}

/// Regions to describe in one frame.
pub struct FrameRegions<'a> {
    pub frame: &'a RgbdFrame,
    pub masks: Vec<SegmentMask>,
}

/// Fits one PCA model per block on a deterministic subsample of at most
/// `config.pca_samples` regions drawn from `frames`. Raw blocks are computed
/// only for the sampled regions.
pub fn fit_pca_bank(frames: &[FrameRegions], config: &PipelineConfig) -> Result<PcaBank> {
    let dcfg = config.descriptor_config();
    let mut all: Vec<(usize, usize)> = frames
        .iter()
        .enumerate()
        .flat_map(|(f, r)| (0..r.masks.len()).map(move |k| (f, k)))
        .collect();
    if all.len() < 2 {
        return Err(Error::param("pca samples", "need at least 2 regions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    all.shuffle(&mut rng);
    all.truncate(config.pca_samples);
    all.sort_unstable();
    let per_frame: Vec<Vec<Vec<Vec<f64>>>> = frames
        .par_iter()
        .enumerate()
        .map(|(f, regions)| {
            let picked: Vec<usize> = all
                .iter()
                .filter(|(g, _)| *g == f)
                .map(|&(_, k)| k)
                .collect();
            if picked.is_empty() {
                return Ok(Vec::new());
            }
            let ctx = FrameContext::new(regions.frame, &dcfg)?;
            picked
                .par_iter()
                .map(|&k| ctx.raw_blocks(&regions.masks[k]))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(all.len()); dcfg.blocks.len()];
    for region in per_frame.into_iter().flatten() {
        for (b, v) in region.into_iter().enumerate() {
            samples[b].push(v);
        }
    }
    PcaBank::fit(&dcfg, &samples)
}

/// Final descriptors of `masks`, with optional aligned external rows.
pub fn describe_regions(
    frame: &RgbdFrame,
    masks: &[SegmentMask],
    bank: &PcaBank,
    dcfg: &DescriptorConfig,
    external: Option<&[Vec<f64>]>,
) -> Result<Vec<Vec<f64>>> {
    if let Some(ext) = external {
        if ext.len() != masks.len() {
            return Err(Error::MissingDescriptor(ext.len().min(masks.len())));
        }
    }
    let ctx = FrameContext::new(frame, dcfg)?;
    masks
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            Ok(ctx
                .describe(m, bank, external.map(|e| e[k].as_slice()))?
                .concatenated)
        })
        .collect()
}

/// One regressor per class id in `classes`.
pub fn train_models(
    images: &[TrainingImage],
    classes: &[u32],
    config: &PipelineConfig,
) -> Result<Vec<CategoryModel>> {
    let set = assemble_training(images, classes)?;
    train_category_models(&set, config.regularization, config.loss())
}

pub fn infer(
    segments: &[LabeledSegment],
    config: &PipelineConfig,
    criterion: Criterion,
) -> Result<SceneLabeling> {
    infer_labeling(segments, config.segments, criterion)
}

/// Outcome of [`run_experiment`] on the test split.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub split: Split,
    /// Mean best IoU of the test proposals (first `k_test`) per object.
    pub pool_upper_bound: f64,
    /// Mean pool size on the test split.
    pub mean_pool_size: f64,
    pub metrics: Vec<(Criterion, Metrics)>,
    pub labelings: Vec<(Criterion, Vec<SceneLabeling>)>,
}

impl ExperimentReport {
    pub fn mean_recall(&self, criterion: Criterion) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(c, _)| *c == criterion)
            .map(|(_, m)| m.mean_recall)
    }
}

/// Propose, describe, train and infer on an in-memory corpus; metrics are
/// pooled over the test split for every criterion in `criteria`.
pub fn run_experiment(
    scenes: &[SyntheticScene],
    classes: &[u32],
    config: &PipelineConfig,
    criteria: &[Criterion],
) -> Result<ExperimentReport> {
    config.validate()?;
    let split = split_indices(scenes.len(), config.train_fraction);
    let ranker = load_ranker(config)?;
    let pools: Vec<ProposalPool> = scenes
        .iter()
        .map(|s| propose(&scene_boundaries(&s.frame, config), config, &ranker))
        .collect::<Result<_>>()?;
    log::info!("proposals ready for {} scenes", scenes.len());

    let regions = |i: usize, k: usize| -> Vec<SegmentMask> {
        let n = k.min(pools[i].len());
        pools[i].masks[..n].to_vec()
    };
    let train_regions: Vec<FrameRegions> = split
        .train
        .iter()
        .map(|&i| FrameRegions {
            frame: &scenes[i].frame,
            masks: scenes[i]
                .objects
                .iter()
                .map(|o| o.mask.clone())
                .chain(regions(i, config.k_train))
                .collect(),
        })
        .collect();
    let bank = fit_pca_bank(&train_regions, config)?;
    log::info!("PCA bank fitted");
    let dcfg = config.descriptor_config();

    let images: Vec<TrainingImage> = split
        .train
        .iter()
        .zip(&train_regions)
        .map(|(&i, r)| {
            let d = describe_regions(r.frame, &r.masks, &bank, &dcfg, None)?;
            Ok(TrainingImage {
                objects: scenes[i].objects.clone(),
                proposals: regions(i, config.k_train),
                descriptors: d.into_iter().map(Some).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let models = train_models(&images, classes, config)?;
    log::info!("trained {} category models", models.len());

    let mut segments_per_scene = Vec::new();
    let mut bound = Vec::new();
    let mut sizes = 0usize;
    for &i in &split.test {
        let masks = regions(i, config.k_test);
        sizes += masks.len();
        let objects: Vec<SegmentMask> = scenes[i].objects.iter().map(|o| o.mask.clone()).collect();
        bound.push((pool_upper_bound(&masks, &objects), objects.len()));
        let d = describe_regions(&scenes[i].frame, &masks, &bank, &dcfg, None)?;
        segments_per_scene.push(label_proposals(&masks, &d, &models)?);
    }
    let objects: usize = bound.iter().map(|b| b.1).sum();
    let pool_upper_bound = if objects == 0 {
        0.0
    } else {
        bound.iter().map(|(b, n)| b * *n as f64).sum::<f64>() / objects as f64
    };

    let mut metrics = Vec::new();
    let mut labelings = Vec::new();
    for &criterion in criteria {
        let predicted: Vec<SceneLabeling> = segments_per_scene
            .iter()
            .map(|s| infer(s, config, criterion))
            .collect::<Result<_>>()?;
        let pairs: Vec<(SceneLabeling, SceneLabeling)> = predicted
            .iter()
            .cloned()
            .zip(split.test.iter().map(|&i| scenes[i].labels.clone()))
            .collect();
        metrics.push((criterion, evaluate_corpus(&pairs)?));
        labelings.push((criterion, predicted));
    }
    Ok(ExperimentReport {
        pool_upper_bound,
        mean_pool_size: if split.test.is_empty() {
            0.0
        } else {
            sizes as f64 / split.test.len() as f64
        },
        split,
        metrics,
        labelings,
    })
}

/// Objects of a scene as masks.
pub fn object_masks(objects: &[Object]) -> Vec<SegmentMask> {
    objects.iter().map(|o| o.mask.clone()).collect()
}

/// Spatial-pyramid scene descriptors of `frames`, with the PCA bank fitted
/// on the pyramid cells of the first `n_fit` frames.
pub fn scene_descriptors(
    frames: &[&RgbdFrame],
    n_fit: usize,
    config: &PipelineConfig,
) -> Result<(PcaBank, Vec<Vec<f64>>)> {
    let dcfg = config.descriptor_config();
    let raw: Vec<Vec<Vec<Vec<f64>>>> = frames
        .par_iter()
        .map(|f| scene_raw_blocks(&FrameContext::new(f, &dcfg)?))
        .collect::<Result<_>>()?;
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); dcfg.blocks.len()];
    for cells in &raw[..n_fit] {
        for cell in cells {
            for (b, v) in cell.iter().enumerate() {
                samples[b].push(v.clone());
            }
        }
    }
    let bank = PcaBank::fit(&dcfg, &samples)?;
    let descriptors = frames
        .par_iter()
        .zip(raw)
        .map(|(f, r)| {
            let ctx = FrameContext::new(f, &dcfg)?;
            let (w, h) = f.dims();
            scene_descriptor_from_raw(&ctx, &bank, &pyramid_cells(w, h), r)
        })
        .collect::<Result<_>>()?;
    Ok((bank, descriptors))
}

/// Held-out scene classification results.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneReport {
    pub names: Vec<String>,
    /// `(scene index, true type, predicted type)` on the test split.
    pub predictions: Vec<(usize, usize, usize)>,
}

impl SceneReport {
    pub fn accuracy(&self) -> f64 {
        if self.predictions.is_empty() {
            return 0.0;
        }
        let hits = self.predictions.iter().filter(|(_, t, p)| t == p).count();
        hits as f64 / self.predictions.len() as f64
    }
}

/// Trains a scene classifier on the training split and classifies the test
/// split.
pub fn scene_experiment(scenes: &[SyntheticScene], config: &PipelineConfig) -> Result<SceneReport> {
    config.validate()?;
    let split = split_indices(scenes.len(), config.train_fraction);
    let order: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
    let frames: Vec<&RgbdFrame> = order.iter().map(|&i| &scenes[i].frame).collect();
    let (_, descriptors) = scene_descriptors(&frames, split.train.len(), config)?;
    let names: Vec<String> = SCENE_TYPES.iter().map(|s| s.to_string()).collect();
    let labels: Vec<usize> = split.train.iter().map(|&i| scenes[i].scene_type).collect();
    let n_train = split.train.len();
    let classifier = SceneClassifier::train(
        &descriptors[..n_train],
        &labels,
        &names,
        config.scene_regularization,
    )?;
    let predictions = split
        .test
        .iter()
        .zip(&descriptors[n_train..])
        .map(|(&i, d)| Ok((i, scenes[i].scene_type, classifier.classify(d)?.0)))
        .collect::<Result<_>>()?;
    Ok(SceneReport { names, predictions })
}
