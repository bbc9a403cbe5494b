mod common;

use common::random_rect;
use depthseg::imaging::SegmentMask;
use depthseg::pipeline::{
    describe_regions, fit_pca_bank, propose, scene_boundaries, scene_experiment, train_models,
    FrameRegions, PipelineConfig,
};
use depthseg::proposals::ObjectnessRanker;
use depthseg::recognition::{
    argmax_class, assemble_training, label_proposals, pyramid_cells, train_category_models,
    CategoryModel, Object, TrainingImage, TrainingSet,
};
use depthseg::regression::Loss;
use depthseg::synth::{generate_corpus, SynthConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pixel_iou(a: &SegmentMask, b: &SegmentMask) -> f64 {
    let (a, b) = (a.to_bools(), b.to_bools());
    let inter = a.iter().zip(&b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(&b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn targets_match_recomputed_overlaps() {
    let config = SynthConfig {
        classes: 4,
        ..Default::default()
    };
    let scenes = generate_corpus(&config, 6, 31).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let images: Vec<TrainingImage> = scenes
        .iter()
        .map(|s| {
            let proposals: Vec<SegmentMask> =
                (0..15).map(|_| random_rect(&mut rng, 128, 96)).collect();
            let n = s.objects.len() + proposals.len();
            TrainingImage {
                objects: s.objects.clone(),
                proposals,
                descriptors: (0..n).map(|k| Some(vec![k as f64])).collect(),
            }
        })
        .collect();
    let classes = [1, 2, 3, 4];
    let set = assemble_training(&images, &classes).unwrap();
    let mut row = 0;
    for img in &images {
        for o in &img.objects {
            for (c, &class) in classes.iter().enumerate() {
                assert_eq!(
                    set.targets[c][row],
                    if o.class_id == class { 1.0 } else { 0.0 }
                );
            }
            row += 1;
        }
        for p in &img.proposals {
            for (c, &class) in classes.iter().enumerate() {
                let want = img
                    .objects
                    .iter()
                    .filter(|o| o.class_id == class)
                    .map(|o| pixel_iou(p, &o.mask))
                    .fold(0.0, f64::max);
                assert!((set.targets[c][row] - want).abs() < 1e-15);
            }
            row += 1;
        }
    }
    assert_eq!(row, set.rows.len());

    let mut broken = images[0].clone();
    broken.descriptors[2] = None;
    assert!(assemble_training(&[broken], &classes).is_err());
}

/// Minimizer of Σ(wᵀx+b−t)² + reg·‖w‖² from the augmented normal equations.
fn normal_equations(x: &DMatrix<f64>, t: &[f64], reg: f64) -> (Vec<f64>, f64) {
    let (n, d) = x.shape();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[(i, j)] } else { 1.0 });
    let mut lhs = a.transpose() * &a;
    for j in 0..d {
        lhs[(j, j)] += reg;
    }
    let rhs = a.transpose() * DVector::from_column_slice(t);
    let beta = lhs.lu().solve(&rhs).unwrap();
    (beta.iter().take(d).copied().collect(), beta[d])
}

fn training_set(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> TrainingSet {
    TrainingSet {
        rows,
        classes: vec![1],
        targets: vec![targets],
    }
}

#[test]
fn ridge_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..100)
        .map(|_| (0..20).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let t: Vec<f64> = (0..100).map(|_| rng.random()).collect();
    let models =
        train_category_models(&training_set(rows.clone(), t.clone()), 1.0, Loss::Ridge).unwrap();
    let x = DMatrix::from_fn(100, 20, |i, j| rows[i][j]);
    let (w, b) = normal_equations(&x, &t, 1.0);
    for (a, e) in models[0].weights.iter().zip(&w) {
        assert!((a - e).abs() < 1e-8);
    }
    assert!((models[0].bias - b).abs() < 1e-8);

    // wide case goes through the dual system
    let wide: Vec<Vec<f64>> = (0..15)
        .map(|_| (0..40).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let tw: Vec<f64> = (0..15).map(|_| rng.random()).collect();
    let m =
        train_category_models(&training_set(wide.clone(), tw.clone()), 0.5, Loss::Ridge).unwrap();
    let (w, b) = normal_equations(&DMatrix::from_fn(15, 40, |i, j| wide[i][j]), &tw, 0.5);
    assert!(m[0]
        .weights
        .iter()
        .zip(&w)
        .all(|(a, e)| (a - e).abs() < 1e-8));
    assert!((m[0].bias - b).abs() < 1e-8);
}

#[test]
fn ridge_limits() {
    let rows = vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]];
    let m = train_category_models(
        &training_set(rows.clone(), vec![0.0, 1.0, 0.0, 1.0]),
        1e-12,
        Loss::Ridge,
    )
    .unwrap();
    assert!((m[0].weights[0] - 1.0).abs() < 1e-9 && m[0].bias.abs() < 1e-9);
    for reg in [0.0, 1.0, 100.0] {
        let m = train_category_models(&training_set(rows.clone(), vec![0.5; 4]), reg, Loss::Ridge)
            .unwrap();
        assert!(m[0].weights[0].abs() < 1e-12 && (m[0].bias - 0.5).abs() < 1e-12);
    }
}

#[test]
fn training_ignores_row_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<Vec<f64>> = (0..60)
        .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let t: Vec<f64> = (0..60).map(|_| rng.random()).collect();
    let a =
        train_category_models(&training_set(rows.clone(), t.clone()), 1.0, Loss::Ridge).unwrap();
    let rev = train_category_models(
        &training_set(
            rows.into_iter().rev().collect(),
            t.into_iter().rev().collect(),
        ),
        1.0,
        Loss::Ridge,
    )
    .unwrap();
    assert!(a[0]
        .weights
        .iter()
        .zip(&rev[0].weights)
        .all(|(x, y)| (x - y).abs() < 1e-8));
    assert!((a[0].bias - rev[0].bias).abs() < 1e-8);
}

fn model(class_id: u32, weights: Vec<f64>, bias: f64) -> CategoryModel {
    CategoryModel {
        class_id,
        weights,
        bias,
        regularization: 1.0,
    }
}

#[test]
fn labels_follow_the_argmax() {
    let models = vec![model(0, vec![0.0], 0.7), model(1, vec![0.0], 0.2)];
    assert_eq!(argmax_class(&models, &[1.0]).unwrap(), (0, 0.7));
    let tie = vec![model(3, vec![0.0], 0.5), model(2, vec![0.0], 0.5)];
    assert_eq!(argmax_class(&tie, &[1.0]).unwrap().0, 2);
    let m = SegmentMask::full(2, 2);
    assert!(label_proposals(&[m], &[vec![1.0, 2.0]], &models).is_err());
}

/// Two classes, a real but short pipeline: proposals, descriptors, ridge.
#[test]
fn two_class_corpus_is_separated() {
    let synth = SynthConfig {
        width: 96,
        height: 72,
        classes: 2,
        grid: 3,
        ..Default::default()
    };
    let scenes = generate_corpus(&synth, 20, 41).unwrap();
    let mut config = PipelineConfig::default();
    for (k, v) in [
        ("grid", "3"),
        ("sigmas", "0.1"),
        ("pca_rgb_sift", "24"),
        ("pca_lbp", "24"),
        ("pca_depth", "24"),
        ("pca_spin", "24"),
        ("pca_samples", "300"),
        ("k_train", "40"),
        ("k_test", "40"),
    ] {
        config.set(k, v).unwrap();
    }
    let ranker = ObjectnessRanker::default();
    let pools: Vec<Vec<SegmentMask>> = scenes
        .iter()
        .map(|s| {
            propose(&scene_boundaries(&s.frame, &config), &config, &ranker)
                .unwrap()
                .masks
        })
        .collect();
    let (train, test) = (0..14, 14..20);
    let regions: Vec<FrameRegions> = train
        .clone()
        .map(|i| FrameRegions {
            frame: &scenes[i].frame,
            masks: scenes[i]
                .objects
                .iter()
                .map(|o| o.mask.clone())
                .chain(pools[i].clone())
                .collect(),
        })
        .collect();
    let bank = fit_pca_bank(&regions, &config).unwrap();
    let dcfg = config.descriptor_config();
    let images: Vec<TrainingImage> = train
        .zip(&regions)
        .map(|(i, r)| TrainingImage {
            objects: scenes[i].objects.clone(),
            proposals: pools[i].clone(),
            descriptors: describe_regions(r.frame, &r.masks, &bank, &dcfg, None)
                .unwrap()
                .into_iter()
                .map(Some)
                .collect(),
        })
        .collect();
    let models = train_models(&images, &[1, 2], &config).unwrap();

    let (mut hits, mut total) = (0, 0);
    let mut own = Vec::new();
    let mut other = Vec::new();
    for i in test {
        let d = describe_regions(&scenes[i].frame, &pools[i], &bank, &dcfg, None).unwrap();
        let labeled = label_proposals(&pools[i], &d, &models).unwrap();
        for seg in &labeled {
            let best: Option<&Object> = scenes[i]
                .objects
                .iter()
                .filter(|o| o.mask.iou(&seg.mask) >= 0.5)
                .max_by(|a, b| a.mask.iou(&seg.mask).total_cmp(&b.mask.iou(&seg.mask)));
            if let Some(o) = best {
                total += 1;
                hits += usize::from(o.class_id == seg.class_id);
            }
        }
        let od = describe_regions(
            &scenes[i].frame,
            &scenes[i]
                .objects
                .iter()
                .map(|o| o.mask.clone())
                .collect::<Vec<_>>(),
            &bank,
            &dcfg,
            None,
        )
        .unwrap();
        for (o, x) in scenes[i].objects.iter().zip(&od) {
            for m in &models {
                let p = m.predict(x);
                if m.class_id == o.class_id {
                    own.push(p)
                } else {
                    other.push(p)
                }
            }
        }
    }
    let accuracy = hits as f64 / total as f64;
    assert!(total >= 20, "only {total} held-out proposals");
    assert!(accuracy >= 0.99, "accuracy {accuracy} over {total}");
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&own) > mean(&other));
}

#[test]
fn kitchen_and_bedroom_are_told_apart() {
    let synth = SynthConfig {
        width: 96,
        height: 72,
        ..Default::default()
    };
    let scenes = generate_corpus(&synth, 30, 51).unwrap();
    let mut config = PipelineConfig::default();
    for (k, v) in [
        ("pca_rgb_sift", "32"),
        ("pca_lbp", "32"),
        ("pca_depth", "32"),
        ("pca_spin", "32"),
    ] {
        config.set(k, v).unwrap();
    }
    let report = scene_experiment(&scenes, &config).unwrap();
    assert_eq!(report.predictions.len(), 9);
    assert!(report.accuracy() >= 0.95, "accuracy {}", report.accuracy());
}

#[test]
fn pyramid_has_twenty_one_cells() {
    for (w, h) in [(64, 48), (97, 51), (128, 96)] {
        let cells = pyramid_cells(w, h);
        assert_eq!(cells.len(), 21);
        assert_eq!(cells[0].area(), w * h);
        let level1: usize = cells[1..5].iter().map(|c| c.area()).sum();
        assert_eq!(level1, w * h);
    }
}

proptest! {
    #[test]
    fn argmax_survives_increasing_affine_maps(
        seed in any::<u64>(),
        scale in 0.01f64..100.0,
        shift in -10.0f64..10.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<CategoryModel> = (0..5)
            .map(|c| model(c, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(), rng.random()))
            .collect();
        let mapped: Vec<CategoryModel> = models
            .iter()
            .map(|m| model(m.class_id, m.weights.iter().map(|w| w * scale).collect(), m.bias * scale + shift))
            .collect();
        for _ in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            prop_assert_eq!(argmax_class(&models, &x).unwrap().0, argmax_class(&mapped, &x).unwrap().0);
        }
    }
}
