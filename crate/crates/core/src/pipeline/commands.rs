//! File-based stages. Each reads the documented outputs of earlier stages and
//! writes its own, plus a `scenes.txt` listing the scenes it processed.
//!
//! Layouts, per scene directory `scene_NNNN/`:
//! - propose: `boundaries.raw`, `pool/` (PBM masks and `index.txt`)
//! - describe: `pca.bank` at the root; `objects.dsc`, `proposals.dsc`
//! - train: `models.bin` and `legend.txt` at the root
//! - predict: `segments.txt` with `proposal_index class_id confidence` lines
//! - infer: `labels.pgm`; `legend.txt` at the root
//! - eval: `metrics.txt` and `overlays/scene_NNNN.ppm`
//! - scene: `scene_report.txt`

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::PipelineConfig;
use super::stages::*;
use crate::boundaries::BoundaryMap;
use crate::descriptors::{read_descriptor_file, write_descriptor_file};
use crate::error::{Error, Result};
use crate::imaging::netpbm::write_ppm;
use crate::imaging::SegmentMask;
use crate::inference::{
    evaluate_corpus, load_legend, pool_upper_bound, save_legend, SceneLabeling,
};
use crate::proposals::ProposalPool;
use crate::recognition::{
    label_proposals, load_models, save_models, LabeledSegment, TrainingImage,
};
use crate::synth::{
    generate_corpus, list_scenes, load_corpus_legend, load_scene, save_corpus, SynthConfig,
    SyntheticScene,
};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_scene_list(dir: &Path, names: &[String]) -> Result<()> {
    let text: String = names.iter().map(|n| format!("{n}\n")).collect();
    write_text(&dir.join("scenes.txt"), &text)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "missing input (run the upstream stage first)",
            ),
        ))
    }
}

struct Corpus {
    root: PathBuf,
    names: Vec<String>,
    split: Split,
}

impl Corpus {
    fn open(root: &Path, config: &PipelineConfig) -> Result<Self> {
        require(&root.join("scenes.txt"))?;
        let names = list_scenes(root)?;
        let split = split_indices(names.len(), config.train_fraction);
        Ok(Corpus {
            root: root.to_path_buf(),
            names,
            split,
        })
    }

    fn scene(&self, i: usize) -> Result<SyntheticScene> {
        load_scene(&self.root.join(&self.names[i]))
    }

    fn is_train(&self, i: usize) -> bool {
        self.split.train.contains(&i)
    }

    /// Index of a scene directory name.
    fn index_of(&self, name: &str, listed_in: &Path) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::format(listed_in, format!("scene {name} is not in the corpus")))
    }
}

/// Proposal masks of one scene, the first `k` of its ranked pool.
fn load_proposals(proposals: &Path, name: &str, k: usize) -> Result<Vec<SegmentMask>> {
    let dir = proposals.join(name).join("pool");
    require(&dir.join("index.txt"))?;
    let mut masks = ProposalPool::load(&dir, None)?.masks;
    masks.truncate(k);
    Ok(masks)
}

fn read_rows(path: &Path, expected: usize) -> Result<Vec<Vec<f64>>> {
    require(path)?;
    let rows = read_descriptor_file(path)?;
    if rows.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} rows, found {}", rows.len()),
        ));
    }
    Ok(rows)
}

/// Writes a synthetic corpus.
pub fn cmd_synth(out: &Path, synth: &SynthConfig, count: usize, seed: u64) -> Result<()> {
    let scenes = generate_corpus(synth, count, seed)?;
    save_corpus(out, &scenes, synth.classes)
}

/// Boundary maps and ranked proposal pools. With `boundaries_in`, maps are
/// read from `<dir>/scene_NNNN.raw` instead of being estimated.
pub fn cmd_propose(
    config: &PipelineConfig,
    corpus: &Path,
    out: &Path,
    boundaries_in: Option<&Path>,
) -> Result<()> {
    let corpus = Corpus::open(corpus, config)?;
    let ranker = load_ranker(config)?;
    create_dir(out)?;
    for (i, name) in corpus.names.iter().enumerate() {
        let scene = corpus.scene(i)?;
        let boundaries = match boundaries_in {
            Some(dir) => {
                let path = dir.join(format!("{name}.raw"));
                let map = BoundaryMap::read_raw(&path)?;
                if map.dims() != scene.frame.dims() {
                    return Err(Error::format(
                        &path,
                        "boundary map size differs from the frame",
                    ));
                }
                map
            }
            None => scene_boundaries(&scene.frame, config),
        };
        let pool = propose(&boundaries, config, &ranker)?;
        let dir = out.join(name);
        create_dir(&dir)?;
        boundaries.write_raw(&dir.join("boundaries.raw"))?;
        let pool_dir = dir.join("pool");
        if pool_dir.exists() {
            std::fs::remove_dir_all(&pool_dir).map_err(|e| Error::io(&pool_dir, e))?;
        }
        pool.save(&pool_dir)?;
        log::info!("{name}: {} proposals", pool.len());
    }
    write_scene_list(out, &corpus.names)?;
    write_text(&out.join("config.txt"), &config.to_text())
}

/// Fits the PCA bank on the training split and writes region descriptors:
/// ground-truth objects and the first `k_train` (training) or `k_test`
/// (test) proposals. `external` holds aligned extra rows in the same layout.
pub fn cmd_describe(
    config: &PipelineConfig,
    corpus: &Path,
    proposals: &Path,
    out: &Path,
    external: Option<&Path>,
) -> Result<()> {
    let corpus = Corpus::open(corpus, config)?;
    let scenes: Vec<SyntheticScene> = (0..corpus.names.len())
        .map(|i| corpus.scene(i))
        .collect::<Result<_>>()?;
    let k = |i: usize| {
        if corpus.is_train(i) {
            config.k_train
        } else {
            config.k_test
        }
    };
    let props: Vec<Vec<SegmentMask>> = corpus
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| load_proposals(proposals, n, k(i)))
        .collect::<Result<_>>()?;
    let train: Vec<FrameRegions> = corpus
        .split
        .train
        .iter()
        .map(|&i| FrameRegions {
            frame: &scenes[i].frame,
            masks: object_masks(&scenes[i].objects)
                .into_iter()
                .chain(props[i].iter().cloned())
                .collect(),
        })
        .collect();
    let bank = fit_pca_bank(&train, config)?;
    create_dir(out)?;
    bank.save(&out.join("pca.bank"))?;
    let dcfg = config.descriptor_config();
    for (i, name) in corpus.names.iter().enumerate() {
        let dir = out.join(name);
        create_dir(&dir)?;
        for (file, masks) in [
            ("objects.dsc", object_masks(&scenes[i].objects)),
            ("proposals.dsc", props[i].clone()),
        ] {
            let ext = match external {
                Some(root) => Some(read_rows(&root.join(name).join(file), masks.len())?),
                None => None,
            };
            let rows = describe_regions(&scenes[i].frame, &masks, &bank, &dcfg, ext.as_deref())?;
            write_descriptor_file(&dir.join(file), &rows)?;
        }
        log::info!("{name}: described {} proposals", props[i].len());
    }
    write_scene_list(out, &corpus.names)?;
    write_text(&out.join("config.txt"), &config.to_text())
}

/// Per-class regressors from the training split.
pub fn cmd_train(
    config: &PipelineConfig,
    corpus: &Path,
    proposals: &Path,
    descriptors: &Path,
    out: &Path,
) -> Result<()> {
    let corpus = Corpus::open(corpus, config)?;
    require(&descriptors.join("pca.bank"))?;
    let legend = load_corpus_legend(&corpus.root)?;
    let classes: Vec<u32> = legend.iter().map(|(c, _)| *c).collect();
    let images: Vec<TrainingImage> = corpus
        .split
        .train
        .iter()
        .map(|&i| {
            let name = &corpus.names[i];
            let scene = corpus.scene(i)?;
            let masks = load_proposals(proposals, name, config.k_train)?;
            let dir = descriptors.join(name);
            let mut rows = read_rows(&dir.join("objects.dsc"), scene.objects.len())?;
            rows.extend(read_rows(&dir.join("proposals.dsc"), masks.len())?);
            Ok(TrainingImage {
                objects: scene.objects,
                proposals: masks,
                descriptors: rows.into_iter().map(Some).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let models = train_models(&images, &classes, config)?;
    create_dir(out)?;
    save_models(&out.join("models.bin"), &models)?;
    save_legend(&out.join("legend.txt"), &legend)
}

/// Labels the first `k_test` proposals of every test scene.
pub fn cmd_predict(
    config: &PipelineConfig,
    corpus: &Path,
    proposals: &Path,
    descriptors: &Path,
    models: &Path,
    out: &Path,
) -> Result<()> {
    let corpus = Corpus::open(corpus, config)?;
    let model_path = models.join("models.bin");
    require(&model_path)?;
    let trained = load_models(&model_path)?;
    let legend = load_legend(&models.join("legend.txt"))?;
    create_dir(out)?;
    let mut names = Vec::new();
    for &i in &corpus.split.test {
        let name = &corpus.names[i];
        let masks = load_proposals(proposals, name, config.k_test)?;
        let path = descriptors.join(name).join("proposals.dsc");
        let rows = read_rows(&path, masks.len())?;
        if let (Some(m), Some(r)) = (trained.first(), rows.first()) {
            if m.dim() != r.len() {
                return Err(Error::format(
                    &path,
                    format!(
                        "descriptor dimension {} does not match {} ({})",
                        r.len(),
                        model_path.display(),
                        m.dim()
                    ),
                ));
            }
        }
        let segments = label_proposals(&masks, &rows, &trained)?;
        let dir = out.join(name);
        create_dir(&dir)?;
        let mut text = String::new();
        for (k, s) in segments.iter().enumerate() {
            writeln!(text, "{k} {} {:?}", s.class_id, s.confidence).unwrap();
        }
        write_text(&dir.join("segments.txt"), &text)?;
        names.push(name.clone());
    }
    save_legend(&out.join("legend.txt"), &legend)?;
    write_scene_list(out, &names)
}

fn read_segments(path: &Path, masks: &[SegmentMask]) -> Result<Vec<LabeledSegment>> {
    require(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let bad = || {
            Error::format(
                path,
                format!("line {}: expected `index class confidence`", lineno + 1),
            )
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let k: usize = f[0].parse().map_err(|_| bad())?;
        let mask = masks
            .get(k)
            .ok_or_else(|| Error::format(path, format!("proposal {k} does not exist")))?;
        out.push(LabeledSegment {
            mask: mask.clone(),
            class_id: f[1].parse().map_err(|_| bad())?,
            confidence: f[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Paints the labeled proposals of every predicted scene.
pub fn cmd_infer(
    config: &PipelineConfig,
    proposals: &Path,
    predictions: &Path,
    out: &Path,
) -> Result<()> {
    require(&predictions.join("scenes.txt"))?;
    let names = list_scenes(predictions)?;
    create_dir(out)?;
    for name in &names {
        let masks = load_proposals(proposals, name, config.k_test)?;
        let segments = read_segments(&predictions.join(name).join("segments.txt"), &masks)?;
        let labeling = infer(&segments, config, config.criterion)?;
        let dir = out.join(name);
        create_dir(&dir)?;
        labeling.save_pgm(&dir.join("labels.pgm"))?;
    }
    save_legend(
        &out.join("legend.txt"),
        &load_legend(&predictions.join("legend.txt"))?,
    )?;
    write_text(
        &out.join("criterion.txt"),
        &format!("{}\n", config.criterion.name()),
    )?;
    write_scene_list(out, &names)
}

/// Fixed palette; class 0 is unlabeled.
const PALETTE: [[u8; 3]; 9] = [
    [40, 40, 40],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
];

fn class_color(class: u32) -> [u8; 3] {
    if class == 0 {
        PALETTE[0]
    } else {
        PALETTE[1 + (class as usize - 1) % (PALETTE.len() - 1)]
    }
}

/// Ground truth (left) and prediction (right) blended over the gray image,
/// separated by a white bar.
pub fn overlay(
    gray: &[f64],
    truth: &SceneLabeling,
    predicted: &SceneLabeling,
) -> (usize, usize, Vec<u8>) {
    const GAP: usize = 4;
    let (w, h) = truth.dims();
    let ow = 2 * w + GAP;
    let mut rgb = vec![255u8; ow * h * 3];
    for y in 0..h {
        for x in 0..w {
            let g = gray[y * w + x].clamp(0.0, 1.0) * 255.0;
            for (side, lab) in [(0, truth), (w + GAP, predicted)] {
                let c = class_color(lab.class_at(x, y));
                let o = (y * ow + side + x) * 3;
                for ch in 0..3 {
                    rgb[o + ch] = (0.4 * g + 0.6 * f64::from(c[ch])).round() as u8;
                }
            }
        }
    }
    (ow, h, rgb)
}

/// Metrics report and overlays. With `proposals`, the report also holds the
/// pool upper bound of the first `k_test` proposals.
pub fn cmd_eval(
    config: &PipelineConfig,
    corpus: &Path,
    labelings: &Path,
    proposals: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let corpus = Corpus::open(corpus, config)?;
    let list = labelings.join("scenes.txt");
    require(&list)?;
    let names = list_scenes(labelings)?;
    let legend = load_legend(&labelings.join("legend.txt"))?;
    let overlays = out.join("overlays");
    create_dir(&overlays)?;
    let mut pairs = Vec::new();
    let (mut bound_sum, mut objects) = (0.0, 0usize);
    for name in &names {
        let scene = corpus.scene(corpus.index_of(name, &list)?)?;
        let path = labelings.join(name).join("labels.pgm");
        require(&path)?;
        let predicted = SceneLabeling::load_pgm(&path)?;
        if predicted.dims() != scene.labels.dims() {
            return Err(Error::format(
                &path,
                "labeling size differs from the ground truth",
            ));
        }
        let (w, h, rgb) = overlay(&scene.frame.gray(), &scene.labels, &predicted);
        write_ppm(&overlays.join(format!("{name}.ppm")), w, h, &rgb)?;
        if let Some(p) = proposals {
            let masks = load_proposals(p, name, config.k_test)?;
            let gt = object_masks(&scene.objects);
            bound_sum += pool_upper_bound(&masks, &gt) * gt.len() as f64;
            objects += gt.len();
        }
        pairs.push((predicted, scene.labels));
    }
    let metrics = evaluate_corpus(&pairs)?;
    let mut report = String::new();
    writeln!(report, "scenes {}", names.len()).unwrap();
    if let Ok(c) = std::fs::read_to_string(labelings.join("criterion.txt")) {
        writeln!(report, "criterion {}", c.trim()).unwrap();
    }
    writeln!(report, "mean_recall {:.6}", metrics.mean_recall).unwrap();
    writeln!(report, "pixel_accuracy {:.6}", metrics.pixel_accuracy).unwrap();
    if proposals.is_some() {
        let bound = if objects == 0 {
            0.0
        } else {
            bound_sum / objects as f64
        };
        writeln!(report, "pool_upper_bound {bound:.6}").unwrap();
    }
    for (class, recall) in &metrics.per_class {
        let name = legend
            .iter()
            .find(|(c, _)| c == class)
            .map_or("?", |(_, n)| n.as_str());
        writeln!(report, "recall {class} {name} {recall:.6}").unwrap();
    }
    write_text(&out.join("metrics.txt"), &report)
}

/// Scene classification on the corpus split.
pub fn cmd_scene(config: &PipelineConfig, corpus: &Path, out: &Path) -> Result<()> {
    let corpus = Corpus::open(corpus, config)?;
    let scenes: Vec<SyntheticScene> = (0..corpus.names.len())
        .map(|i| corpus.scene(i))
        .collect::<Result<_>>()?;
    let report = scene_experiment(&scenes, config)?;
    let mut text = String::new();
    writeln!(text, "train {}", corpus.split.train.len()).unwrap();
    writeln!(text, "test {}", corpus.split.test.len()).unwrap();
    writeln!(text, "accuracy {:.6}", report.accuracy()).unwrap();
    for (i, t, p) in &report.predictions {
        writeln!(
            text,
            "scene {} true {} predicted {}",
            corpus.names[*i], report.names[*t], report.names[*p]
        )
        .unwrap();
    }
    create_dir(out)?;
    write_text(&out.join("scene_report.txt"), &text)
}

/// Fits objectness ranker weights on the training split.
pub fn cmd_ranker(config: &PipelineConfig, corpus: &Path, out: &Path) -> Result<()> {
    let corpus = Corpus::open(corpus, config)?;
    let scenes: Vec<SyntheticScene> = corpus
        .split
        .train
        .iter()
        .map(|&i| corpus.scene(i))
        .collect::<Result<_>>()?;
    let refs: Vec<&SyntheticScene> = scenes.iter().collect();
    let ranker = fit_ranker(&refs, config, 1.0)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    ranker.save(out)
}
