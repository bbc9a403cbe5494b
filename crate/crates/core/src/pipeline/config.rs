//! Flat `key = value` experiment configuration.

use std::path::{Path, PathBuf};

use crate::boundaries::GradientParams;
use crate::descriptors::{BlockKind, DescriptorConfig};
use crate::error::{Error, Result};
use crate::inference::Criterion;
use crate::parametric::LambdaRange;
use crate::proposals::ProposalConfig;
use crate::regression::Loss;

/// Every tunable of the pipeline. Built-in defaults are overridden by a
/// config file, which is overridden by command-line settings.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub grid: usize,
    pub sigmas: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub min_area: f64,
    pub max_area: f64,
    pub dedup_iou: f64,
    pub gamma: f64,
    pub k_train: usize,
    pub k_test: usize,
    pub use_depth: bool,
    pub boundary_scales: Vec<f64>,
    pub boundary_orientations: usize,
    pub boundary_percentile: f64,
    pub boundary_thin: bool,
    pub blocks: Vec<BlockKind>,
    pub point_cloud: bool,
    pub power: f64,
    pub spin_bins: usize,
    pub spin_radii: Vec<f64>,
    pub pca_rgb_sift: usize,
    pub pca_lbp: usize,
    pub pca_depth: usize,
    pub pca_spin: usize,
    /// Regions sampled from the training split to fit the PCA bank.
    pub pca_samples: usize,
    pub loss: LossKind,
    pub svr_epsilon: f64,
    pub regularization: f64,
    pub segments: usize,
    pub criterion: Criterion,
    pub train_fraction: f64,
    pub scene_regularization: f64,
    /// Seed of the PCA region subsample.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Objectness ranker weights file; built-in weights when unset.
    pub ranker: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Ridge,
    Svr,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let p = ProposalConfig::default();
        let g = GradientParams::default();
        let d = DescriptorConfig::default();
        PipelineConfig {
            grid: 5,
            sigmas: p.sigmas,
            lambda_min: p.lambda_range.min,
            lambda_max: p.lambda_range.max,
            min_area: p.min_area_fraction,
            max_area: p.max_area_fraction,
            dedup_iou: p.dedup_iou,
            gamma: 0.75,
            k_train: 300,
            k_test: 500,
            use_depth: true,
            boundary_scales: g.scales,
            boundary_orientations: g.orientations,
            boundary_percentile: g.percentile,
            boundary_thin: g.thin,
            blocks: d.blocks,
            point_cloud: d.point_cloud,
            power: d.power,
            spin_bins: d.spin_bins,
            spin_radii: d.spin_radii,
            pca_rgb_sift: d.pca_rgb_sift,
            pca_lbp: d.pca_lbp,
            pca_depth: d.pca_depth,
            pca_spin: d.pca_spin,
            pca_samples: 800,
            loss: LossKind::Ridge,
            svr_epsilon: 0.1,
            regularization: 1.0,
            segments: 150,
            criterion: Criterion::OverlapConfidence,
            train_fraction: 0.7,
            scene_regularization: 1.0,
            seed: 0,
            jobs: 0,
            ranker: None,
        }
    }
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| bad(key, format!("cannot parse {value:?}")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = parse_num(key, value)?;
    if !v.is_finite() {
        return Err(bad(key, "must be finite"));
    }
    Ok(v)
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let list = value
        .split(',')
        .map(|t| parse_f64(key, t.trim()))
        .collect::<Result<Vec<_>>>()?;
    if list.is_empty() {
        return Err(bad(key, "list is empty"));
    }
    Ok(list)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, format!("expected true or false, got {value:?}"))),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, "must be > 0"))
    }
}

fn fraction(key: &str, v: f64, open_low: bool) -> Result<f64> {
    let ok = if open_low {
        v > 0.0 && v <= 1.0
    } else {
        (0.0..=1.0).contains(&v)
    };
    if ok {
        Ok(v)
    } else {
        Err(bad(key, "must lie in [0, 1]"))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(bad(key, "must be >= 1"))
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn parse_blocks(key: &str, value: &str) -> Result<Vec<BlockKind>> {
    match value {
        "all" => return Ok(BlockKind::ALL.to_vec()),
        "rgb" => return Ok(BlockKind::RGB.to_vec()),
        "none" => return Ok(Vec::new()),
        _ => {}
    }
    let mut out = Vec::new();
    for name in value.split(',').map(str::trim) {
        let kind = BlockKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| bad(key, format!("unknown block {name:?}")))?;
        if out.contains(&kind) {
            return Err(bad(key, format!("block {name:?} listed twice")));
        }
        out.push(kind);
    }
    // concatenation order is fixed regardless of listing order
    out.sort_by_key(|k| BlockKind::ALL.iter().position(|a| a == k));
    Ok(out)
}

impl PipelineConfig {
    /// Defaults overridden by the file's settings.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = PipelineConfig::default();
        config.apply_text(&text).map_err(|e| match e {
            Error::Config { key, reason } => Error::format(path, format!("key `{key}`: {reason}")),
            other => other,
        })?;
        Ok(config)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line, "expected `key = value`"))?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    /// Sets one key from its text form, checking its legal range.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "grid" => self.grid = at_least_one(key, parse_num(key, value)?)?,
            "sigmas" | "sigma" => {
                self.sigmas = parse_list(key, value)?;
                for &s in &self.sigmas {
                    positive(key, s)?;
                }
            }
            "lambda_min" => self.lambda_min = parse_f64(key, value)?,
            "lambda_max" => self.lambda_max = parse_f64(key, value)?,
            "lambda_range" => {
                let l = parse_list(key, value)?;
                if l.len() != 2 {
                    return Err(bad(key, "expected `min,max`"));
                }
                self.lambda_min = l[0];
                self.lambda_max = l[1];
            }
            "min_area" => self.min_area = fraction(key, parse_f64(key, value)?, false)?,
            "max_area" => self.max_area = fraction(key, parse_f64(key, value)?, true)?,
            "dedup_iou" => self.dedup_iou = fraction(key, parse_f64(key, value)?, true)?,
            "gamma" => {
                let g = parse_f64(key, value)?;
                if g < 0.0 {
                    return Err(bad(key, "must be >= 0"));
                }
                self.gamma = g;
            }
            "k_train" => self.k_train = at_least_one(key, parse_num(key, value)?)?,
            "k_test" => self.k_test = at_least_one(key, parse_num(key, value)?)?,
            "use_depth" | "depth" => self.use_depth = parse_bool(key, value)?,
            "boundary_scales" => {
                self.boundary_scales = parse_list(key, value)?;
                for &s in &self.boundary_scales {
                    positive(key, s)?;
                }
            }
            "boundary_orientations" => {
                self.boundary_orientations = at_least_one(key, parse_num(key, value)?)?
            }
            "boundary_percentile" => {
                self.boundary_percentile = fraction(key, parse_f64(key, value)?, true)?
            }
            "boundary_thin" => self.boundary_thin = parse_bool(key, value)?,
            "blocks" => self.blocks = parse_blocks(key, value)?,
            "point_cloud" => self.point_cloud = parse_bool(key, value)?,
            "power" => {
                let p = parse_f64(key, value)?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(bad(key, "must lie in (0, 1]"));
                }
                self.power = p;
            }
            "spin_bins" => self.spin_bins = at_least_one(key, parse_num(key, value)?)?,
            "spin_radii" => {
                self.spin_radii = parse_list(key, value)?;
                for &r in &self.spin_radii {
                    positive(key, r)?;
                }
            }
            "pca_rgb_sift" => self.pca_rgb_sift = at_least_one(key, parse_num(key, value)?)?,
            "pca_lbp" => self.pca_lbp = at_least_one(key, parse_num(key, value)?)?,
            "pca_depth" => self.pca_depth = at_least_one(key, parse_num(key, value)?)?,
            "pca_spin" => self.pca_spin = at_least_one(key, parse_num(key, value)?)?,
            "pca_samples" => {
                let n: usize = parse_num(key, value)?;
                if n < 2 {
                    return Err(bad(key, "must be >= 2"));
                }
                self.pca_samples = n;
            }
            "loss" => {
                self.loss = match value {
                    "ridge" => LossKind::Ridge,
                    "svr" => LossKind::Svr,
                    _ => return Err(bad(key, format!("expected ridge or svr, got {value:?}"))),
                }
            }
            "svr_epsilon" => {
                let e = parse_f64(key, value)?;
                if e < 0.0 {
                    return Err(bad(key, "must be >= 0"));
                }
                self.svr_epsilon = e;
            }
            "regularization" => self.regularization = positive(key, parse_f64(key, value)?)?,
            "segments" => self.segments = at_least_one(key, parse_num(key, value)?)?,
            "criterion" => {
                self.criterion = Criterion::parse(value).ok_or_else(|| {
                    bad(
                        key,
                        format!(
                            "expected overlap, overlap_confidence or confidence, got {value:?}"
                        ),
                    )
                })?
            }
            "train_fraction" => {
                let f = parse_f64(key, value)?;
                if !(f > 0.0 && f < 1.0) {
                    return Err(bad(key, "must lie in (0, 1)"));
                }
                self.train_fraction = f;
            }
            "scene_regularization" => {
                self.scene_regularization = positive(key, parse_f64(key, value)?)?
            }
            "seed" => self.seed = parse_num(key, value)?,
            "jobs" => self.jobs = parse_num(key, value)?,
            "ranker" => self.ranker = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks constraints that span several keys.
    pub fn validate(&self) -> Result<()> {
        LambdaRange::new(self.lambda_min, self.lambda_max).map_err(|_| {
            bad(
                "lambda_min",
                format!(
                    "need 0 <= lambda_min <= lambda_max, got [{}, {}]",
                    self.lambda_min, self.lambda_max
                ),
            )
        })?;
        if self.min_area >= self.max_area {
            return Err(bad("min_area", "must be below max_area"));
        }
        if self.blocks.is_empty() && !self.point_cloud {
            return Err(bad(
                "blocks",
                "need at least one block or point_cloud = true",
            ));
        }
        Ok(())
    }

    /// Every written key, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let blocks = if self.blocks.is_empty() {
            "none".to_string()
        } else {
            self.blocks
                .iter()
                .map(|b| b.name())
                .collect::<Vec<_>>()
                .join(",")
        };
        let values: Vec<(&str, String)> = vec![
            ("grid", self.grid.to_string()),
            ("sigmas", join(&self.sigmas)),
            ("lambda_min", format!("{}", self.lambda_min)),
            ("lambda_max", format!("{}", self.lambda_max)),
            ("min_area", format!("{}", self.min_area)),
            ("max_area", format!("{}", self.max_area)),
            ("dedup_iou", format!("{}", self.dedup_iou)),
            ("gamma", format!("{}", self.gamma)),
            ("k_train", self.k_train.to_string()),
            ("k_test", self.k_test.to_string()),
            ("use_depth", self.use_depth.to_string()),
            ("boundary_scales", join(&self.boundary_scales)),
            (
                "boundary_orientations",
                self.boundary_orientations.to_string(),
            ),
            (
                "boundary_percentile",
                format!("{}", self.boundary_percentile),
            ),
            ("boundary_thin", self.boundary_thin.to_string()),
            ("blocks", blocks),
            ("point_cloud", self.point_cloud.to_string()),
            ("power", format!("{}", self.power)),
            ("spin_bins", self.spin_bins.to_string()),
            ("spin_radii", join(&self.spin_radii)),
            ("pca_rgb_sift", self.pca_rgb_sift.to_string()),
            ("pca_lbp", self.pca_lbp.to_string()),
            ("pca_depth", self.pca_depth.to_string()),
            ("pca_spin", self.pca_spin.to_string()),
            ("pca_samples", self.pca_samples.to_string()),
            (
                "loss",
                match self.loss {
                    LossKind::Ridge => "ridge".into(),
                    LossKind::Svr => "svr".into(),
                },
            ),
            ("svr_epsilon", format!("{}", self.svr_epsilon)),
            ("regularization", format!("{}", self.regularization)),
            ("segments", self.segments.to_string()),
            ("criterion", self.criterion.name().to_string()),
            ("train_fraction", format!("{}", self.train_fraction)),
            (
                "scene_regularization",
                format!("{}", self.scene_regularization),
            ),
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            (
                "ranker",
                self.ranker
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
        ];
        values
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Color-only run: no depth boundaries and no depth descriptor blocks.
    pub fn without_depth(mut self) -> Self {
        self.use_depth = false;
        self.blocks.retain(|b| !b.uses_depth());
        self.point_cloud = false;
        self
    }

    pub fn proposal_config(&self) -> ProposalConfig {
        ProposalConfig {
            sigmas: self.sigmas.clone(),
            lambda_range: LambdaRange {
                min: self.lambda_min,
                max: self.lambda_max,
            },
            min_area_fraction: self.min_area,
            max_area_fraction: self.max_area,
            dedup_iou: self.dedup_iou,
        }
    }

    pub fn gradient_params(&self) -> GradientParams {
        GradientParams {
            scales: self.boundary_scales.clone(),
            orientations: self.boundary_orientations,
            percentile: self.boundary_percentile,
            thin: self.boundary_thin,
        }
    }

    pub fn descriptor_config(&self) -> DescriptorConfig {
        DescriptorConfig {
            blocks: self.blocks.clone(),
            point_cloud: self.point_cloud,
            power: self.power,
            spin_bins: self.spin_bins,
            spin_radii: self.spin_radii.clone(),
            pca_rgb_sift: self.pca_rgb_sift,
            pca_lbp: self.pca_lbp,
            pca_depth: self.pca_depth,
            pca_spin: self.pca_spin,
        }
    }

    pub fn loss(&self) -> Loss {
        match self.loss {
            LossKind::Ridge => Loss::Ridge,
            LossKind::Svr => Loss::Svr {
                c: 1.0 / self.regularization,
                epsilon: self.svr_epsilon,
            },
        }
    }

    /// Largest proposal count any stage needs.
    pub fn k_max(&self) -> usize {
        self.k_train.max(self.k_test)
    }
}
