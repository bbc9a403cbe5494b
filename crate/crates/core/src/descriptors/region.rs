use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::bbox3d::point_cloud_features;
use super::local::{grid_points, lbp_at, lbp_codes, sift_like_at, GradientField, STRIDE};
use super::o2p::{flatten_and_normalize, pooled_log, DEFAULT_POWER};
use super::pca::{pca_fit, PcaModel};
use super::spin::{estimate_normal, SpinIndex, DEFAULT_RADII};
use super::{channel_values, check_mask, finish, spin_locations, Channel};
use crate::error::{Error, Result};
use crate::imaging::{backproject, PointCloud, RgbdFrame, SegmentMask};

/// Descriptor families, in the order their blocks are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    RgbSift,
    RgbSiftMasked,
    RgbLbp,
    DepthSift,
    DepthSiftMasked,
    DepthLbp,
    Spin,
    SpinMasked,
}

impl BlockKind {
    pub const ALL: [BlockKind; 8] = [
        BlockKind::RgbSift,
        BlockKind::RgbSiftMasked,
        BlockKind::RgbLbp,
        BlockKind::DepthSift,
        BlockKind::DepthSiftMasked,
        BlockKind::DepthLbp,
        BlockKind::Spin,
        BlockKind::SpinMasked,
    ];
    pub const RGB: [BlockKind; 3] = [
        BlockKind::RgbSift,
        BlockKind::RgbSiftMasked,
        BlockKind::RgbLbp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::RgbSift => "rgb_sift",
            BlockKind::RgbSiftMasked => "rgb_sift_masked",
            BlockKind::RgbLbp => "rgb_lbp",
            BlockKind::DepthSift => "depth_sift",
            BlockKind::DepthSiftMasked => "depth_sift_masked",
            BlockKind::DepthLbp => "depth_lbp",
            BlockKind::Spin => "spin",
            BlockKind::SpinMasked => "spin_masked",
        }
    }

    pub fn uses_depth(self) -> bool {
        !matches!(
            self,
            BlockKind::RgbSift | BlockKind::RgbSiftMasked | BlockKind::RgbLbp
        )
    }

    fn masked(self) -> bool {
        matches!(
            self,
            BlockKind::RgbSiftMasked | BlockKind::DepthSiftMasked | BlockKind::SpinMasked
        )
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorConfig {
    pub blocks: Vec<BlockKind>,
    pub point_cloud: bool,
    pub power: f64,
    pub spin_bins: usize,
    pub spin_radii: Vec<f64>,
    pub pca_rgb_sift: usize,
    pub pca_lbp: usize,
    pub pca_depth: usize,
    pub pca_spin: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            blocks: BlockKind::ALL.to_vec(),
            point_cloud: true,
            power: DEFAULT_POWER,
            spin_bins: 8,
            spin_radii: DEFAULT_RADII.to_vec(),
            pca_rgb_sift: 512,
            pca_lbp: 256,
            pca_depth: 256,
            pca_spin: 256,
        }
    }
}

impl DescriptorConfig {
    /// Color-only variant: no depth descriptors, spin images or box block.
    pub fn rgb_only(mut self) -> Self {
        self.blocks.retain(|b| !b.uses_depth());
        self.point_cloud = false;
        self
    }

    pub fn uses_depth(&self) -> bool {
        self.point_cloud || self.blocks.iter().any(|b| b.uses_depth())
    }

    pub fn pca_dim(&self, kind: BlockKind) -> usize {
        match kind {
            BlockKind::RgbSift | BlockKind::RgbSiftMasked => self.pca_rgb_sift,
            BlockKind::RgbLbp | BlockKind::DepthLbp => self.pca_lbp,
            BlockKind::DepthSift | BlockKind::DepthSiftMasked => self.pca_depth,
            BlockKind::Spin | BlockKind::SpinMasked => self.pca_spin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() && !self.point_cloud {
            return Err(Error::param(
                "descriptor blocks",
                "at least one block is required",
            ));
        }
        if !(self.power > 0.0 && self.power <= 1.0) {
            return Err(Error::param("power", "must be in (0, 1]"));
        }
        if self.spin_bins == 0
            || self.spin_radii.is_empty()
            || self.spin_radii.iter().any(|r| !(*r > 0.0))
        {
            return Err(Error::param("spin", "need bins >= 1 and positive radii"));
        }
        Ok(())
    }
}

/// Per-frame precomputation shared by every region of the frame: gradient
/// fields, LBP codes, the point cloud, and the unmasked local descriptors at
/// every grid point.
pub struct FrameContext<'a> {
    frame: &'a RgbdFrame,
    config: DescriptorConfig,
    fields: [GradientField; 2],
    codes: [Vec<u8>; 2],
    cloud: Option<PointCloud>,
    spin_index: Option<SpinIndex>,
    grid_width: usize,
    /// Unmasked rows per block slot and grid cell.
    cached: Vec<Vec<Option<Vec<f64>>>>,
}

impl<'a> FrameContext<'a> {
    pub fn new(frame: &'a RgbdFrame, config: &DescriptorConfig) -> Result<Self> {
        config.validate()?;
        let (w, h) = frame.dims();
        let gray = channel_values(frame, Channel::Intensity);
        let depth = channel_values(frame, Channel::Depth);
        let (cloud, spin_index) = if config.uses_depth() {
            let cloud = backproject(frame)?;
            let cell = config.spin_radii.iter().copied().fold(0.0, f64::max);
            let index = SpinIndex::new(cloud.points().to_vec(), cell);
            (Some(cloud), Some(index))
        } else {
            (None, None)
        };
        let mut ctx = FrameContext {
            frame,
            config: config.clone(),
            fields: [
                GradientField::new(&gray, w, h),
                GradientField::new(&depth, w, h),
            ],
            codes: [lbp_codes(&gray, w, h), lbp_codes(&depth, w, h)],
            cloud,
            spin_index,
            grid_width: w.div_ceil(STRIDE),
            cached: vec![Vec::new(); BlockKind::ALL.len()],
        };
        let full = SegmentMask::full(w, h);
        let cells = ctx.grid_width * h.div_ceil(STRIDE);
        for &kind in &ctx.config.blocks {
            if kind.masked() {
                continue;
            }
            let mut rows = vec![None; cells];
            for (x, y) in grid_points(&full) {
                rows[ctx.grid_cell(x, y)] = ctx.local_row(kind, x, y, None);
            }
            ctx.cached[kind.slot()] = rows;
        }
        Ok(ctx)
    }

    pub fn frame(&self) -> &RgbdFrame {
        self.frame
    }

    pub fn config(&self) -> &DescriptorConfig {
        &self.config
    }

    pub fn cloud(&self) -> Option<&PointCloud> {
        self.cloud.as_ref()
    }

    fn grid_cell(&self, x: usize, y: usize) -> usize {
        (y / STRIDE) * self.grid_width + x / STRIDE
    }

    fn on_grid(x: usize, y: usize) -> bool {
        x % STRIDE == STRIDE / 2 && y % STRIDE == STRIDE / 2
    }

    /// One enriched local descriptor; `None` for spin images at pixels
    /// without depth.
    fn local_row(
        &self,
        kind: BlockKind,
        x: usize,
        y: usize,
        mask: Option<&SegmentMask>,
    ) -> Option<Vec<f64>> {
        let (w, h) = self.frame.dims();
        let ch = usize::from(kind.uses_depth());
        let raw = match kind {
            BlockKind::RgbSift
            | BlockKind::RgbSiftMasked
            | BlockKind::DepthSift
            | BlockKind::DepthSiftMasked => sift_like_at(&self.fields[ch], x, y, mask).to_vec(),
            BlockKind::RgbLbp | BlockKind::DepthLbp => {
                lbp_at(&self.codes[ch], w, h, x, y, mask).to_vec()
            }
            BlockKind::Spin | BlockKind::SpinMasked => {
                let cloud = self.cloud.as_ref()?;
                let index = self.spin_index.as_ref()?;
                let pixel = y * w + x;
                let id = cloud.point_id(pixel)?;
                let normal = estimate_normal(cloud, pixel)?;
                index.histograms(
                    id,
                    &normal,
                    &self.config.spin_radii,
                    self.config.spin_bins,
                    |j| mask.is_none_or(|m| m.contains_index(cloud.pixel_index()[j])),
                )
            }
        };
        Some(finish(raw, self.frame, x, y))
    }

    /// Enriched local descriptors of one family over a region.
    pub fn local_descriptors(
        &self,
        kind: BlockKind,
        mask: &SegmentMask,
    ) -> Result<super::LocalDescriptorSet> {
        check_mask(self.frame.dims(), mask)?;
        let locations = match kind {
            BlockKind::Spin | BlockKind::SpinMasked => {
                let cloud = self.cloud.as_ref().ok_or(Error::NoValidDepth)?;
                spin_locations(cloud, mask)?
            }
            _ => grid_points(mask),
        };
        let m = kind.masked().then_some(mask);
        let cache = &self.cached[kind.slot()];
        let rows: Vec<Vec<f64>> = locations
            .iter()
            .map(|&(x, y)| {
                let hit = if m.is_none() && Self::on_grid(x, y) {
                    cache.get(self.grid_cell(x, y)).and_then(|r| r.clone())
                } else {
                    None
                };
                hit.or_else(|| self.local_row(kind, x, y, m))
                    .ok_or(Error::NoValidDepth)
            })
            .collect::<Result<_>>()?;
        Ok(super::LocalDescriptorSet::from_rows(&rows, locations))
    }

    /// Pooled, log-mapped, flattened and power-normalized block before PCA.
    pub fn raw_block(&self, kind: BlockKind, mask: &SegmentMask) -> Result<Vec<f64>> {
        let set = self.local_descriptors(kind, mask)?;
        let log = pooled_log(&set.descriptors)?;
        Ok(flatten_and_normalize(&log, self.config.power))
    }

    /// Every configured block before PCA, in configuration order.
    pub fn raw_blocks(&self, mask: &SegmentMask) -> Result<Vec<Vec<f64>>> {
        self.config
            .blocks
            .iter()
            .map(|&k| self.raw_block(k, mask))
            .collect()
    }

    pub fn point_cloud_block(&self, mask: &SegmentMask) -> Result<Vec<f64>> {
        let cloud = self.cloud.as_ref().ok_or(Error::NoValidDepth)?;
        Ok(point_cloud_features(mask, cloud)?.to_vec())
    }

    /// Full descriptor: PCA-reduced blocks, the point-cloud block when
    /// configured, and the external block when given.
    pub fn describe(
        &self,
        mask: &SegmentMask,
        bank: &PcaBank,
        external: Option<&[f64]>,
    ) -> Result<RegionDescriptor> {
        let raw = self.raw_blocks(mask)?;
        bank.assemble(
            &self.config,
            raw,
            self.config
                .point_cloud
                .then(|| self.point_cloud_block(mask))
                .transpose()?,
            external,
        )
    }
}

/// Named blocks and their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDescriptor {
    pub blocks: Vec<(String, Vec<f64>)>,
    pub concatenated: Vec<f64>,
}

impl RegionDescriptor {
    fn from_blocks(blocks: Vec<(String, Vec<f64>)>) -> Self {
        let concatenated = blocks.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        RegionDescriptor {
            blocks,
            concatenated,
        }
    }

    pub fn dim(&self) -> usize {
        self.concatenated.len()
    }
}

/// One PCA model per configured block.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBank {
    pub blocks: Vec<BlockKind>,
    pub models: Vec<PcaModel>,
}

const BANK_MAGIC: &[u8; 4] = b"DSPB";

impl PcaBank {
    /// Fits each block's model on its raw samples; the retained dimension is
    /// the configured one, capped by what the samples support.
    pub fn fit(config: &DescriptorConfig, samples: &[Vec<Vec<f64>>]) -> Result<Self> {
        if samples.len() != config.blocks.len() {
            return Err(Error::param(
                "pca samples",
                "one sample set per block is required",
            ));
        }
        let models = config
            .blocks
            .iter()
            .zip(samples)
            .map(|(&kind, s)| {
                let available = s.len().min(s.first().map_or(0, |v| v.len()));
                let d = config.pca_dim(kind).min(available);
                if d < config.pca_dim(kind) {
                    log::info!(
                        "{}: keeping {d} of {} PCA dims (limited by samples)",
                        kind.name(),
                        config.pca_dim(kind)
                    );
                }
                pca_fit(s, d)
            })
            .collect::<Result<_>>()?;
        Ok(PcaBank {
            blocks: config.blocks.clone(),
            models,
        })
    }

    pub fn output_dim(&self, config: &DescriptorConfig) -> usize {
        self.models.iter().map(|m| m.output_dim()).sum::<usize>()
            + if config.point_cloud {
                super::POINT_CLOUD_DIM
            } else {
                0
            }
    }

    pub fn assemble(
        &self,
        config: &DescriptorConfig,
        raw: Vec<Vec<f64>>,
        point_cloud: Option<Vec<f64>>,
        external: Option<&[f64]>,
    ) -> Result<RegionDescriptor> {
        if self.blocks != config.blocks {
            return Err(Error::Config {
                key: "descriptor blocks".into(),
                reason: "PCA bank was fitted for different blocks".into(),
            });
        }
        let mut blocks = Vec::with_capacity(raw.len() + 2);
        for ((kind, model), v) in self.blocks.iter().zip(&self.models).zip(raw) {
            blocks.push((kind.name().to_string(), model.project(&v)?));
        }
        if let Some(pc) = point_cloud {
            blocks.push(("point_cloud".to_string(), pc));
        }
        if let Some(ext) = external {
            blocks.push(("external".to_string(), ext.to_vec()));
        }
        Ok(RegionDescriptor::from_blocks(blocks))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(BANK_MAGIC);
        buf.extend_from_slice(&(self.models.len() as u32).to_le_bytes());
        for (kind, m) in self.blocks.iter().zip(&self.models) {
            buf.extend_from_slice(&(kind.slot() as u32).to_le_bytes());
            buf.extend_from_slice(&(m.input_dim() as u32).to_le_bytes());
            buf.extend_from_slice(&(m.output_dim() as u32).to_le_bytes());
            for v in m.mean.iter().chain(m.basis.iter()).chain(&m.variances) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |why: &str| Error::format(path, why.to_string());
        if bytes.len() < 8 || &bytes[..4] != BANK_MAGIC {
            return Err(bad("not a PCA bank file"));
        }
        let mut pos = 4;
        let u32_at = |pos: &mut usize| -> Result<usize> {
            let b = bytes.get(*pos..*pos + 4).ok_or_else(|| bad("truncated"))?;
            *pos += 4;
            Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
        };
        let count = u32_at(&mut pos)?;
        let mut blocks = Vec::with_capacity(count);
        let mut models = Vec::with_capacity(count);
        for _ in 0..count {
            let slot = u32_at(&mut pos)?;
            let kind = *BlockKind::ALL
                .get(slot)
                .ok_or_else(|| bad("unknown block"))?;
            let (n, d) = (u32_at(&mut pos)?, u32_at(&mut pos)?);
            let need = (n + n * d + d) * 8;
            let data = bytes.get(pos..pos + need).ok_or_else(|| bad("truncated"))?;
            pos += need;
            let vals: Vec<f64> = data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push(kind);
            models.push(PcaModel {
                mean: DVector::from_column_slice(&vals[..n]),
                basis: DMatrix::from_column_slice(n, d, &vals[n..n + n * d]),
                variances: vals[n + n * d..].to_vec(),
            });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(PcaBank { blocks, models })
    }
}
