//! Seeded synthetic RGB-D scenes: axis-aligned boxes and cylinders in front
//! of a textured back wall, with ground-truth labels.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{netpbm, Intrinsics, RgbdFrame, SegmentMask};
use crate::inference::{load_legend, save_legend, SceneLabeling};
use crate::proposals::generate_seeds;
use crate::recognition::Object;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Box,
    Cylinder,
}

/// Appearance and physical size range of one object class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStyle {
    pub name: &'static str,
    pub color: [f64; 3],
    pub shape: Shape,
    /// Physical width and height ranges in meters.
    pub width: (f64, f64),
    pub height: (f64, f64),
}

pub const CLASS_STYLES: [ClassStyle; 8] = [
    ClassStyle {
        name: "cabinet",
        color: [0.55, 0.35, 0.2],
        shape: Shape::Box,
        width: (0.7, 0.9),
        height: (0.6, 0.8),
    },
    ClassStyle {
        name: "chair",
        color: [0.8, 0.2, 0.2],
        shape: Shape::Box,
        width: (0.4, 0.5),
        height: (0.5, 0.7),
    },
    ClassStyle {
        name: "table",
        color: [0.3, 0.6, 0.3],
        shape: Shape::Box,
        width: (0.9, 1.2),
        height: (0.5, 0.6),
    },
    ClassStyle {
        name: "lamp",
        color: [0.9, 0.85, 0.3],
        shape: Shape::Cylinder,
        width: (0.25, 0.3),
        height: (0.4, 0.5),
    },
    ClassStyle {
        name: "bin",
        color: [0.2, 0.35, 0.85],
        shape: Shape::Cylinder,
        width: (0.35, 0.45),
        height: (0.35, 0.45),
    },
    ClassStyle {
        name: "monitor",
        color: [0.15, 0.15, 0.2],
        shape: Shape::Box,
        width: (0.5, 0.6),
        height: (0.35, 0.45),
    },
    ClassStyle {
        name: "pillow",
        color: [0.85, 0.5, 0.75],
        shape: Shape::Cylinder,
        width: (0.5, 0.6),
        height: (0.3, 0.4),
    },
    ClassStyle {
        name: "box",
        color: [0.5, 0.85, 0.85],
        shape: Shape::Box,
        width: (0.3, 0.4),
        height: (0.3, 0.4),
    },
];

pub const SCENE_TYPES: [&str; 2] = ["kitchen", "bedroom"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Objects take the wall's color and texture.
    pub camouflage: bool,
    pub color_noise: f64,
    pub depth_noise: f64,
    /// Seed grid whose points objects are placed around, so every object
    /// contains a seed.
    pub grid: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 128,
            height: 96,
            classes: 6,
            min_objects: 3,
            max_objects: 5,
            camouflage: false,
            color_noise: 0.01,
            depth_noise: 0.001,
            grid: 5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.classes > CLASS_STYLES.len() {
            return Err(Error::param(
                "classes",
                format!("must be in 1..={}", CLASS_STYLES.len()),
            ));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(Error::param("objects", "need 1 <= min <= max"));
        }
        if self.width < 64 || self.height < 48 {
            return Err(Error::param("size", "scenes must be at least 64x48"));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        let f = 0.9 * self.width as f64;
        Intrinsics {
            fx: f,
            fy: f,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
        }
    }
}

/// A frame with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub frame: RgbdFrame,
    pub labels: SceneLabeling,
    pub objects: Vec<Object>,
    pub scene_type: usize,
}

/// Object pixel sizes are kept in this range so each covers a seed with margin.
const MIN_SIDE_PX: f64 = 20.0;
const MAX_WIDTH_FRACTION: f64 = 0.34;
const MAX_HEIGHT_FRACTION: f64 = 0.4;

/// Scene `index` of the corpus seeded by `seed`. The first object's class
/// cycles through the classes with the scene index so a corpus with at least
/// `classes` scenes covers every class.
pub fn generate_scene(config: &SynthConfig, seed: u64, index: usize) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (w, h) = (config.width, config.height);
    let k = config.intrinsics();
    let scene_type = rng.random_range(0..SCENE_TYPES.len());

    // wall: color and depth statistics differ by scene type
    let (wall_color, wall_depth) = if scene_type == 0 {
        (
            [
                rng.random_range(0.7..0.85),
                rng.random_range(0.65..0.8),
                rng.random_range(0.45..0.6),
            ],
            rng.random_range(3.8..4.2),
        )
    } else {
        (
            [
                rng.random_range(0.55..0.7),
                rng.random_range(0.6..0.75),
                rng.random_range(0.7..0.85),
            ],
            rng.random_range(4.6..5.0),
        )
    };
    let tilt = rng.random_range(-0.002..0.002);
    let phase = [rng.random_range(0.0..6.3), rng.random_range(0.0..6.3)];
    let wall_rgb = |x: usize, y: usize| -> [f64; 3] {
        let t = 0.03 * ((x as f64 * 0.11 + phase[0]).sin() + (y as f64 * 0.07 + phase[1]).cos());
        [wall_color[0] + t, wall_color[1] + t, wall_color[2] + t]
    };

    let seeds: Vec<(usize, usize)> = generate_seeds(w, h, config.grid)?
        .into_iter()
        .map(|s| s[0])
        .collect();
    let n_objects = rng.random_range(config.min_objects..=config.max_objects);
    // small frames cannot fit the default minimum side under the size caps
    let min_side =
        MIN_SIDE_PX.min(0.7 * (MAX_WIDTH_FRACTION * w as f64).min(MAX_HEIGHT_FRACTION * h as f64));
    let mut placed: Vec<(usize, usize, usize, usize, usize, f64)> = Vec::new(); // x0,y0,x1,y1,class,depth
    let mut attempts = 0;
    while placed.len() < n_objects && attempts < 2000 {
        attempts += 1;
        let class = if placed.is_empty() {
            index % config.classes
        } else {
            preferred_class(&mut rng, scene_type, config.classes)
        };
        let style = &CLASS_STYLES[class];
        let pw = rng.random_range(style.width.0..style.width.1);
        let ph = rng.random_range(style.height.0..style.height.1);
        // depth range that keeps the projected size within bounds
        let z_far = (pw * k.fx / min_side)
            .min(ph * k.fy / min_side)
            .min(wall_depth - 0.5);
        let z_near = (pw * k.fx / (MAX_WIDTH_FRACTION * w as f64))
            .max(ph * k.fy / (MAX_HEIGHT_FRACTION * h as f64))
            .max(0.5);
        if z_near >= z_far {
            continue;
        }
        let z = rng.random_range(z_near..z_far);
        let bw = (pw * k.fx / z).round() as usize;
        let bh = (ph * k.fy / z).round() as usize;
        let (sx, sy) = seeds[rng.random_range(0..seeds.len())];
        // seed at least 4 px inside the box
        if bw < 9 || bh < 9 {
            continue;
        }
        let x0 = sx as i64 - rng.random_range(4..=(bw as i64 - 5));
        let y0 = sy as i64 - rng.random_range(4..=(bh as i64 - 5));
        let (x1, y1) = (x0 + bw as i64, y0 + bh as i64);
        if x0 < 2 || y0 < 2 || x1 > w as i64 - 2 || y1 > h as i64 - 2 {
            continue;
        }
        let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
        // keep a 2 px gap between objects
        if placed
            .iter()
            .any(|&(a0, b0, a1, b1, _, _)| x0 < a1 + 2 && a0 < x1 + 2 && y0 < b1 + 2 && b0 < y1 + 2)
        {
            continue;
        }
        placed.push((x0, y0, x1, y1, class, z));
    }
    if placed.is_empty() {
        return Err(Error::param("synth", "could not place any object"));
    }

    let mut rgb = vec![[0.0; 3]; w * h];
    let mut depth = vec![0.0; w * h];
    let mut class_map = vec![0u32; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            rgb[i] = wall_rgb(x, y);
            depth[i] = wall_depth + tilt * (y as f64 - h as f64 / 2.0);
        }
    }
    let mut objects = Vec::with_capacity(placed.len());
    for &(x0, y0, x1, y1, class, z) in &placed {
        let style = &CLASS_STYLES[class];
        let jitter = [
            rng.random_range(-0.04..0.04),
            rng.random_range(-0.04..0.04),
            rng.random_range(-0.04..0.04),
        ];
        let radius = 0.5 * (x1 - x0) as f64 * z / k.fx;
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * w + x;
                let u = ((x as f64 + 0.5) - (x0 + x1) as f64 / 2.0) / ((x1 - x0) as f64 / 2.0);
                let (shade, dz) = match style.shape {
                    Shape::Box => (1.0, 0.0),
                    Shape::Cylinder => {
                        let c = (1.0 - u * u).max(0.0).sqrt();
                        (0.75 + 0.25 * c, radius * (1.0 - c))
                    }
                };
                let base = if config.camouflage {
                    wall_rgb(x, y)
                } else {
                    style.color
                };
                for ch in 0..3 {
                    let tint = if config.camouflage { 0.0 } else { jitter[ch] };
                    rgb[i][ch] = (base[ch] + tint) * if config.camouflage { 1.0 } else { shade };
                }
                depth[i] = z + dz;
                class_map[i] = class as u32 + 1;
            }
        }
        objects.push(Object {
            mask: SegmentMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1),
            class_id: class as u32 + 1,
        });
    }
    for i in 0..w * h {
        for ch in 0..3 {
            let n: f64 = rng.random_range(-1.0..1.0) * config.color_noise * 3f64.sqrt();
            rgb[i][ch] = (rgb[i][ch] + n).clamp(0.0, 1.0);
        }
        let n: f64 = rng.random_range(-1.0..1.0) * config.depth_noise * 3f64.sqrt();
        depth[i] = (depth[i] + n).max(0.01);
    }
    Ok(SyntheticScene {
        frame: RgbdFrame::new(w, h, rgb, depth, Some(k))?,
        labels: SceneLabeling::from_classes(w, h, class_map)?,
        objects,
        scene_type,
    })
}

/// Kitchens lean toward the first half of the classes, bedrooms toward the second.
fn preferred_class(rng: &mut ChaCha8Rng, scene_type: usize, classes: usize) -> usize {
    let half = classes.div_ceil(2);
    if rng.random_bool(0.7) {
        if scene_type == 0 {
            rng.random_range(0..half)
        } else if half < classes {
            rng.random_range(half..classes)
        } else {
            rng.random_range(0..classes)
        }
    } else {
        rng.random_range(0..classes)
    }
}

pub fn generate_corpus(
    config: &SynthConfig,
    count: usize,
    seed: u64,
) -> Result<Vec<SyntheticScene>> {
    if count == 0 {
        return Err(Error::param("count", "must be >= 1"));
    }
    (0..count)
        .map(|i| generate_scene(config, seed, i))
        .collect()
}

pub fn class_legend(classes: usize) -> Vec<(u32, String)> {
    CLASS_STYLES[..classes]
        .iter()
        .enumerate()
        .map(|(i, s)| (i as u32 + 1, s.name.to_string()))
        .collect()
}

/// Paths of one scene's files inside a corpus directory.
#[derive(Debug, Clone)]
pub struct ScenePaths {
    pub dir: PathBuf,
}

impl ScenePaths {
    pub fn new(root: &Path, index: usize) -> Self {
        ScenePaths {
            dir: root.join(format!("scene_{index:04}")),
        }
    }
    pub fn color(&self) -> PathBuf {
        self.dir.join("color.ppm")
    }
    pub fn depth(&self) -> PathBuf {
        self.dir.join("depth.pgm")
    }
    pub fn intrinsics(&self) -> PathBuf {
        self.dir.join("intrinsics.txt")
    }
    pub fn labels(&self) -> PathBuf {
        self.dir.join("labels.pgm")
    }
    pub fn instances(&self) -> PathBuf {
        self.dir.join("instances.pgm")
    }
    pub fn meta(&self) -> PathBuf {
        self.dir.join("scene.txt")
    }
}

/// Writes `scene_NNNN/` directories plus `legend.txt` and `scenes.txt`.
/// Each scene stores color, depth (mm), intrinsics, the class map, an
/// instance map (object k+1 at its pixels) and `scene.txt` with the scene
/// type and `object k class_id` lines.
pub fn save_corpus(root: &Path, scenes: &[SyntheticScene], classes: usize) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    save_legend(&root.join("legend.txt"), &class_legend(classes))?;
    let mut list = String::new();
    for (i, s) in scenes.iter().enumerate() {
        let p = ScenePaths::new(root, i);
        std::fs::create_dir_all(&p.dir).map_err(|e| Error::io(&p.dir, e))?;
        s.frame.save(&p.color(), &p.depth())?;
        s.frame
            .intrinsics()
            .ok_or(Error::MissingIntrinsics)?
            .save(&p.intrinsics())?;
        s.labels.save_pgm(&p.labels())?;
        let (w, h) = s.frame.dims();
        let mut inst = vec![0u16; w * h];
        for (k, o) in s.objects.iter().enumerate() {
            for idx in o.mask.iter_indices() {
                inst[idx] = k as u16 + 1;
            }
        }
        netpbm::write_pgm16(&p.instances(), w, h, &inst)?;
        let mut meta = format!("scene_type {}\n", SCENE_TYPES[s.scene_type]);
        for (k, o) in s.objects.iter().enumerate() {
            meta.push_str(&format!("object {} {}\n", k + 1, o.class_id));
        }
        std::fs::write(p.meta(), meta).map_err(|e| Error::io(p.meta(), e))?;
        list.push_str(&format!("scene_{i:04}\n"));
    }
    let lp = root.join("scenes.txt");
    std::fs::write(&lp, list).map_err(|e| Error::io(&lp, e))
}

/// Scene directory names listed in `scenes.txt`.
pub fn list_scenes(root: &Path) -> Result<Vec<String>> {
    let lp = root.join("scenes.txt");
    let text = std::fs::read_to_string(&lp).map_err(|e| Error::io(&lp, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn load_scene(dir: &Path) -> Result<SyntheticScene> {
    let p = ScenePaths {
        dir: dir.to_path_buf(),
    };
    let intr = Intrinsics::load(&p.intrinsics())?;
    let frame = RgbdFrame::load(&p.color(), &p.depth(), Some(intr))?;
    let labels = SceneLabeling::load_pgm(&p.labels())?;
    let (w, h, inst) = netpbm::read_pgm16(&p.instances())?;
    if (w, h) != frame.dims() || labels.dims() != frame.dims() {
        return Err(Error::format(
            p.instances(),
            "size differs from the color image",
        ));
    }
    let meta_path = p.meta();
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut scene_type = 0;
    let mut objects = Vec::new();
    for line in meta.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["scene_type", name] => {
                scene_type = SCENE_TYPES.iter().position(|t| t == name).ok_or_else(|| {
                    Error::format(&meta_path, format!("unknown scene type {name}"))
                })?;
            }
            ["object", k, class] => {
                let k: u16 = k
                    .parse()
                    .map_err(|_| Error::format(&meta_path, "bad object index"))?;
                let class_id: u32 = class
                    .parse()
                    .map_err(|_| Error::format(&meta_path, "bad class id"))?;
                let mask = SegmentMask::from_indices(w, h, (0..w * h).filter(|&i| inst[i] == k));
                objects.push(Object { mask, class_id });
            }
            [] => {}
            _ => return Err(Error::format(&meta_path, format!("bad line {line:?}"))),
        }
    }
    Ok(SyntheticScene {
        frame,
        labels,
        objects,
        scene_type,
    })
}

pub fn load_corpus(root: &Path) -> Result<Vec<SyntheticScene>> {
    list_scenes(root)?
        .iter()
        .map(|d| load_scene(&root.join(d)))
        .collect()
}

pub fn load_corpus_legend(root: &Path) -> Result<Vec<(u32, String)>> {
    load_legend(&root.join("legend.txt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objects_are_disjoint_large_and_contain_a_seed() {
        let config = SynthConfig::default();
        let seeds: Vec<(usize, usize)> = generate_seeds(128, 96, 5)
            .unwrap()
            .into_iter()
            .map(|s| s[0])
            .collect();
        for i in 0..30 {
            let s = generate_scene(&config, 11, i).unwrap();
            for (a, o) in s.objects.iter().enumerate() {
                assert!(o.mask.area() >= 100);
                assert!(seeds.iter().any(|&(x, y)| o.mask.get(x, y)));
                for p in &s.objects[a + 1..] {
                    assert!(!o.mask.overlaps(&p.mask));
                }
                let bb = o.mask.bbox().unwrap();
                assert!(bb.xmin > 0 && bb.ymin > 0 && bb.xmax < 127 && bb.ymax < 95);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = SynthConfig::default();
        assert_eq!(
            generate_scene(&c, 5, 3).unwrap(),
            generate_scene(&c, 5, 3).unwrap()
        );
        assert_ne!(
            generate_scene(&c, 5, 3).unwrap().frame,
            generate_scene(&c, 6, 3).unwrap().frame
        );
    }

    #[test]
    fn camouflaged_objects_share_the_wall_colors() {
        let c = SynthConfig {
            camouflage: true,
            color_noise: 0.0,
            ..Default::default()
        };
        let s = generate_scene(&c, 1, 0).unwrap();
        let o = &s.objects[0].mask;
        let bb = o.bbox().unwrap();
        // color continues smoothly across the object edge
        let y = (bb.ymin + bb.ymax) / 2;
        let inside = s.frame.rgb()[y * 128 + bb.xmin];
        let outside = s.frame.rgb()[y * 128 + bb.xmin - 1];
        assert!((inside[0] - outside[0]).abs() < 0.01);
        let di = s.frame.depth()[y * 128 + bb.xmin];
        let dout = s.frame.depth()[y * 128 + bb.xmin - 1];
        assert!(dout - di > 0.4);
    }
}
