//! Seeded figure-ground energies and enumeration of all their breakpoint
//! solutions over the foreground bias λ.
//!
//! Free pixels pay λ when labeled background and nothing when labeled
//! foreground; neighboring pixels with different labels pay the edge weight.
//! Seed pixels are pinned to the foreground and image-border pixels to the
//! background. All weights and λ are quantized to integers at
//! [`CAPACITY_SCALE`] units per 1.0 so min-cut ties resolve exactly.

mod graph;
mod push_relabel;

pub use graph::Graph;
pub use push_relabel::CutNetwork;

use crate::boundaries::{penalty_value, BoundaryMap};
use crate::error::{Error, Result};
use crate::imaging::SegmentMask;

/// Integer units per unit of weight or λ.
pub const CAPACITY_SCALE: f64 = 1e7;

pub fn to_units(v: f64) -> i64 {
    (v * CAPACITY_SCALE).round() as i64
}

pub fn from_units(u: i64) -> f64 {
    u as f64 / CAPACITY_SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelRole {
    Free,
    Seed,
    Border,
}

/// Closed λ interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRange {
    pub min: f64,
    pub max: f64,
}

impl Default for LambdaRange {
    fn default() -> Self {
        LambdaRange { min: 0.0, max: 4.0 }
    }
}

impl LambdaRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min >= 0.0 && max >= min && max.is_finite()) {
            return Err(Error::param(
                "lambda_range",
                format!("need 0 <= min <= max, got [{min}, {max}]"),
            ));
        }
        Ok(LambdaRange { min, max })
    }
}

/// 4-connected binary energy with one seed set and the image border pinned.
#[derive(Debug, Clone)]
pub struct SpatialEnergy {
    width: usize,
    height: usize,
    /// Edge (x,y)-(x+1,y) at `y * (width - 1) + x`.
    horizontal: Vec<i64>,
    /// Edge (x,y)-(x,y+1) at `y * width + x`.
    vertical: Vec<i64>,
    roles: Vec<PixelRole>,
    lambda_range: LambdaRange,
}

/// Labeling minimizing the energy at `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutSolution {
    pub foreground: SegmentMask,
    pub energy: f64,
    pub lambda: f64,
}

impl SpatialEnergy {
    /// Energy with edge weights `exp(-max(B(x), B(y)) / sigma^2)` from a fused boundary map.
    pub fn build(
        fused: &BoundaryMap,
        seed: &[(usize, usize)],
        sigma: f64,
        lambda_range: LambdaRange,
    ) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
        }
        let (w, h) = fused.dims();
        let b = fused.values();
        let mut horizontal = Vec::with_capacity(h * w.saturating_sub(1));
        for y in 0..h {
            for x in 0..w.saturating_sub(1) {
                let i = y * w + x;
                horizontal.push(penalty_value(b[i], b[i + 1], sigma));
            }
        }
        let mut vertical = Vec::with_capacity(w * h.saturating_sub(1));
        for y in 0..h.saturating_sub(1) {
            for x in 0..w {
                let i = y * w + x;
                vertical.push(penalty_value(b[i], b[i + w], sigma));
            }
        }
        Self::from_weights(w, h, &horizontal, &vertical, seed, lambda_range)
    }

    /// Energy from explicit non-negative edge weights.
    pub fn from_weights(
        width: usize,
        height: usize,
        horizontal: &[f64],
        vertical: &[f64],
        seed: &[(usize, usize)],
        lambda_range: LambdaRange,
    ) -> Result<Self> {
        if horizontal.len() != height * width.saturating_sub(1)
            || vertical.len() != width * height.saturating_sub(1)
        {
            return Err(Error::param("weights", "edge arrays do not match the grid"));
        }
        if horizontal
            .iter()
            .chain(vertical)
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::param("weights", "must be finite and >= 0"));
        }
        LambdaRange::new(lambda_range.min, lambda_range.max)?;
        if seed.is_empty() {
            return Err(Error::InvalidSeed("seed set is empty".into()));
        }
        let mut roles = vec![PixelRole::Free; width * height];
        for y in 0..height {
            for x in 0..width {
                if x == 0 || y == 0 || x + 1 == width || y + 1 == height {
                    roles[y * width + x] = PixelRole::Border;
                }
            }
        }
        for &(x, y) in seed {
            if x >= width || y >= height {
                return Err(Error::InvalidSeed(format!("({x},{y}) outside the image")));
            }
            let i = y * width + x;
            if roles[i] == PixelRole::Border {
                return Err(Error::InvalidSeed(format!("({x},{y}) lies on the border")));
            }
            roles[i] = PixelRole::Seed;
        }
        Ok(SpatialEnergy {
            width,
            height,
            horizontal: horizontal.iter().map(|&w| to_units(w)).collect(),
            vertical: vertical.iter().map(|&w| to_units(w)).collect(),
            roles,
            lambda_range,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn lambda_range(&self) -> LambdaRange {
        self.lambda_range
    }

    pub fn roles(&self) -> &[PixelRole] {
        &self.roles
    }

    pub fn count(&self, role: PixelRole) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    /// Quantized weight of the edge between horizontally adjacent pixels.
    pub fn horizontal_weight(&self, x: usize, y: usize) -> f64 {
        from_units(self.horizontal[y * (self.width - 1) + x])
    }

    pub fn vertical_weight(&self, x: usize, y: usize) -> f64 {
        from_units(self.vertical[y * self.width + x])
    }

    /// Calls `f(i, j, units)` for every 4-neighbor edge.
    fn for_each_edge(&self, mut f: impl FnMut(usize, usize, i64)) {
        let w = self.width;
        for y in 0..self.height {
            for x in 0..w.saturating_sub(1) {
                let i = y * w + x;
                f(i, i + 1, self.horizontal[y * (w - 1) + x]);
            }
        }
        for y in 0..self.height.saturating_sub(1) {
            for x in 0..w {
                let i = y * w + x;
                f(i, i + w, self.vertical[i]);
            }
        }
    }

    /// Energy of an arbitrary labeling; infinite if it violates the pins.
    pub fn evaluate(&self, foreground: &SegmentMask, lambda: f64) -> f64 {
        assert_eq!(foreground.dims(), (self.width, self.height));
        let mut free_background = 0usize;
        for (i, role) in self.roles.iter().enumerate() {
            let fg = foreground.contains_index(i);
            match role {
                PixelRole::Seed if !fg => return f64::INFINITY,
                PixelRole::Border if fg => return f64::INFINITY,
                PixelRole::Free if !fg => free_background += 1,
                _ => {}
            }
        }
        let mut pairwise = 0.0;
        self.for_each_edge(|i, j, u| {
            if foreground.contains_index(i) != foreground.contains_index(j) {
                pairwise += from_units(u);
            }
        });
        lambda * free_background as f64 + pairwise
    }

    /// Slope (free background pixels) and intercept (cut weight, in units)
    /// of a labeling's energy as a function of λ.
    fn cost_line(&self, foreground: &SegmentMask) -> (i64, i64) {
        let slope = self
            .roles
            .iter()
            .enumerate()
            .filter(|&(i, r)| *r == PixelRole::Free && !foreground.contains_index(i))
            .count() as i64;
        let mut intercept = 0;
        self.for_each_edge(|i, j, u| {
            if foreground.contains_index(i) != foreground.contains_index(j) {
                intercept += u;
            }
        });
        (slope, intercept)
    }
}

/// Solves restricted to the pixels between two nested labelings: everything
/// in `lower` is held in the foreground and everything outside `upper` in the
/// background, their edges folding into terminal capacities. Minimal
/// minimizers are nested in λ, so this is exact whenever the true solution
/// lies between the bounds.
fn solve_between(
    energy: &SpatialEnergy,
    lambda_units: i64,
    lower: &SegmentMask,
    upper: &SegmentMask,
) -> SegmentMask {
    let (w, h) = (energy.width, energy.height);
    let mut node_of = vec![u32::MAX; w * h];
    let mut pixel_of = Vec::new();
    for i in upper.iter_indices() {
        if !lower.contains_index(i) {
            node_of[i] = pixel_of.len() as u32;
            pixel_of.push(i);
        }
    }
    let mut g = CutNetwork::new(pixel_of.len(), 2 * pixel_of.len());
    for (k, &i) in pixel_of.iter().enumerate() {
        let (x, y) = (i % w, i / w);
        let mut source = lambda_units;
        let mut sink = 0;
        let mut visit = |j: usize, u: i64, forward: bool| {
            if lower.contains_index(j) {
                source += u;
            } else if !upper.contains_index(j) {
                sink += u;
            } else if forward && u > 0 {
                g.add_edge(k, node_of[j] as usize, u, u);
            }
        };
        // free pixels never touch the image edge, so all four neighbors exist
        debug_assert!(x > 0 && y > 0 && x + 1 < w && y + 1 < h);
        visit(i - 1, energy.horizontal[y * (w - 1) + x - 1], false);
        visit(i + 1, energy.horizontal[y * (w - 1) + x], true);
        visit(i - w, energy.vertical[i - w], false);
        visit(i + w, energy.vertical[i], true);
        g.add_tweights(k, source, sink);
    }
    g.maxflow();
    let fg = pixel_of
        .iter()
        .enumerate()
        .filter(|&(k, _)| g.in_source_set(k))
        .map(|(_, &p)| p)
        .chain(lower.iter_indices());
    SegmentMask::from_indices(w, h, fg)
}

fn pin_bounds(energy: &SpatialEnergy) -> (SegmentMask, SegmentMask) {
    let (w, h) = (energy.width, energy.height);
    let lower = SegmentMask::from_indices(
        w,
        h,
        (0..w * h).filter(|&i| energy.roles[i] == PixelRole::Seed),
    );
    let upper = SegmentMask::from_indices(
        w,
        h,
        (0..w * h).filter(|&i| energy.roles[i] != PixelRole::Border),
    );
    (lower, upper)
}

/// Global minimizer at one λ (quantized to the capacity grid); ties go to the
/// smaller foreground.
pub fn solve_at(energy: &SpatialEnergy, lambda: f64) -> CutSolution {
    let units = to_units(lambda);
    let (lower, upper) = pin_bounds(energy);
    let foreground = solve_between(energy, units, &lower, &upper);
    let (slope, intercept) = energy.cost_line(&foreground);
    CutSolution {
        foreground,
        energy: from_units(slope * units + intercept),
        lambda: from_units(units),
    }
}

/// Every distinct minimal labeling as λ sweeps the energy's range, in
/// increasing λ. Each solution carries the smallest grid λ at which it is the
/// minimal minimizer; foregrounds are nested.
pub fn solve_breakpoints(energy: &SpatialEnergy) -> Vec<CutSolution> {
    breakpoints(energy, None)
}

/// Like [`solve_breakpoints`], but a λ interval is not refined when
/// `skip(smaller, larger)` holds for its two nested endpoint labelings; by
/// nesting, every labeling inside lies between them (e.g. an IoU threshold
/// makes them all near-duplicates). Solutions then carry a grid λ at which
/// they are minimal, not necessarily the first.
pub fn solve_breakpoints_pruned(
    energy: &SpatialEnergy,
    skip: &dyn Fn(&SegmentMask, &SegmentMask) -> bool,
) -> Vec<CutSolution> {
    breakpoints(energy, Some(skip))
}

type Skip<'a> = Option<&'a dyn Fn(&SegmentMask, &SegmentMask) -> bool>;

fn breakpoints(energy: &SpatialEnergy, prune: Skip) -> Vec<CutSolution> {
    let lo = to_units(energy.lambda_range.min);
    let hi = to_units(energy.lambda_range.max);
    let solve = |u: i64, lower: &SegmentMask, upper: &SegmentMask| {
        let mask = solve_between(energy, u, lower, upper);
        let line = energy.cost_line(&mask);
        Solved { mask, line }
    };
    let (lower, upper) = pin_bounds(energy);
    let first = solve(lo, &lower, &upper);
    let mut found = vec![(lo, first.clone())];
    if hi > lo {
        let last = solve(hi, &first.mask, &upper);
        if last.mask != first.mask {
            split(&solve, prune, lo, &first, hi, &last, &mut found);
        }
    }
    found
        .into_iter()
        .map(|(u, s)| {
            let (slope, intercept) = s.line;
            CutSolution {
                energy: from_units(slope * u + intercept),
                lambda: from_units(u),
                foreground: s.mask,
            }
        })
        .collect()
}

#[derive(Clone)]
struct Solved {
    mask: SegmentMask,
    line: (i64, i64),
}

/// Records the first grid λ of every labeling change in `(lo, hi]`, given
/// distinct solutions at both ends.
fn split(
    solve: &impl Fn(i64, &SegmentMask, &SegmentMask) -> Solved,
    prune: Skip,
    lo: i64,
    at_lo: &Solved,
    hi: i64,
    at_hi: &Solved,
    found: &mut Vec<(i64, Solved)>,
) {
    if hi == lo + 1 || prune.is_some_and(|f| f(&at_lo.mask, &at_hi.mask)) {
        found.push((hi, at_hi.clone()));
        return;
    }
    // crossing of the two cost lines
    let (a1, b1) = at_lo.line;
    let (a2, b2) = at_hi.line;
    let guess = if a1 > a2 {
        (b2 - b1).div_euclid(a1 - a2)
    } else {
        lo + (hi - lo) / 2
    };
    let m = guess.clamp(lo, hi - 1);
    let at_m = if m == lo {
        at_lo.clone()
    } else {
        solve(m, &at_lo.mask, &at_hi.mask)
    };
    if prune.is_some() && at_m.mask != at_lo.mask && at_m.mask != at_hi.mask {
        // strictly inside: the first λ of each change is not needed
        split(solve, prune, lo, at_lo, m, &at_m, found);
        split(solve, prune, m, &at_m, hi, at_hi, found);
        return;
    }
    let at_m1 = if m + 1 == hi {
        at_hi.clone()
    } else {
        solve(m + 1, &at_m.mask, &at_hi.mask)
    };
    if at_m.mask != at_lo.mask {
        split(solve, prune, lo, at_lo, m, &at_m, found);
    }
    if at_m1.mask != at_m.mask {
        found.push((m + 1, at_m1.clone()));
    }
    if at_m1.mask != at_hi.mask {
        split(solve, prune, m + 1, &at_m1, hi, at_hi, found);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(
        width: usize,
        height: usize,
        w: f64,
        seed: (usize, usize),
        range: LambdaRange,
    ) -> SpatialEnergy {
        SpatialEnergy::from_weights(
            width,
            height,
            &vec![w; height * (width - 1)],
            &vec![w; width * (height - 1)],
            &[seed],
            range,
        )
        .unwrap()
    }

    #[test]
    fn geometry_of_pins() {
        let map = BoundaryMap::zeros(3, 3);
        let e = SpatialEnergy::build(&map, &[(1, 1)], 0.1, LambdaRange::default()).unwrap();
        assert_eq!(e.count(PixelRole::Border), 8);
        assert_eq!(e.count(PixelRole::Seed), 1);
        assert_eq!(e.count(PixelRole::Free), 0);
        let map = BoundaryMap::zeros(5, 5);
        let e = SpatialEnergy::build(&map, &[(2, 2)], 0.1, LambdaRange::default()).unwrap();
        assert_eq!(
            (
                e.count(PixelRole::Border),
                e.count(PixelRole::Seed),
                e.count(PixelRole::Free)
            ),
            (16, 1, 8)
        );
        assert!(matches!(
            SpatialEnergy::build(&map, &[(0, 0)], 0.1, LambdaRange::default()),
            Err(Error::InvalidSeed(_))
        ));
        assert!(matches!(
            SpatialEnergy::build(&map, &[], 0.1, LambdaRange::default()),
            Err(Error::InvalidSeed(_))
        ));
    }

    #[test]
    fn single_free_pixel_tie_goes_to_background() {
        // 4x3 grid: seed (1,1), free (2,1)
        let e = uniform(4, 3, 0.5, (1, 1), LambdaRange::default());
        assert_eq!(e.count(PixelRole::Free), 1);
        let s = solve_at(&e, 0.0);
        assert!(!s.foreground.get(2, 1));
        assert_eq!(s.foreground.area(), 1);
    }

    #[test]
    fn unary_dominates_without_pairwise() {
        let e = uniform(4, 3, 0.0, (1, 1), LambdaRange::default());
        let s = solve_at(&e, 0.5);
        assert!(s.foreground.get(2, 1));
        assert_eq!(s.energy, 0.0);
    }

    #[test]
    fn single_free_pixel_switches_where_cost_lines_cross() {
        // seed-free weight w = 0.3, three border edges 0.3 each: b = 0.9
        let w = 0.3;
        let e = uniform(
            4,
            3,
            w,
            (1, 1),
            LambdaRange::new(0.0, 2.0 * (w + 0.9)).unwrap(),
        );
        let sols = solve_breakpoints(&e);
        assert_eq!(sols.len(), 2);
        assert_eq!(sols[0].foreground.area(), 1);
        assert_eq!(sols[1].foreground.area(), 2);
        // seed alone costs λ + w, seed+free costs b: cross at λ* = b - w = 0.6;
        // at λ* the tie keeps the smaller foreground
        assert!((sols[1].lambda - (0.6 + 1.0 / CAPACITY_SCALE)).abs() < 1e-12);
    }

    #[test]
    fn no_free_pixels_gives_one_solution() {
        let e = uniform(3, 3, 0.7, (1, 1), LambdaRange::default());
        let sols = solve_breakpoints(&e);
        assert_eq!(sols.len(), 1);
        assert_eq!(sols[0].foreground.area(), 1);
    }

    #[test]
    fn degenerate_range_solves_once() {
        let e = uniform(6, 6, 0.1, (2, 2), LambdaRange::new(1.0, 1.0).unwrap());
        assert_eq!(solve_breakpoints(&e).len(), 1);
    }

    #[test]
    fn reported_energy_matches_direct_evaluation() {
        // second seed touches the border so the constant seed-border cut is exercised
        for seed in [(4, 3), (1, 3)] {
            let e = uniform(9, 7, 0.37, seed, LambdaRange::default());
            for s in solve_breakpoints(&e) {
                let direct = e.evaluate(&s.foreground, s.lambda);
                assert!((direct - s.energy).abs() <= 1e-9 * direct.abs().max(1.0));
                let single = solve_at(&e, s.lambda);
                assert_eq!(single.foreground, s.foreground);
                assert!((single.energy - s.energy).abs() <= 1e-9 * direct.abs().max(1.0));
            }
        }
    }
}
