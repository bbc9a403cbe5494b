//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use depthseg::imaging::SegmentMask;
use depthseg::parametric::{LambdaRange, PixelRole, SpatialEnergy};
use rand::Rng;

/// Random energy with weights uniform in [0,1) and a random interior seed.
pub fn random_energy(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    range: LambdaRange,
) -> SpatialEnergy {
    let horizontal: Vec<f64> = (0..height * (width - 1)).map(|_| rng.random()).collect();
    let vertical: Vec<f64> = (0..width * (height - 1)).map(|_| rng.random()).collect();
    let seed = (
        rng.random_range(1..width - 1),
        rng.random_range(1..height - 1),
    );
    SpatialEnergy::from_weights(width, height, &horizontal, &vertical, &[seed], range).unwrap()
}

/// Exhaustive minimizer over all labelings of the free pixels. Among equal
/// energies (within `1e-12` relative) the smallest foreground wins; the
/// minimal minimizer of a submodular energy is unique so this is well defined.
pub fn exhaustive_min(energy: &SpatialEnergy, lambda: f64) -> (SegmentMask, f64) {
    let (w, h) = (energy.width(), energy.height());
    let roles = energy.roles();
    let free: Vec<usize> = (0..roles.len())
        .filter(|&i| roles[i] == PixelRole::Free)
        .collect();
    let seeds: Vec<usize> = (0..roles.len())
        .filter(|&i| roles[i] == PixelRole::Seed)
        .collect();
    assert!(free.len() <= 20, "too many free pixels for enumeration");
    let mut best: Option<(SegmentMask, f64)> = None;
    for bits in 0u32..(1 << free.len()) {
        let fg = seeds.iter().copied().chain(
            free.iter()
                .enumerate()
                .filter(|(k, _)| bits & (1 << k) != 0)
                .map(|(_, &p)| p),
        );
        let mask = SegmentMask::from_indices(w, h, fg);
        let e = direct_energy(energy, &mask, lambda);
        let better = match &best {
            None => true,
            Some((bm, be)) => {
                let tol = 1e-12 * be.abs().max(1.0);
                e < be - tol || (e <= be + tol && mask.area() < bm.area())
            }
        };
        if better {
            best = Some((mask, e));
        }
    }
    best.unwrap()
}

/// Energy recomputed from scratch with the energy's (quantized) weights.
pub fn direct_energy(energy: &SpatialEnergy, mask: &SegmentMask, lambda: f64) -> f64 {
    let (w, h) = (energy.width(), energy.height());
    let roles = energy.roles();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let fg = mask.contains_index(i);
            match roles[i] {
                PixelRole::Seed if !fg => return f64::INFINITY,
                PixelRole::Border if fg => return f64::INFINITY,
                PixelRole::Free if !fg => total += lambda,
                _ => {}
            }
            if x + 1 < w && fg != mask.get(x + 1, y) {
                total += energy.horizontal_weight(x, y);
            }
            if y + 1 < h && fg != mask.get(x, y + 1) {
                total += energy.vertical_weight(x, y);
            }
        }
    }
    total
}

/// Distinct exhaustive minimizers at `samples` evenly spaced λ values.
pub fn dense_sweep(energy: &SpatialEnergy, samples: usize) -> Vec<SegmentMask> {
    let r = energy.lambda_range();
    let mut out: Vec<SegmentMask> = Vec::new();
    for k in 0..samples {
        let lambda = r.min + (r.max - r.min) * k as f64 / (samples - 1) as f64;
        let (mask, _) = exhaustive_min(energy, lambda);
        if out.last() != Some(&mask) && !out.contains(&mask) {
            out.push(mask);
        }
    }
    out
}

/// Exact lower envelope of all labelings' cost lines over the λ range: the
/// distinct minimal minimizers, enumerated by walking line crossings.
pub fn envelope_labelings(energy: &SpatialEnergy) -> Vec<SegmentMask> {
    let r = energy.lambda_range();
    let mut out = Vec::new();
    let mut lambda = r.min;
    loop {
        let (mask, _) = exhaustive_min(energy, lambda);
        let slope_cur = free_background(energy, &mask) as f64;
        let here = direct_energy(energy, &mask, 0.0);
        out.push(mask.clone());
        // next λ where some labeling with fewer background pixels becomes no worse
        let (w, h) = (energy.width(), energy.height());
        let roles = energy.roles();
        let free: Vec<usize> = (0..roles.len())
            .filter(|&i| roles[i] == PixelRole::Free)
            .collect();
        let seeds: Vec<usize> = (0..roles.len())
            .filter(|&i| roles[i] == PixelRole::Seed)
            .collect();
        let mut next = f64::INFINITY;
        for bits in 0u32..(1 << free.len()) {
            let fg = seeds.iter().copied().chain(
                free.iter()
                    .enumerate()
                    .filter(|(k, _)| bits & (1 << k) != 0)
                    .map(|(_, &p)| p),
            );
            let m = SegmentMask::from_indices(w, h, fg);
            let s = free_background(energy, &m) as f64;
            if s < slope_cur {
                let b = direct_energy(energy, &m, 0.0);
                let cross = (b - here) / (slope_cur - s);
                if cross > lambda - 1e-12 {
                    next = next.min(cross);
                }
            }
        }
        if !(next < r.max) {
            return out;
        }
        lambda = next + 1e-7;
        if lambda > r.max {
            return out;
        }
    }
}

pub fn free_background(energy: &SpatialEnergy, mask: &SegmentMask) -> usize {
    energy
        .roles()
        .iter()
        .enumerate()
        .filter(|&(i, r)| *r == PixelRole::Free && !mask.contains_index(i))
        .count()
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Random SPD matrix `QᵀDQ` with eigenvalues in [0.05, 20].
pub fn random_spd(rng: &mut impl Rng, n: usize) -> nalgebra::DMatrix<f64> {
    let m = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = m.qr().q();
    let d = nalgebra::DVector::<f64>::from_fn(n, |_, _| 0.05 * 400f64.powf(rng.random::<f64>()));
    let mut g = &q * nalgebra::DMatrix::from_diagonal(&d) * q.transpose();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

pub fn rel_frobenius(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Painting oracle for the overlap criterion: masks sorted by decreasing
/// area (equal areas: lower confidence first, then higher index first, so
/// the tie winner paints last), each painted over everything before it.
pub fn sort_and_paint(
    segments: &[depthseg::recognition::LabeledSegment],
    w: usize,
    h: usize,
) -> Vec<u32> {
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&segments[a], &segments[b]);
        sb.mask
            .area()
            .cmp(&sa.mask.area())
            .then(sa.confidence.total_cmp(&sb.confidence))
            .then(b.cmp(&a))
    });
    let mut out = vec![0u32; w * h];
    for k in order {
        for p in segments[k].mask.iter_indices() {
            out[p] = segments[k].class_id;
        }
    }
    out
}

/// Random rectangle mask of at least one pixel.
pub fn random_rect(rng: &mut impl Rng, w: usize, h: usize) -> SegmentMask {
    let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
    let (x1, y1) = (rng.random_range(x0 + 1..=w), rng.random_range(y0 + 1..=h));
    SegmentMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
}

/// Random labeled rectangles with distinct-ish confidences.
pub fn random_segments(
    rng: &mut impl Rng,
    count: usize,
    w: usize,
    h: usize,
    classes: u32,
) -> Vec<depthseg::recognition::LabeledSegment> {
    (0..count)
        .map(|_| depthseg::recognition::LabeledSegment {
            mask: random_rect(rng, w, h),
            class_id: rng.random_range(1..=classes),
            confidence: rng.random(),
        })
        .collect()
}

/// Unit-cube lattice with `k` points per side.
pub fn cube_lattice(k: usize) -> Vec<[f64; 3]> {
    let s = |i: usize| i as f64 / (k - 1) as f64;
    let mut pts = Vec::new();
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                pts.push([s(i), s(j), s(l)]);
            }
        }
    }
    pts
}

/// `n` uniform points in a `size` box plus `n/100` far outliers.
pub fn contaminated_box(rng: &mut impl Rng, n: usize, size: [f64; 3]) -> Vec<[f64; 3]> {
    let mut pts: Vec<[f64; 3]> = (0..n)
        .map(|_| [0, 1, 2].map(|a| rng.random::<f64>() * size[a]))
        .collect();
    for _ in 0..n / 100 {
        pts.push([0, 1, 2].map(|a| {
            let off = size[a] * rng.random_range(0.5..2.0);
            if rng.random::<bool>() {
                size[a] + off
            } else {
                -off
            }
        }));
    }
    pts
}
