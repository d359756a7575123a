//! Adaptive multi-scale PIIFD description.
//!
//! Each keypoint gets a main orientation from the continuous averaged
//! squared gradient, a `(k*mu) x (k*mu)` sampling region rotated to that
//! orientation, a 4x4 grid of degenerate 8-bin orientation histograms
//! (opposite 22.5-degree directions summed), and a 128-component unit vector
//! combining the grid with its 180-degree rotation:
//! rows 1-2 are `H_i + Q_i`, rows 3-4 are `C * |H_i - Q_i|`.

use std::f64::consts::PI;

use crate::detector::KeyPoint;
use crate::error::{Error, Result};
use crate::image::bilinear_sample_unchecked;
use crate::scale_space::{EvolutionLevel, NonlinearScaleSpace};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const GRID_CELLS: usize = 4;
pub const RAW_BINS: usize = 16;
pub const FOLDED_BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = GRID_CELLS * GRID_CELLS * FOLDED_BINS;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorParams {
    /// Region multiplier k: descriptor support side is `k * mu`.
    pub region_multiplier: f64,
    /// Scale of the antisymmetric sub-descriptor rows.
    pub combine_scale: f64,
    /// Minimum sampling-grid side in pixels.
    pub min_region: usize,
    /// Clamp components at 0.2 of the norm and renormalize. Disabled in
    /// strict-paper mode.
    pub clamp_components: bool,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            region_multiplier: 6.0,
            combine_scale: 1.0,
            min_region: 8,
            clamp_components: true,
        }
    }
}

impl DescriptorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.combine_scale > 0.0) {
            return Err(Error::InvalidParameter {
                name: "combine_scale",
                detail: "C > 0 violated".into(),
            });
        }
        if self.min_region < 4 {
            return Err(Error::InvalidParameter {
                name: "min_region",
                detail: "must be >= 4".into(),
            });
        }
        if !(self.region_multiplier >= 1.0) {
            return Err(Error::InvalidParameter {
                name: "k_region",
                detail: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// 4x4 grid of folded (pi-periodic) 8-bin orientation histograms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescriptorGrid {
    pub cells: [[[f64; FOLDED_BINS]; GRID_CELLS]; GRID_CELLS],
}

/// 128-component unit-length PIIFD vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
}

impl Descriptor {
    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn cosine_similarity(&self, other: &Descriptor) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// One region sample: grid cell, rotated-frame offsets, and the gradient in
/// the orientation-canonical frame.
#[derive(Debug, Clone, Copy)]
pub struct RegionSample {
    pub cell_row: usize,
    pub cell_col: usize,
    pub du: f64,
    pub dv: f64,
    pub magnitude: f64,
    /// Gradient angle relative to the main orientation, in [0, 2*pi).
    pub angle: f64,
}

const ENERGY_EPS: f64 = 1e-12;

/// Main orientation from the Gaussian-weighted averaged squared gradient
/// over a square window of side `k * mu`. Returns None when the window
/// carries no gradient energy (undescribable keypoint).
pub fn main_orientation(
    level: &EvolutionLevel,
    kp: &KeyPoint,
    params: &DescriptorParams,
) -> Option<f64> {
    let side = params.region_multiplier * kp.mu;
    let radius = (side / 2.0).ceil() as isize;
    let sigma_w = side / 4.0;
    let (w, h) = (level.image.width() as isize, level.image.height() as isize);
    let cx = kp.x.round() as isize;
    let cy = kp.y.round() as isize;
    if cx < 1 || cy < 1 || cx >= w - 1 || cy >= h - 1 {
        return None;
    }
    let mut acc_a = 0.0; // sum w * (gx^2 - gy^2)
    let mut acc_b = 0.0; // sum w * 2 gx gy
    for dy in -radius..=radius {
        let y = cy + dy;
        if y < 0 || y >= h {
            continue;
        }
        for dx in -radius..=radius {
            let x = cx + dx;
            if x < 0 || x >= w {
                continue;
            }
            let weight =
                (-((dx * dx + dy * dy) as f64) / (2.0 * sigma_w * sigma_w)).exp();
            let gx = level.grad.gx.get(x as usize, y as usize);
            let gy = level.grad.gy.get(x as usize, y as usize);
            acc_a += weight * (gx * gx - gy * gy);
            acc_b += weight * 2.0 * gx * gy;
        }
    }
    if acc_a.abs() < ENERGY_EPS && acc_b.abs() < ENERGY_EPS {
        return None;
    }
    let mut phi = 0.5 * acc_b.atan2(acc_a);
    if phi < 0.0 {
        phi += PI;
    }
    if phi >= PI {
        phi -= PI;
    }
    Some(phi)
}

/// Sampling-grid side in samples per axis for a given scale factor.
pub fn region_side(mu: f64, params: &DescriptorParams) -> usize {
    ((params.region_multiplier * mu).round() as usize).max(params.min_region)
}

/// Samples the descriptor region on a rotated grid. Gradients come from
/// bilinear interpolation of the level's gradient field and are rotated into
/// the orientation-canonical frame. Returns None when fewer than 25% of the
/// samples land inside the image.
pub fn sample_region(
    level: &EvolutionLevel,
    kp: &KeyPoint,
    orientation: f64,
    params: &DescriptorParams,
) -> Option<(Vec<RegionSample>, usize)> {
    let side = region_side(kp.mu, params);
    let half = (side as f64 - 1.0) / 2.0;
    let cell_size = side as f64 / GRID_CELLS as f64;
    let (cos_t, sin_t) = (orientation.cos(), orientation.sin());
    let (w, h) = (
        level.image.width() as f64 - 1.0,
        level.image.height() as f64 - 1.0,
    );
    let mut samples = Vec::with_capacity(side * side);
    for v in 0..side {
        let dv = v as f64 - half;
        for u in 0..side {
            let du = u as f64 - half;
            // Rotated-frame offset mapped into the image frame.
            let px = kp.x + cos_t * du - sin_t * dv;
            let py = kp.y + sin_t * du + cos_t * dv;
            if px < 0.0 || px > w || py < 0.0 || py > h {
                continue;
            }
            let gx = bilinear_sample_unchecked(&level.grad.gx, px, py);
            let gy = bilinear_sample_unchecked(&level.grad.gy, px, py);
            // Rotate the gradient back into the canonical frame.
            let mut cgx = cos_t * gx + sin_t * gy;
            let mut cgy = -sin_t * gx + cos_t * gy;
            // The descriptor only uses the orientation modulo a half turn
            // (opposite histogram bins are summed), so canonicalize the
            // gradient to the upper half-plane here. This makes invariance
            // to a full gradient reversal exact, not merely approximate.
            if cgy < 0.0 || (cgy == 0.0 && cgx < 0.0) {
                cgx = -cgx;
                cgy = -cgy;
            }
            let magnitude = cgx.hypot(cgy);
            let mut angle = cgy.atan2(cgx);
            if angle < 0.0 {
                angle += 2.0 * PI;
            }
            let cell_col = (((du + side as f64 / 2.0) / cell_size).floor() as isize)
                .clamp(0, GRID_CELLS as isize - 1) as usize;
            let cell_row = (((dv + side as f64 / 2.0) / cell_size).floor() as isize)
                .clamp(0, GRID_CELLS as isize - 1) as usize;
            samples.push(RegionSample {
                cell_row,
                cell_col,
                du,
                dv,
                magnitude,
                angle,
            });
        }
    }
    if samples.len() * 4 < side * side {
        return None;
    }
    Some((samples, side))
}

/// Accumulates samples into the 4x4 grid of folded 8-bin histograms:
/// magnitude votes into the 16-bin raw histogram with linear interpolation
/// between the two nearest bin centers, weighted by a spatial Gaussian of
/// sigma = side/2, then opposite bins are summed.
pub fn build_histograms(samples: &[RegionSample], side: usize) -> DescriptorGrid {
    let sigma = side as f64 / 2.0;
    let mut raw = [[[0f64; RAW_BINS]; GRID_CELLS]; GRID_CELLS];
    for s in samples {
        let weight = (-(s.du * s.du + s.dv * s.dv) / (2.0 * sigma * sigma)).exp();
        let vote = s.magnitude * weight;
        // Raw bin centers at b * 22.5 degrees.
        let t = s.angle / (2.0 * PI) * RAW_BINS as f64;
        let b0 = (t.floor() as usize) % RAW_BINS;
        let frac = t - t.floor();
        raw[s.cell_row][s.cell_col][b0] += vote * (1.0 - frac);
        raw[s.cell_row][s.cell_col][(b0 + 1) % RAW_BINS] += vote * frac;
    }
    let mut grid = DescriptorGrid::default();
    for i in 0..GRID_CELLS {
        for j in 0..GRID_CELLS {
            for b in 0..FOLDED_BINS {
                grid.cells[i][j][b] = raw[i][j][b] + raw[i][j][b + FOLDED_BINS];
            }
        }
    }
    grid
}

/// Combines the grid with its 180-degree spatial rotation into the final
/// 128-component unit descriptor. Returns None on a zero-energy grid.
pub fn assemble_piifd(grid: &DescriptorGrid, params: &DescriptorParams) -> Option<Descriptor> {
    let c = params.combine_scale;
    let mut values = vec![0f64; DESCRIPTOR_LEN];
    for i in 0..GRID_CELLS {
        for j in 0..GRID_CELLS {
            for b in 0..FOLDED_BINS {
                let h = grid.cells[i][j][b];
                // Q = rot(H, 180 degrees): cell (i, j) maps to the
                // diagonally opposite cell; folded bins are pi-periodic so
                // bin order is unchanged.
                let q = grid.cells[GRID_CELLS - 1 - i][GRID_CELLS - 1 - j][b];
                let idx = (i * GRID_CELLS + j) * FOLDED_BINS + b;
                values[idx] = if i < GRID_CELLS / 2 {
                    h + q
                } else {
                    c * (h - q).abs()
                };
            }
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return None;
    }
    if params.clamp_components {
        let cap = 0.2 * norm;
        for v in &mut values {
            if *v > cap {
                *v = cap;
            }
        }
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    Some(Descriptor { values })
}

fn describe_one(
    level: &EvolutionLevel,
    kp: &KeyPoint,
    params: &DescriptorParams,
) -> Option<(KeyPoint, Descriptor)> {
    let orientation = main_orientation(level, kp, params)?;
    let (samples, side) = sample_region(level, kp, orientation, params)?;
    let grid = build_histograms(&samples, side);
    let descriptor = assemble_piifd(&grid, params)?;
    let mut kp = kp.clone();
    kp.orientation = orientation;
    Some((kp, descriptor))
}

fn level_of<'a>(space: &'a NonlinearScaleSpace, kp: &KeyPoint) -> &'a EvolutionLevel {
    &space.levels[kp.octave * space.params.num_sublevels + kp.sublevel]
}

/// Describes every keypoint; undescribable ones are dropped, order follows
/// the input.
pub fn describe(
    space: &NonlinearScaleSpace,
    keypoints: &[KeyPoint],
    params: &DescriptorParams,
) -> Result<Vec<(KeyPoint, Descriptor)>> {
    params.validate()?;
    #[cfg(feature = "parallel")]
    {
        Ok(keypoints
            .par_iter()
            .filter_map(|kp| describe_one(level_of(space, kp), kp, params))
            .collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(keypoints
            .iter()
            .filter_map(|kp| describe_one(level_of(space, kp), kp, params))
            .collect())
    }
}

/// Sequential description, kept callable for the criterion benches.
pub fn describe_seq(
    space: &NonlinearScaleSpace,
    keypoints: &[KeyPoint],
    params: &DescriptorParams,
) -> Result<Vec<(KeyPoint, Descriptor)>> {
    params.validate()?;
    Ok(keypoints
        .iter()
        .filter_map(|kp| describe_one(level_of(space, kp), kp, params))
        .collect())
}
