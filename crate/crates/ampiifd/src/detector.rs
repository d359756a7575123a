//! Keypoint detection on the nonlinear scale space: scale-normalized
//! Hessian-determinant response maps, 26-neighbor non-maximum suppression
//! across space and scale, quadratic subpixel/subscale refinement and the
//! adaptive scale factor `mu = offset * 2^(o + (s + lambda)/S)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scale_space::{EvolutionLevel, NonlinearScaleSpace};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub response_threshold: f64,
    /// Base offset of the scale-factor formula.
    pub offset: f64,
    /// Descriptor region multiplier k, shared with the descriptor stage.
    pub region_multiplier: f64,
    pub max_keypoints: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            response_threshold: 1e-3,
            offset: 1.6,
            region_multiplier: 6.0,
            max_keypoints: 5000,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.response_threshold > 0.0) {
            return Err(Error::InvalidParameter {
                name: "response_threshold",
                detail: "must be > 0".into(),
            });
        }
        if !(self.offset > 0.0) {
            return Err(Error::InvalidParameter {
                name: "offset",
                detail: "must be > 0".into(),
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

/// A detected feature: subpixel location, scale-space address, adaptive
/// scale factor and Hessian response. `orientation` stays NaN until the
/// descriptor stage assigns it.
#[derive(Debug, Clone)]
pub struct KeyPoint {
    pub x: f64,
    pub y: f64,
    pub octave: usize,
    pub sublevel: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub mu: f64,
    pub response: f64,
    pub orientation: f64,
}

/// Integer-grid extremum candidate prior to refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub x: usize,
    pub y: usize,
    pub level: usize,
    pub response: f64,
}

fn hessian_response_of(img: &Image, sigma: f64) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    if w < 5 || h < 5 {
        return Err(Error::ImageTooSmall {
            min: 5,
            width: w,
            height: h,
        });
    }
    // Central second differences with a scale-proportional step: sampling
    // at +/- sigma makes sigma^2-normalized second derivatives bounded even
    // across the sharp edges that the nonlinear diffusion preserves.
    let step = (sigma.round() as isize).max(1);
    let norm = sigma.powi(4);
    let hs = step as f64 * step as f64;
    let at = |x: isize, y: isize| img.get_clamped(x, y);
    let mut out = Image::zeros(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = at(x, y);
            let lxx = (at(x + step, y) - 2.0 * c + at(x - step, y)) / hs;
            let lyy = (at(x, y + step) - 2.0 * c + at(x, y - step)) / hs;
            let lxy = (at(x + step, y + step) - at(x + step, y - step)
                - at(x - step, y + step)
                + at(x - step, y - step))
                / (4.0 * hs);
            out.set(x as usize, y as usize, norm * (lxx * lyy - lxy * lxy));
        }
    }
    Ok(out)
}

/// Scale-normalized Hessian-determinant response of one evolution level:
/// `sigma^4 * (Lxx*Lyy - Lxy^2)`.
pub fn hessian_response(level: &EvolutionLevel) -> Result<Image> {
    hessian_response_of(&level.image, level.sigma)
}

/// Response maps for every level of the space.
pub fn response_stack(space: &NonlinearScaleSpace) -> Result<Vec<Image>> {
    #[cfg(feature = "parallel")]
    {
        space.levels.par_iter().map(hessian_response).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        space.levels.iter().map(hessian_response).collect()
    }
}

/// Sequential response stack, kept callable for the criterion benches.
pub fn response_stack_seq(space: &NonlinearScaleSpace) -> Result<Vec<Image>> {
    space.levels.iter().map(hessian_response).collect()
}

fn extrema_from_responses(responses: &[Image], params: &DetectorParams) -> Vec<Candidate> {
    let mut found = Vec::new();
    let (w, h) = (responses[0].width(), responses[0].height());
    for level in 1..responses.len() - 1 {
        let scan_level = |y: usize, out: &mut Vec<Candidate>| {
            for x in 1..w - 1 {
                let r = responses[level].get(x, y);
                if r <= params.response_threshold {
                    continue;
                }
                let mut is_max = true;
                'nb: for li in [level - 1, level, level + 1] {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            if li == level && dx == 0 && dy == 0 {
                                continue;
                            }
                            let nx = (x as isize + dx) as usize;
                            let ny = (y as isize + dy) as usize;
                            if responses[li].get(nx, ny) >= r {
                                is_max = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_max {
                    out.push(Candidate {
                        x,
                        y,
                        level,
                        response: r,
                    });
                }
            }
        };
        #[cfg(feature = "parallel")]
        {
            let mut rows: Vec<Vec<Candidate>> = (1..h - 1)
                .into_par_iter()
                .map(|y| {
                    let mut out = Vec::new();
                    scan_level(y, &mut out);
                    out
                })
                .collect();
            for row in &mut rows {
                found.append(row);
            }
        }
        #[cfg(not(feature = "parallel"))]
        for y in 1..h - 1 {
            scan_level(y, &mut found);
        }
    }
    // Deterministic ordering: response descending, then y, then x.
    found.sort_by(|a, b| {
        b.response
            .partial_cmp(&a.response)
            .unwrap()
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
    found.truncate(params.max_keypoints);
    found
}

/// Strict 26-neighbor local maxima of the response stack above the
/// detection threshold, sorted by response descending.
pub fn detect_extrema(
    space: &NonlinearScaleSpace,
    params: &DetectorParams,
) -> Result<Vec<Candidate>> {
    if space.levels.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "scale_space",
            detail: "need at least 3 levels for scale-space extrema".into(),
        });
    }
    let responses = response_stack(space)?;
    Ok(extrema_from_responses(&responses, params))
}

const REFINE_MAX_CONDITION: f64 = 1e10;

/// Quadratic refinement on the response volume: solves `H xhat = -grad` over
/// the 3x3x3 neighborhood. Returns the (dx, dy, dlambda) offset, or None when
/// the Hessian is near-singular or the offset leaves the unit cube.
pub fn refine_subpixel(candidate: &Candidate, responses: &[Image]) -> Option<(f64, f64, f64)> {
    let (x, y, l) = (candidate.x, candidate.y, candidate.level);
    let r = |dx: isize, dy: isize, dl: isize| {
        responses[(l as isize + dl) as usize].get(
            (x as isize + dx) as usize,
            (y as isize + dy) as usize,
        )
    };
    let gx = (r(1, 0, 0) - r(-1, 0, 0)) / 2.0;
    let gy = (r(0, 1, 0) - r(0, -1, 0)) / 2.0;
    let gl = (r(0, 0, 1) - r(0, 0, -1)) / 2.0;
    let dxx = r(1, 0, 0) - 2.0 * r(0, 0, 0) + r(-1, 0, 0);
    let dyy = r(0, 1, 0) - 2.0 * r(0, 0, 0) + r(0, -1, 0);
    let dll = r(0, 0, 1) - 2.0 * r(0, 0, 0) + r(0, 0, -1);
    let dxy = (r(1, 1, 0) - r(1, -1, 0) - r(-1, 1, 0) + r(-1, -1, 0)) / 4.0;
    let dxl = (r(1, 0, 1) - r(1, 0, -1) - r(-1, 0, 1) + r(-1, 0, -1)) / 4.0;
    let dyl = (r(0, 1, 1) - r(0, 1, -1) - r(0, -1, 1) + r(0, -1, -1)) / 4.0;

    let hess = Matrix3::new(dxx, dxy, dxl, dxy, dyy, dyl, dxl, dyl, dll);
    let svd = hess.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 || smax / smin > REFINE_MAX_CONDITION {
        return None;
    }
    let offset = svd.solve(&Vector3::new(-gx, -gy, -gl), 0.0).ok()?;
    if offset.iter().any(|v| v.abs() > 1.0) {
        return None;
    }
    Some((offset[0], offset[1], offset[2]))
}

/// `mu = offset * 2^(o + (s + lambda)/S)`.
pub fn scale_factor(
    octave: usize,
    sublevel: usize,
    lambda: f64,
    offset: f64,
    num_sublevels: usize,
) -> Result<f64> {
    if !(-1.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter {
            name: "lambda",
            detail: format!("must lie in [-1, 1], got {lambda}"),
        });
    }
    Ok(offset * 2f64.powf(octave as f64 + (sublevel as f64 + lambda) / num_sublevels as f64))
}

/// Full detection: extrema scan, subpixel refinement, scale-factor
/// assignment. Orientation stays NaN until description.
pub fn detect(space: &NonlinearScaleSpace, params: &DetectorParams) -> Result<Vec<KeyPoint>> {
    params.validate()?;
    if space.levels.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "scale_space",
            detail: "need at least 3 levels".into(),
        });
    }
    let responses = response_stack(space)?;
    let candidates = extrema_from_responses(&responses, params);
    let s_count = space.params.num_sublevels;
    let (w, h) = (
        space.levels[0].image.width() as f64,
        space.levels[0].image.height() as f64,
    );
    let mut keypoints = Vec::new();
    for cand in &candidates {
        let Some((dx, dy, dl)) = refine_subpixel(cand, &responses) else {
            continue;
        };
        let x = cand.x as f64 + dx;
        let y = cand.y as f64 + dy;
        if !(0.0..w).contains(&x) || !(0.0..h).contains(&y) {
            continue;
        }
        let octave = cand.level / s_count;
        let sublevel = cand.level % s_count;
        let mu = scale_factor(octave, sublevel, dl, params.offset, s_count)?;
        keypoints.push(KeyPoint {
            x,
            y,
            octave,
            sublevel,
            lambda: dl,
            sigma: space.levels[cand.level].sigma,
            mu,
            response: cand.response,
            orientation: f64::NAN,
        });
    }
    Ok(keypoints)
}
