//! Nonlinear diffusion scale space.
//!
//! The image evolves under `dL/dt = div(g3(|grad L_sigma|) * grad L)` using a
//! semi-implicit additive-operator-splitting (AOS) scheme: one exactly solved
//! tridiagonal system per row and per column, averaged. Scales are arranged
//! in O octaves of S sublevels, `sigma(o, s) = sigma0 * 2^(o + s/S)`, and each
//! sigma converts to an evolution time `t = sigma^2 / 2`.

use crate::error::{Error, Result};
use crate::image::{gaussian_smooth, gradient, GradientField, Image};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Schedule and diffusion parameters for the scale space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSpaceParams {
    pub num_octaves: usize,
    pub num_sublevels: usize,
    pub base_sigma: f64,
    pub contrast_percentile: f64,
    pub smoothing_sigma_for_gradient: f64,
    /// AOS sub-steps per level transition. One step is unconditionally
    /// stable; more steps trade speed for accuracy.
    pub aos_substeps: usize,
}

impl Default for ScaleSpaceParams {
    fn default() -> Self {
        ScaleSpaceParams {
            num_octaves: 4,
            num_sublevels: 4,
            base_sigma: 1.6,
            contrast_percentile: 0.7,
            smoothing_sigma_for_gradient: 1.0,
            aos_substeps: 1,
        }
    }
}

impl ScaleSpaceParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_octaves < 1 {
            return Err(Error::InvalidParameter {
                name: "num_octaves",
                detail: "O >= 1 violated".into(),
            });
        }
        if self.num_sublevels < 1 {
            return Err(Error::InvalidParameter {
                name: "num_sublevels",
                detail: "S >= 1 violated".into(),
            });
        }
        if !(self.base_sigma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "base_sigma",
                detail: "sigma0 > 0 violated".into(),
            });
        }
        if !(self.contrast_percentile > 0.0 && self.contrast_percentile < 1.0) {
            return Err(Error::InvalidParameter {
                name: "contrast_percentile",
                detail: "must lie in (0,1)".into(),
            });
        }
        if self.aos_substeps < 1 {
            return Err(Error::InvalidParameter {
                name: "aos_substeps",
                detail: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// One diffusion-filtered image with its scale metadata.
#[derive(Debug, Clone)]
pub struct EvolutionLevel {
    pub octave: usize,
    pub sublevel: usize,
    pub sigma: f64,
    pub time: f64,
    pub image: Image,
    pub grad: GradientField,
}

/// The ordered stack of evolution levels plus the contrast factor used to
/// build it.
#[derive(Debug, Clone)]
pub struct NonlinearScaleSpace {
    pub params: ScaleSpaceParams,
    pub levels: Vec<EvolutionLevel>,
    pub contrast_factor: f64,
}

/// `sigma(o, s) = sigma0 * 2^(o + s/S)`.
pub fn sigma_of_level(octave: usize, sublevel: usize, params: &ScaleSpaceParams) -> Result<f64> {
    if octave >= params.num_octaves || sublevel >= params.num_sublevels {
        return Err(Error::IndexOutOfRange(format!(
            "level (o={octave}, s={sublevel}) outside {}x{}",
            params.num_octaves, params.num_sublevels
        )));
    }
    Ok(params.base_sigma
        * 2f64.powf(octave as f64 + sublevel as f64 / params.num_sublevels as f64))
}

/// Gaussian-equivalent evolution time `t = sigma^2 / 2`.
pub fn time_of_sigma(sigma: f64) -> Result<f64> {
    if sigma < 0.0 {
        return Err(Error::InvalidSigma(sigma));
    }
    Ok(sigma * sigma / 2.0)
}

const CONTRAST_HIST_BINS: usize = 256;
const CONTRAST_FALLBACK: f64 = 0.01;

/// Estimates the contrast factor k as the `contrast_percentile` quantile of
/// the smoothed gradient-magnitude histogram over interior pixels.
pub fn estimate_contrast_factor(img: &Image, params: &ScaleSpaceParams) -> Result<f64> {
    let smoothed = gaussian_smooth(img, params.smoothing_sigma_for_gradient)?;
    let g = gradient(&smoothed)?;
    let (w, h) = (img.width(), img.height());

    let mut hmax = 0f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let m = g.gx.get(x, y).hypot(g.gy.get(x, y));
            hmax = hmax.max(m);
        }
    }
    if hmax == 0.0 {
        return Ok(CONTRAST_FALLBACK);
    }

    // Magnitudes below one bin width are flat background (numerical noise
    // of smooth regions); counting them would drag the percentile into the
    // lowest bin and freeze diffusion everywhere.
    let floor = hmax / CONTRAST_HIST_BINS as f64;
    let mut hist = [0usize; CONTRAST_HIST_BINS];
    let mut count = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let m = g.gx.get(x, y).hypot(g.gy.get(x, y));
            if m > floor {
                let bin = ((m / hmax * CONTRAST_HIST_BINS as f64).floor() as usize)
                    .min(CONTRAST_HIST_BINS - 1);
                hist[bin] += 1;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(CONTRAST_FALLBACK);
    }

    let target = params.contrast_percentile * count as f64;
    let mut acc = 0usize;
    for (bin, &n) in hist.iter().enumerate() {
        acc += n;
        if acc as f64 >= target {
            return Ok(hmax * (bin + 1) as f64 / CONTRAST_HIST_BINS as f64);
        }
    }
    Ok(hmax)
}

/// Weickert's g3 conductivity: 1 at zero gradient, otherwise
/// `1 - exp(-3.315 / (grad_mag / k)^8)`.
pub fn conductivity_g3(grad_mag: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter {
            name: "contrast_factor",
            detail: format!("k must be > 0, got {k}"),
        });
    }
    if grad_mag == 0.0 {
        return Ok(1.0);
    }
    let ratio = grad_mag / k;
    Ok(1.0 - (-3.315 / ratio.powi(8)).exp())
}

/// Per-pixel g3 conductivity from a gradient field.
pub fn conductivity_image(grad: &GradientField, k: f64) -> Result<Image> {
    let (w, h) = (grad.gx.width(), grad.gx.height());
    let mut out = Image::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let m = grad.gx.get(x, y).hypot(grad.gy.get(x, y));
            out.set(x, y, conductivity_g3(m, k)?);
        }
    }
    Ok(out)
}

/// Thomas-algorithm solve of `(I - 2 tau A) u = rhs` along one 1-D line,
/// where A discretizes `d/dx (c du/dx)` with half-point conductivities
/// `(c[i] + c[i+1]) / 2` and zero-flux boundaries.
fn thomas_line(cond: &[f64], rhs: &[f64], tau: f64, out: &mut [f64]) {
    let n = rhs.len();
    if n == 1 {
        out[0] = rhs[0];
        return;
    }
    // Half-point conductivities between i and i+1.
    let half: Vec<f64> = (0..n - 1).map(|i| 0.5 * (cond[i] + cond[i + 1])).collect();
    // M = I - 2 tau A; A has row sums zero under Neumann boundaries.
    let mut diag: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i > 0 { half[i - 1] } else { 0.0 };
            let right = if i < n - 1 { half[i] } else { 0.0 };
            1.0 + 2.0 * tau * (left + right)
        })
        .collect();
    let off: Vec<f64> = half.iter().map(|&c| -2.0 * tau * c).collect();

    // Forward elimination.
    let mut work = rhs.to_vec();
    for i in 1..n {
        let m = off[i - 1] / diag[i - 1];
        diag[i] -= m * off[i - 1];
        work[i] -= m * work[i - 1];
    }
    // Back substitution.
    out[n - 1] = work[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = (work[i] - off[i] * out[i + 1]) / diag[i];
    }
}

fn transpose(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(h, w, |x, y| img.get(y, x))
}

fn row_pass_seq(img: &Image, cond: &Image, tau: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::zeros(w, h);
    for y in 0..h {
        let rhs = img.row(y);
        let c = cond.row(y);
        thomas_line(c, rhs, tau, &mut out.data_mut()[y * w..(y + 1) * w]);
    }
    out
}

#[cfg(feature = "parallel")]
fn row_pass_par(img: &Image, cond: &Image, tau: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::zeros(w, h);
    out.data_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, out_row)| {
            thomas_line(cond.row(y), img.row(y), tau, out_row);
        });
    let _ = h;
    out
}

fn aos_step_with(
    img: &Image,
    cond: &Image,
    tau: f64,
    row_pass: fn(&Image, &Image, f64) -> Image,
) -> Result<Image> {
    if img.width() != cond.width() || img.height() != cond.height() {
        return Err(Error::DimensionMismatch(
            img.width(),
            img.height(),
            cond.width(),
            cond.height(),
        ));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            detail: format!("must be >= 0, got {tau}"),
        });
    }
    let rows = row_pass(img, cond, tau);
    let cols = transpose(&row_pass(&transpose(img), &transpose(cond), tau));
    let mut out = Image::zeros(img.width(), img.height());
    for (o, (r, c)) in out
        .data_mut()
        .iter_mut()
        .zip(rows.data().iter().zip(cols.data()))
    {
        *o = 0.5 * (r + c);
    }
    Ok(out)
}

/// One semi-implicit AOS diffusion step of duration `tau`:
/// `L+ = 1/2 * sum over {rows, cols} of (I - 2 tau A_l(c))^-1 L`.
pub fn aos_step(img: &Image, cond: &Image, tau: f64) -> Result<Image> {
    #[cfg(feature = "parallel")]
    {
        aos_step_with(img, cond, tau, row_pass_par)
    }
    #[cfg(not(feature = "parallel"))]
    {
        aos_step_with(img, cond, tau, row_pass_seq)
    }
}

/// Sequential AOS step, kept callable for benchmarking against the
/// rayon-backed [`aos_step`].
pub fn aos_step_seq(img: &Image, cond: &Image, tau: f64) -> Result<Image> {
    aos_step_with(img, cond, tau, row_pass_seq)
}

/// Builds the full nonlinear scale space: pre-smooth to `sigma0`, estimate k
/// once from the input, then evolve level to level with single AOS steps,
/// recomputing conductivity from the smoothed gradient of the current level.
pub fn build_scale_space(img: &Image, params: &ScaleSpaceParams) -> Result<NonlinearScaleSpace> {
    params.validate()?;
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::ImageTooSmall {
            min: 3,
            width: img.width(),
            height: img.height(),
        });
    }
    let contrast_factor = estimate_contrast_factor(img, params)?;
    let mut current = gaussian_smooth(img, params.base_sigma)?;

    let total = params.num_octaves * params.num_sublevels;
    let mut levels = Vec::with_capacity(total);
    let mut prev_time = 0.0;
    for i in 0..total {
        let octave = i / params.num_sublevels;
        let sublevel = i % params.num_sublevels;
        let sigma = sigma_of_level(octave, sublevel, params)?;
        let time = time_of_sigma(sigma)?;
        if i > 0 {
            let smoothed = gaussian_smooth(&current, params.smoothing_sigma_for_gradient)?;
            let cond = conductivity_image(&gradient(&smoothed)?, contrast_factor)?;
            let tau = (time - prev_time) / params.aos_substeps as f64;
            for _ in 0..params.aos_substeps {
                current = aos_step(&current, &cond, tau)?;
            }
        }
        levels.push(EvolutionLevel {
            octave,
            sublevel,
            sigma,
            time,
            grad: gradient(&current)?,
            image: current.clone(),
        });
        prev_time = time;
    }
    Ok(NonlinearScaleSpace {
        params: params.clone(),
        levels,
        contrast_factor,
    })
}
