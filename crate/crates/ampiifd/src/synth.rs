//! Deterministic synthetic test imagery: textured "natural-looking" scenes
//! and blob patterns used by tests and benches. Seeded, so every call with
//! the same arguments produces the same image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{gaussian_smooth, Image};

/// A textured scene with structure at several scales: smoothed random
/// speckle plus random Gaussian blobs and a few high-contrast rectangles,
/// normalized to [0, 1].
pub fn natural_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::zeros(width, height);
    for v in img.data_mut() {
        *v = rng.gen_range(0.0..1.0);
    }
    img = gaussian_smooth(&img, 2.0).expect("valid sigma");

    let n_blobs = (width * height / 900).max(8);
    for _ in 0..n_blobs {
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let s = rng.gen_range(2.0..width.min(height) as f64 / 8.0);
        let amp = rng.gen_range(-0.6..0.6);
        stamp_gaussian(&mut img, cx, cy, s, amp);
    }

    let n_rects = (width / 40).max(4);
    for _ in 0..n_rects {
        let x0 = rng.gen_range(0..width);
        let y0 = rng.gen_range(0..height);
        let w = rng.gen_range(4..width / 4 + 5).min(width - x0);
        let h = rng.gen_range(4..height / 4 + 5).min(height - y0);
        let v = rng.gen_range(-0.5..0.5);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                img.set(x, y, img.get(x, y) + v);
            }
        }
    }
    normalize(&mut img);
    img
}

/// A grid of Gaussian blobs of the given scale on a flat background.
pub fn blob_image(width: usize, height: usize, blob_sigma: f64, spacing: usize) -> Image {
    let mut img = Image::constant(width, height, 0.2);
    let mut y = spacing / 2;
    while y < height {
        let mut x = spacing / 2;
        while x < width {
            stamp_gaussian(&mut img, x as f64, y as f64, blob_sigma, 0.7);
            x += spacing;
        }
        y += spacing;
    }
    img
}

fn stamp_gaussian(img: &mut Image, cx: f64, cy: f64, sigma: f64, amp: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x_lo = (cx as isize - radius).max(0);
    let x_hi = (cx as isize + radius).min(w - 1);
    let y_lo = (cy as isize - radius).max(0);
    let y_hi = (cy as isize + radius).min(h - 1);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let v = amp * (-d2 / (2.0 * sigma * sigma)).exp();
            img.set(x as usize, y as usize, img.get(x as usize, y as usize) + v);
        }
    }
}

fn normalize(img: &mut Image) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in img.data() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    for v in img.data_mut() {
        *v = (*v - lo) / span;
    }
}
