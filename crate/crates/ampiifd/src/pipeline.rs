//! End-to-end registration: feature extraction on both images, bilateral
//! matching, orientation filtering, robust model estimation, warping and
//! artifact output.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::config::PipelineConfig;
use crate::descriptor::{self, Descriptor};
use crate::detector::{self, KeyPoint};
use crate::error::{Error, Result};
use crate::evaluation::{self, RegistrationReport};
use crate::image::{self, quantize_u8, Image};
use crate::matching::{self, MatchPair};
use crate::scale_space::{self, NonlinearScaleSpace};
use crate::transform;

/// Established matches below this count flag the result as unreliable.
const RELIABLE_MATCH_COUNT: usize = 8;

/// Runs both closures, concurrently when the parallel feature is on.
fn both<A, B>(fa: impl FnOnce() -> A + Send, fb: impl FnOnce() -> B + Send) -> (A, B)
where
    A: Send,
    B: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::join(fa, fb)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (fa(), fb())
    }
}

fn timed<T>(
    times: &mut BTreeMap<String, f64>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    times.insert(stage.to_string(), start.elapsed().as_secs_f64());
    Ok(out)
}

/// Registers the sensed image onto the reference image and writes all
/// artifacts (matches, transform, warped image, mosaics, visualization,
/// report) into the configured output directory.
pub fn run_register(
    ref_path: &Path,
    sen_path: &Path,
    gt_path: Option<&Path>,
    config: &PipelineConfig,
) -> Result<RegistrationReport> {
    config.validate()?;
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::UnwritablePath {
        path: out_dir.clone(),
        detail: e.to_string(),
    })?;

    let mut times = BTreeMap::new();

    let (ref_img, sen_img) = timed(&mut times, "load", || {
        let r = image::load_image(ref_path)?;
        let s = image::load_image(sen_path)?;
        Ok((r, s))
    })?;

    let (ref_space, sen_space) = timed(&mut times, "scale_space", || {
        let (r, s) = both(
            || scale_space::build_scale_space(&ref_img, &config.scale_space),
            || scale_space::build_scale_space(&sen_img, &config.scale_space),
        );
        Ok((r?, s?))
    })?;
    if config.debug_dumps {
        dump_levels(&ref_space, &out_dir.join("debug/ref"))?;
        dump_levels(&sen_space, &out_dir.join("debug/sen"))?;
    }

    let (ref_kps, sen_kps) = timed(&mut times, "detect", || {
        let (r, s) = both(
            || detector::detect(&ref_space, &config.detector),
            || detector::detect(&sen_space, &config.detector),
        );
        Ok((r?, s?))
    })?;

    let (ref_feats, sen_feats) = timed(&mut times, "describe", || {
        let (r, s) = both(
            || descriptor::describe(&ref_space, &ref_kps, &config.descriptor),
            || descriptor::describe(&sen_space, &sen_kps, &config.descriptor),
        );
        Ok((r?, s?))
    })?;
    if config.debug_dumps {
        dump_keypoints(&ref_feats, &out_dir.join("keypoints_ref.txt"))?;
        dump_keypoints(&sen_feats, &out_dir.join("keypoints_sen.txt"))?;
        dump_descriptors(&ref_feats, &out_dir.join("descriptors_ref.bin"))?;
        dump_descriptors(&sen_feats, &out_dir.join("descriptors_sen.bin"))?;
    }

    let initial = timed(&mut times, "match", || {
        matching::bilateral_match(&ref_feats, &sen_feats, &config.matching)
    })?;
    let oriented = timed(&mut times, "orientation_filter", || {
        matching::orientation_filter(&initial, &config.matching)
    })?;

    let ref_points: Vec<[f64; 2]> = ref_feats.iter().map(|(k, _)| [k.x, k.y]).collect();
    let sen_points: Vec<[f64; 2]> = sen_feats.iter().map(|(k, _)| [k.x, k.y]).collect();

    let (inliers, model) = timed(&mut times, "ransac", || {
        matching::ransac(
            &oriented,
            &ref_points,
            &sen_points,
            config.model_kind,
            &config.matching,
        )
    })?;

    let warped = timed(&mut times, "warp", || {
        transform::warp_image(&sen_img, &model, ref_img.width(), ref_img.height())
    })?;

    let (n_correct, cmr, rmse_px) = timed(&mut times, "metrics", || {
        let inlier_pairs: Vec<([f64; 2], [f64; 2])> = inliers
            .iter()
            .map(|m| {
                let mapped = transform::apply(&model, sen_points[m.sen_index])?;
                Ok((ref_points[m.ref_index], mapped))
            })
            .collect::<Result<_>>()?;
        let rmse_px = evaluation::rmse(&inlier_pairs).ok();
        match gt_path {
            Some(path) => {
                let gt = evaluation::load_ground_truth(path)?;
                let nc =
                    evaluation::classify_correct(&inliers, &ref_points, &sen_points, &gt, 3.0)?;
                let cmr = evaluation::cmr(nc, inliers.len())?;
                Ok((Some(nc), Some(cmr), rmse_px))
            }
            None => Ok((None, None, rmse_px)),
        }
    })?;

    let report = RegistrationReport {
        n_keypoints_ref: ref_feats.len(),
        n_keypoints_sen: sen_feats.len(),
        n_initial: initial.len(),
        n_oriented: oriented.len(),
        n_ransac: inliers.len(),
        n_correct,
        cmr,
        rmse_px,
        model_kind: model.kind,
        matrix: model.matrix.transpose().as_slice().to_vec(),
        unreliable: inliers.len() < RELIABLE_MATCH_COUNT,
        stage_times_s: times.clone(),
    };

    timed(&mut times, "write", || {
        write_matches(
            &initial,
            &oriented,
            &inliers,
            &ref_points,
            &sen_points,
            &out_dir.join("matches.txt"),
        )?;
        transform::write_transform(&model, out_dir.join("transform.txt"))?;
        image::save_image(&warped, out_dir.join("warped.png"))?;
        let mosaic = transform::checkerboard_mosaic(&ref_img, &warped, 32)?;
        image::save_image(&mosaic, out_dir.join("mosaic_gray.png"))?;
        let overlay = transform::rgb_overlay(&ref_img, &warped)?;
        save_rgb(&overlay, &out_dir.join("mosaic_rgb.png"))?;
        let vis = draw_matches(
            &ref_img, &sen_img, &oriented, &inliers, &ref_points, &sen_points,
        );
        save_rgb(&vis, &out_dir.join("matches_vis.png"))?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(out_dir.join("report.json"), json)?;
        Ok(())
    })?;

    Ok(report)
}

fn save_rgb(img: &::image::RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::UnwritablePath {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// One line per initial match, labeled with the furthest stage it survived.
fn write_matches(
    initial: &[MatchPair],
    oriented: &[MatchPair],
    inliers: &[MatchPair],
    ref_points: &[[f64; 2]],
    sen_points: &[[f64; 2]],
    path: &Path,
) -> Result<()> {
    let key = |m: &MatchPair| (m.ref_index, m.sen_index);
    let oriented_keys: std::collections::HashSet<_> = oriented.iter().map(key).collect();
    let inlier_keys: std::collections::HashSet<_> = inliers.iter().map(key).collect();
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# ref_x ref_y sen_x sen_y distance delta_phi stage")?;
    for m in initial {
        let stage = if inlier_keys.contains(&key(m)) {
            "ransac"
        } else if oriented_keys.contains(&key(m)) {
            "oriented"
        } else {
            "initial"
        };
        let r = ref_points[m.ref_index];
        let s = sen_points[m.sen_index];
        writeln!(
            file,
            "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {}",
            r[0], r[1], s[0], s[1], m.distance, m.delta_phi, stage
        )?;
    }
    Ok(())
}

/// Side-by-side grayscale pair with correspondence lines: green for model
/// inliers, red for orientation-consistent matches RANSAC rejected.
fn draw_matches(
    ref_img: &Image,
    sen_img: &Image,
    oriented: &[MatchPair],
    inliers: &[MatchPair],
    ref_points: &[[f64; 2]],
    sen_points: &[[f64; 2]],
) -> ::image::RgbImage {
    let w = (ref_img.width() + sen_img.width()) as u32;
    let h = ref_img.height().max(sen_img.height()) as u32;
    let mut canvas = ::image::RgbImage::new(w, h);
    for (img, x_off) in [(ref_img, 0usize), (sen_img, ref_img.width())] {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let g = quantize_u8(img.get(x, y));
                canvas.put_pixel((x + x_off) as u32, y as u32, ::image::Rgb([g, g, g]));
            }
        }
    }
    let x_off = ref_img.width() as f64;
    let inlier_keys: std::collections::HashSet<_> = inliers
        .iter()
        .map(|m| (m.ref_index, m.sen_index))
        .collect();
    for m in oriented {
        let color = if inlier_keys.contains(&(m.ref_index, m.sen_index)) {
            ::image::Rgb([0, 200, 0])
        } else {
            ::image::Rgb([220, 0, 0])
        };
        let a = ref_points[m.ref_index];
        let b = sen_points[m.sen_index];
        draw_line(&mut canvas, a[0], a[1], b[0] + x_off, b[1], color);
    }
    canvas
}

/// Simple DDA line rasterizer; endpoints outside the canvas are skipped
/// per-pixel.
fn draw_line(img: &mut ::image::RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, c: ::image::Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (x0 + t * (x1 - x0)).round();
        let y = (y0 + t * (y1 - y0)).round();
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

fn dump_levels(space: &NonlinearScaleSpace, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::UnwritablePath {
        path: dir.to_path_buf(),
        detail: e.to_string(),
    })?;
    for level in &space.levels {
        let name = format!("level_{}_{}.png", level.octave, level.sublevel);
        image::save_image(&level.image, dir.join(name))?;
    }
    Ok(())
}

fn dump_keypoints(feats: &[(KeyPoint, Descriptor)], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# x y sigma mu response o s lambda")?;
    for (kp, _) in feats {
        writeln!(
            file,
            "{:.6} {:.6} {:.6} {:.6} {:.6e} {} {} {:.6}",
            kp.x, kp.y, kp.sigma, kp.mu, kp.response, kp.octave, kp.sublevel, kp.lambda
        )?;
    }
    Ok(())
}

/// Binary dump: magic `AMPD`, little-endian u32 record count, then per
/// record 8 f64 keypoint fields (x, y, sigma, mu, response, octave,
/// sublevel, lambda) and 128 f32 descriptor components.
fn dump_descriptors(feats: &[(KeyPoint, Descriptor)], path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(4 + 4 + feats.len() * (8 * 8 + 128 * 4));
    buf.extend_from_slice(b"AMPD");
    buf.extend_from_slice(&(feats.len() as u32).to_le_bytes());
    for (kp, desc) in feats {
        for v in [
            kp.x,
            kp.y,
            kp.sigma,
            kp.mu,
            kp.response,
            kp.octave as f64,
            kp.sublevel as f64,
            kp.lambda,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &desc.values {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}
