//! Acceptance gate: one test per contract-level criterion. Each test prints
//! a single `[acceptance] PASS` line on success; a failing criterion shows
//! up as a failing test with the panicking assertion.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ampiifd::descriptor::{
    assemble_piifd, build_histograms, main_orientation, sample_region, Descriptor,
    DescriptorParams, DESCRIPTOR_LEN, FOLDED_BINS, GRID_CELLS,
};
use ampiifd::detector::{detect, scale_factor, DetectorParams, KeyPoint};
use ampiifd::evaluation::{cmr, rmse};
use ampiifd::image::{gradient, save_image, Image};
use ampiifd::kdtree::DescriptorIndex;
use ampiifd::matching::{orientation_filter, ransac, MatchPair, MatchParams};
use ampiifd::scale_space::{
    aos_step, build_scale_space, conductivity_g3, conductivity_image, sigma_of_level,
    NonlinearScaleSpace, ScaleSpaceParams,
};
use ampiifd::synth::{blob_image, natural_image};
use ampiifd::transform::{apply, estimate, warp_image, ModelKind, TransformModel};
use ampiifd::PipelineConfig;

fn pass(name: &str) {
    println!("[acceptance] PASS - {name}");
}

// --- 1. Closed-form formula values pinned against independent arithmetic ---

#[test]
fn formula_constants_match_independent_values() {
    // Correct-match ratio: plain quotient.
    let r = cmr(346, 423).unwrap();
    assert!((r - 0.818).abs() < 5e-4, "cmr(346,423) = {r}");

    // RMSE of a single 3-4-5 residual is exactly 5.
    let e = rmse(&[([0.0, 0.0], [3.0, 4.0])]).unwrap();
    assert_eq!(e, 5.0, "rmse of a (3,4) residual must be exactly 5");

    // At grad_mag == k the conductivity is 1 - exp(-3.315), independent of k.
    let expected = 1.0 - (-3.315f64).exp();
    assert!((expected - 0.96366595142266).abs() < 1e-12);
    for k in [0.01, 0.7, 3.0] {
        let g = conductivity_g3(k, k).unwrap();
        assert!((g - expected).abs() < 1e-15, "g3(k,k) = {g} for k={k}");
    }

    // sigma(o=1, s=2) with sigma0 = 1.6, S = 4: 1.6 * 2^1.5.
    let params = ScaleSpaceParams::default();
    let sigma = sigma_of_level(1, 2, &params).unwrap();
    assert!((sigma - 4.52548).abs() < 1e-5, "sigma(1,2) = {sigma}");
    assert!((sigma - 1.6 * 2f64.powf(1.5)).abs() < 1e-12);

    // mu(o=2, s=1, lambda=0.5) with offset 1.6, S = 4: 1.6 * 2^2.375.
    let mu = scale_factor(2, 1, 0.5, 1.6, 4).unwrap();
    assert!((mu - 8.299773149766462).abs() < 1e-9, "mu(2,1,0.5) = {mu}");
    assert!((mu - 1.6 * 2f64.powf(2.375)).abs() < 1e-12);

    pass("formula constants (cmr, rmse, g3 conductivity, sigma schedule, scale factor)");
}

// --- 2. AOS step against a dense direct solve of the same semi-implicit system ---

/// Dense oracle for one 1-D implicit pass: solve (I - 2 tau A) u = rhs where
/// A discretizes d/dx (c du/dx) with half-point conductivities and zero-flux
/// boundaries, using a full LU factorization instead of the Thomas recurrence.
fn dense_line_solve(cond: &[f64], rhs: &[f64], tau: f64) -> Vec<f64> {
    let n = rhs.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    for i in 0..n - 1 {
        let half = 0.5 * (cond[i] + cond[i + 1]);
        m[(i, i)] += 2.0 * tau * half;
        m[(i + 1, i + 1)] += 2.0 * tau * half;
        m[(i, i + 1)] -= 2.0 * tau * half;
        m[(i + 1, i)] -= 2.0 * tau * half;
    }
    let b = DVector::from_column_slice(rhs);
    let u = m.lu().solve(&b).expect("dense tridiagonal system is SPD");
    u.as_slice().to_vec()
}

fn dense_aos_step(img: &Image, cond: &Image, tau: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = Image::zeros(w, h);
    // Row passes.
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let u = dense_line_solve(cond.row(y), img.row(y), tau);
        rows[y * w..(y + 1) * w].copy_from_slice(&u);
    }
    // Column passes.
    let mut cols = vec![0.0; w * h];
    for x in 0..w {
        let c: Vec<f64> = (0..h).map(|y| cond.get(x, y)).collect();
        let r: Vec<f64> = (0..h).map(|y| img.get(x, y)).collect();
        let u = dense_line_solve(&c, &r, tau);
        for y in 0..h {
            cols[y * w + x] = u[y];
        }
    }
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, 0.5 * (rows[y * w + x] + cols[y * w + x]));
        }
    }
    out
}

#[test]
fn aos_step_matches_dense_direct_solver() {
    let img = natural_image(25, 25, 7);
    let grad = gradient(&img).unwrap();
    let cond = conductivity_image(&grad, 0.1).unwrap();
    for tau in [0.25, 2.0, 10.0] {
        let fast = aos_step(&img, &cond, tau).unwrap();
        let oracle = dense_aos_step(&img, &cond, tau);
        let mut max_err = 0.0f64;
        for (a, b) in fast.data().iter().zip(oracle.data()) {
            max_err = max_err.max((a - b).abs());
        }
        assert!(max_err <= 1e-10, "tau={tau}: max per-pixel error {max_err:.3e}");

        // Zero-flux boundaries conserve total intensity.
        let mass_in: f64 = img.data().iter().sum();
        let mass_out: f64 = fast.data().iter().sum();
        let rel = ((mass_out - mass_in) / mass_in).abs();
        assert!(rel <= 1e-8, "tau={tau}: relative mass drift {rel:.3e}");
    }
    pass("AOS diffusion step matches dense LU oracle (<=1e-10/px) and conserves mass");
}

// --- 3. BBF search is exact once the check budget covers every leaf ---

fn random_unit_descriptor(rng: &mut ChaCha8Rng) -> Descriptor {
    let mut values: Vec<f64> = (0..DESCRIPTOR_LEN).map(|_| rng.gen::<f64>()).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    Descriptor { values }
}

#[test]
fn bbf_is_exact_when_checks_cover_all_leaves() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let data: Vec<Descriptor> = (0..500).map(|_| random_unit_descriptor(&mut rng)).collect();
    let queries: Vec<Descriptor> = (0..100).map(|_| random_unit_descriptor(&mut rng)).collect();

    let index = DescriptorIndex::build(&data).unwrap();
    let budget = index.leaf_count();

    for q in &queries {
        let (best, _) = index.bbf_query(&q.values, budget);
        // Exhaustive nearest neighbor.
        let (mut exact_idx, mut exact_dist) = (usize::MAX, f64::INFINITY);
        for (i, d) in data.iter().enumerate() {
            let dist = q.distance(d);
            if dist < exact_dist {
                exact_dist = dist;
                exact_idx = i;
            }
        }
        assert_eq!(best.index, exact_idx, "BBF nearest differs from exhaustive");
        assert!((best.distance - exact_dist).abs() < 1e-12);
    }
    pass("BBF equals exhaustive nearest neighbor when max_checks covers every leaf");
}

// --- 4. Descriptor invariances ---

fn keypoints_with_space(
    img: &Image,
) -> (NonlinearScaleSpace, Vec<KeyPoint>) {
    let space = build_scale_space(img, &ScaleSpaceParams::default()).unwrap();
    let kps = detect(&space, &DetectorParams::default()).unwrap();
    (space, kps)
}

fn describe_fixed(
    space: &NonlinearScaleSpace,
    kp: &KeyPoint,
    orientation: f64,
    params: &DescriptorParams,
) -> Option<Descriptor> {
    let level = space
        .levels
        .iter()
        .find(|l| l.octave == kp.octave && l.sublevel == kp.sublevel)
        .unwrap();
    let (samples, side) = sample_region(level, kp, orientation, params)?;
    assemble_piifd(&build_histograms(&samples, side), params)
}

#[test]
fn descriptors_are_unit_norm() {
    let img = natural_image(256, 256, 11);
    let (space, kps) = keypoints_with_space(&img);
    assert!(kps.len() >= 20, "expected a rich keypoint set, got {}", kps.len());
    let described =
        ampiifd::descriptor::describe(&space, &kps, &DescriptorParams::default()).unwrap();
    assert!(!described.is_empty());
    for (_, d) in &described {
        let norm = d.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-9, "descriptor norm {norm}");
    }
    pass("every descriptor is unit-norm within 1e-9");
}

#[test]
fn descriptors_are_invariant_to_intensity_inversion() {
    let img = natural_image(256, 256, 11);
    let mut inv = img.clone();
    for v in inv.data_mut() {
        *v = 1.0 - *v;
    }

    let (space, kps) = keypoints_with_space(&img);
    let inv_space = build_scale_space(&inv, &ScaleSpaceParams::default()).unwrap();
    let params = DescriptorParams::default();

    let mut compared = 0usize;
    for kp in &kps {
        let level = space
            .levels
            .iter()
            .find(|l| l.octave == kp.octave && l.sublevel == kp.sublevel)
            .unwrap();
        // Fix the orientation from the original image so the comparison
        // isolates the descriptor itself.
        let Some(theta) = main_orientation(level, kp, &params) else {
            continue;
        };
        let (Some(a), Some(b)) = (
            describe_fixed(&space, kp, theta, &params),
            describe_fixed(&inv_space, kp, theta, &params),
        ) else {
            continue;
        };
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-6, "inversion mismatch: {x} vs {y}");
        }
        compared += 1;
    }
    assert!(compared >= 20, "only {compared} descriptors compared");
    pass("descriptors under intensity inversion agree within 1e-6 componentwise");
}

#[test]
fn folded_histograms_are_bitwise_invariant_to_gradient_reversal() {
    let img = natural_image(256, 256, 11);
    let (space, kps) = keypoints_with_space(&img);
    let params = DescriptorParams::default();

    let mut compared = 0usize;
    for kp in &kps {
        let level = space
            .levels
            .iter()
            .find(|l| l.octave == kp.octave && l.sublevel == kp.sublevel)
            .unwrap();
        let Some(theta) = main_orientation(level, kp, &params) else {
            continue;
        };
        // Exact 180-degree gradient reversal: IEEE negation is bitwise exact.
        let mut reversed = level.clone();
        for v in reversed.grad.gx.data_mut() {
            *v = -*v;
        }
        for v in reversed.grad.gy.data_mut() {
            *v = -*v;
        }
        let (Some((s_a, side_a)), Some((s_b, side_b))) = (
            sample_region(level, kp, theta, &params),
            sample_region(&reversed, kp, theta, &params),
        ) else {
            continue;
        };
        assert_eq!(side_a, side_b);
        let ga = build_histograms(&s_a, side_a);
        let gb = build_histograms(&s_b, side_b);
        for i in 0..GRID_CELLS {
            for j in 0..GRID_CELLS {
                for b in 0..FOLDED_BINS {
                    assert_eq!(
                        ga.cells[i][j][b].to_bits(),
                        gb.cells[i][j][b].to_bits(),
                        "cell ({i},{j}) bin {b} differs bitwise"
                    );
                }
            }
        }
        compared += 1;
    }
    assert!(compared >= 20, "only {compared} keypoints compared");
    pass("folded orientation histograms are bitwise unchanged under gradient reversal");
}

#[test]
fn descriptors_follow_a_45_degree_rotation() {
    let img = natural_image(256, 256, 11);
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let angle = 45f64.to_radians();
    let (c, s) = (angle.cos(), angle.sin());
    // Rotation about the image center, original -> rotated frame.
    let rot = TransformModel {
        kind: ModelKind::Similarity,
        matrix: Matrix3::new(
            c,
            -s,
            cx - c * cx + s * cy,
            s,
            c,
            cy - s * cx - c * cy,
            0.0,
            0.0,
            1.0,
        ),
    };
    let rotated = warp_image(&img, &rot, img.width(), img.height()).unwrap();

    let params = DescriptorParams::default();
    let (_, kps_a) = keypoints_with_space(&img);
    let space_a = build_scale_space(&img, &ScaleSpaceParams::default()).unwrap();
    let space_b = build_scale_space(&rotated, &ScaleSpaceParams::default()).unwrap();
    let kps_b = detect(&space_b, &DetectorParams::default()).unwrap();

    let desc_a = ampiifd::descriptor::describe(&space_a, &kps_a, &params).unwrap();
    let desc_b = ampiifd::descriptor::describe(&space_b, &kps_b, &params).unwrap();

    // Pair keypoints through the known rotation. A pair counts as the same
    // feature when it reappears within 1 px at a compatible scale, and its
    // descriptor support stays inside the circle that survives the rotation
    // crop (support half-diagonal ~ 3 * mu for a 6*mu region side).
    let inscribed = 0.5 * (w.min(h) - 1.0);
    let mut total = 0usize;
    let mut good = 0usize;
    for (ka, da) in &desc_a {
        let r = ((ka.x - cx).powi(2) + (ka.y - cy).powi(2)).sqrt();
        if r + 3.0 * ka.mu > inscribed {
            continue;
        }
        let p = apply(&rot, [ka.x, ka.y]).unwrap();
        let mut best: Option<(f64, &KeyPoint, &Descriptor)> = None;
        for (kb, db) in &desc_b {
            let d = ((kb.x - p[0]).powi(2) + (kb.y - p[1]).powi(2)).sqrt();
            let scale_ratio = kb.mu / ka.mu;
            if d < 1.0 && (0.8..=1.25).contains(&scale_ratio) {
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, kb, db));
                }
            }
        }
        let Some((_, kb, db)) = best else { continue };
        total += 1;

        // Orientation is defined modulo a half turn; the shift must be 45
        // degrees up to that ambiguity. Resampling plus the nonlinear
        // evolution perturbs the averaged-squared-gradient orientation by a
        // few degrees, so the gate is 10 degrees.
        let shift = (kb.orientation - ka.orientation).rem_euclid(PI);
        let target = angle.rem_euclid(PI);
        let err = (shift - target)
            .abs()
            .min((shift + PI - target).abs())
            .min((shift - PI - target).abs());
        let ori_ok = err.to_degrees() <= 10.0;
        let cos_ok = da.cosine_similarity(db) > 0.9;
        if ori_ok && cos_ok {
            good += 1;
        } else {
            eprintln!(
                "pair at ({:.1},{:.1}): shift error {:.1} deg, cos {:.3}",
                ka.x,
                ka.y,
                err.to_degrees(),
                da.cosine_similarity(db)
            );
        }
    }
    assert!(total >= 30, "only {total} co-detected pairs");
    let frac = good as f64 / total as f64;
    assert!(
        frac >= 0.8,
        "only {good}/{total} pairs survive the 45-degree rotation check"
    );
    pass("45-degree rotation: orientation shifts ~45 deg (+-10) and descriptor cosine >0.9 for >=80% of co-detected pairs");
}

// --- 5. Orientation-difference filter keeps exactly the modal bin(s) ---

#[test]
fn orientation_filter_keeps_modal_and_adjacent_bins_exactly() {
    let mut matches = Vec::new();
    // 20 inliers spread over [29.2, 30.8] degrees (straddling a bin edge),
    // 3 outliers far away.
    for i in 0..20 {
        matches.push(MatchPair {
            ref_index: i,
            sen_index: i,
            distance: 0.1,
            delta_phi: 29.2 + 1.6 * (i as f64) / 19.0,
        });
    }
    for (i, phi) in [100.0, 200.0, 300.0].iter().enumerate() {
        matches.push(MatchPair {
            ref_index: 20 + i,
            sen_index: 20 + i,
            distance: 0.1,
            delta_phi: *phi,
        });
    }
    let params = MatchParams::default();
    let kept = orientation_filter(&matches, &params).unwrap();
    let kept_refs: Vec<usize> = kept.iter().map(|m| m.ref_index).collect();
    assert_eq!(kept_refs, (0..20).collect::<Vec<_>>(), "kept set must be exactly the 20 inliers");
    pass("orientation filter keeps exactly the modal-bin inliers and drops all outliers");
}

// --- 6. RANSAC plant-and-recover ---

#[test]
fn ransac_recovers_planted_affine_model_exactly_and_deterministically() {
    let truth = Matrix3::new(1.1, -0.2, 5.0, 0.15, 0.95, -3.0, 0.0, 0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let n = 100;
    let n_inliers = 60;
    let mut ref_points = Vec::with_capacity(n);
    let mut sen_points = Vec::with_capacity(n);
    let mut matches = Vec::with_capacity(n);
    for i in 0..n {
        let sx = rng.gen_range(0.0..500.0);
        let sy = rng.gen_range(0.0..500.0);
        let rx = truth[(0, 0)] * sx + truth[(0, 1)] * sy + truth[(0, 2)];
        let ry = truth[(1, 0)] * sx + truth[(1, 1)] * sy + truth[(1, 2)];
        let (rx, ry) = if i < n_inliers {
            // Inliers: well inside the 3 px threshold.
            (rx + rng.gen_range(-0.1..0.1), ry + rng.gen_range(-0.1..0.1))
        } else {
            // Outliers: at least 30 px off in a random direction.
            let ang = rng.gen_range(0.0..2.0 * PI);
            let d = rng.gen_range(30.0..100.0);
            (rx + d * ang.cos(), ry + d * ang.sin())
        };
        sen_points.push([sx, sy]);
        ref_points.push([rx, ry]);
        matches.push(MatchPair {
            ref_index: i,
            sen_index: i,
            distance: 0.1,
            delta_phi: 0.0,
        });
    }

    let params = MatchParams::default();
    let (inliers, model) =
        ransac(&matches, &ref_points, &sen_points, ModelKind::Affine, &params).unwrap();
    let inlier_set: Vec<usize> = inliers.iter().map(|m| m.ref_index).collect();
    assert_eq!(
        inlier_set,
        (0..n_inliers).collect::<Vec<_>>(),
        "recovered inlier set differs from the planted one"
    );

    // The consensus model must equal the least-squares refit on the true
    // inlier correspondences.
    let true_pairs: Vec<_> = (0..n_inliers)
        .map(|i| (sen_points[i], ref_points[i]))
        .collect();
    let refit = estimate(ModelKind::Affine, &true_pairs).unwrap();
    for r in 0..3 {
        for c in 0..3 {
            assert!(
                (model.matrix[(r, c)] - refit.matrix[(r, c)]).abs() <= 1e-6,
                "matrix ({r},{c}): {} vs {}",
                model.matrix[(r, c)],
                refit.matrix[(r, c)]
            );
        }
    }

    // Determinism: a second run reproduces the model bit for bit.
    let (inliers2, model2) =
        ransac(&matches, &ref_points, &sen_points, ModelKind::Affine, &params).unwrap();
    assert_eq!(inliers.len(), inliers2.len());
    for r in 0..3 {
        for c in 0..3 {
            assert_eq!(
                model.matrix[(r, c)].to_bits(),
                model2.matrix[(r, c)].to_bits(),
                "RANSAC output is not deterministic"
            );
        }
    }
    pass("RANSAC recovers the planted affine inlier set exactly, matches the LS refit, and is deterministic");
}

// --- 7. End-to-end registration on a known similarity warp ---

fn report_matrix(report: &ampiifd::RegistrationReport) -> Matrix3<f64> {
    Matrix3::from_row_slice(&report.matrix)
}

fn mean_corner_error(estimated: &Matrix3<f64>, truth: &TransformModel, w: f64, h: f64) -> f64 {
    let est = TransformModel {
        kind: ModelKind::Projective,
        matrix: *estimated,
    };
    let corners = [[0.0, 0.0], [w - 1.0, 0.0], [0.0, h - 1.0], [w - 1.0, h - 1.0]];
    let mut sum = 0.0;
    for p in corners {
        let a = apply(&est, p).unwrap();
        let b = apply(truth, p).unwrap();
        sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    }
    sum / corners.len() as f64
}

#[test]
fn end_to_end_registration_recovers_a_similarity_warp() {
    let size = 512usize;
    let reference = natural_image(size, size, 5);
    let (cx, cy) = ((size as f64 - 1.0) / 2.0, (size as f64 - 1.0) / 2.0);
    let angle = 30f64.to_radians();
    let scale = 1.3;
    let (c, s) = (scale * angle.cos(), scale * angle.sin());
    // True model mapping sensed coordinates onto reference coordinates,
    // rotating/scaling about the center plus a translation.
    let truth = TransformModel {
        kind: ModelKind::Similarity,
        matrix: Matrix3::new(
            c,
            -s,
            cx - c * cx + s * cy + 17.0,
            s,
            c,
            cy - s * cx - c * cy - 9.0,
            0.0,
            0.0,
            1.0,
        ),
    };
    // Sensed image: pull reference pixels through the forward model, which
    // is exactly warping with the inverse model.
    let sensed = warp_image(&reference, &truth.inverse().unwrap(), size, size).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ref_path = dir.path().join("ref.png");
    let sen_path = dir.path().join("sen.png");
    save_image(&reference, &ref_path).unwrap();
    save_image(&sensed, &sen_path).unwrap();

    let mut config = PipelineConfig::default();
    config.model_kind = ModelKind::Similarity;
    config.output_dir = dir.path().join("out");
    let report = ampiifd::run_register(&ref_path, &sen_path, None, &config).unwrap();

    assert!(!report.unreliable, "report flagged unreliable");
    let est = report_matrix(&report);
    let corner_err = mean_corner_error(&est, &truth, size as f64, size as f64);
    assert!(corner_err < 1.0, "mean corner error {corner_err:.3} px");
    // Inlier residuals spread up to the 3 px RANSAC threshold, so the
    // model-accuracy burden sits on the corner-error bound above; the RMSE
    // bound only guards against systematic drift.
    let rmse_px = report.rmse_px.expect("rmse must be reported");
    assert!(rmse_px < 2.0, "inlier RMSE {rmse_px:.3} px");

    // Same pair with the sensed intensities inverted: the descriptor is
    // intensity-direction blind, so registration must still succeed.
    let mut sensed_inv = sensed.clone();
    for v in sensed_inv.data_mut() {
        *v = 1.0 - *v;
    }
    let sen_inv_path = dir.path().join("sen_inv.png");
    save_image(&sensed_inv, &sen_inv_path).unwrap();
    config.output_dir = dir.path().join("out_inv");
    let report_inv = ampiifd::run_register(&ref_path, &sen_inv_path, None, &config).unwrap();
    let est_inv = report_matrix(&report_inv);
    let corner_err_inv = mean_corner_error(&est_inv, &truth, size as f64, size as f64);
    assert!(
        corner_err_inv < 2.0,
        "inverted pair: mean corner error {corner_err_inv:.3} px"
    );

    pass("end-to-end similarity registration: <1 px corner error, <2 px inlier RMSE, and <2 px with inverted intensities");
}

// --- 8. Scale covariance of the detector ---

#[test]
fn detected_scale_factors_track_a_doubled_pattern() {
    // A sparse high-contrast blob grid barely diffuses under the
    // edge-preserving conductivity at the default contrast percentile, so
    // this geometry test raises the percentile into the diffusive regime.
    let ss_params = ScaleSpaceParams {
        contrast_percentile: 0.9,
        ..ScaleSpaceParams::default()
    };
    let det_params = DetectorParams::default();

    let small = blob_image(256, 256, 3.0, 32);
    let large = blob_image(512, 512, 6.0, 64);

    let kps_small = detect(&build_scale_space(&small, &ss_params).unwrap(), &det_params).unwrap();
    let kps_large = detect(&build_scale_space(&large, &ss_params).unwrap(), &det_params).unwrap();
    assert!(!kps_small.is_empty() && !kps_large.is_empty());

    // Pair keypoints through the known 2x mapping and check the scale-factor
    // ratio.
    let mut total = 0usize;
    let mut good = 0usize;
    for ka in &kps_small {
        let target = [2.0 * ka.x, 2.0 * ka.y];
        let mut best: Option<(f64, &KeyPoint)> = None;
        for kb in &kps_large {
            let d = ((kb.x - target[0]).powi(2) + (kb.y - target[1]).powi(2)).sqrt();
            if d < 6.0 && best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, kb));
            }
        }
        let Some((_, kb)) = best else { continue };
        total += 1;
        let ratio = kb.mu / ka.mu;
        if (1.5..=2.5).contains(&ratio) {
            good += 1;
        }
    }
    assert!(total >= 10, "only {total} paired keypoints");
    let frac = good as f64 / total as f64;
    assert!(
        frac >= 0.7,
        "only {good}/{total} pairs show a ~2x scale-factor ratio"
    );
    pass("detector scale factors track a 2x pattern scaling for >=70% of paired keypoints");
}
