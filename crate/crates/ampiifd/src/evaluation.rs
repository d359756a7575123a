//! Registration quality metrics: correct matching rate `CMR = Nc / N`,
//! root-mean-square reprojection error, ground-truth ingestion and
//! correct-match classification.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matching::MatchPair;
use crate::transform::{self, ModelKind, TransformModel};

/// Ground truth: either a sensed-to-reference transform or control-point
/// pairs `(x_ref, y_ref, x_sen, y_sen)`.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    Model(TransformModel),
    Points(Vec<[f64; 4]>),
}

impl GroundTruth {
    /// The sensed-to-reference model; point-based truth is fit with a
    /// projective least squares first.
    pub fn to_model(&self) -> Result<TransformModel> {
        match self {
            GroundTruth::Model(m) => Ok(m.clone()),
            GroundTruth::Points(points) => {
                let pairs: Vec<transform::PointPair> = points
                    .iter()
                    .map(|[xr, yr, xs, ys]| ([*xs, *ys], [*xr, *yr]))
                    .collect();
                transform::estimate(ModelKind::Projective, &pairs)
            }
        }
    }
}

/// Summary of one registration run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RegistrationReport {
    pub n_keypoints_ref: usize,
    pub n_keypoints_sen: usize,
    pub n_initial: usize,
    pub n_oriented: usize,
    /// Established matches N (RANSAC inliers).
    pub n_ransac: usize,
    /// Correct matches Nc under the ground truth, when provided.
    pub n_correct: Option<usize>,
    pub cmr: Option<f64>,
    pub rmse_px: Option<f64>,
    pub model_kind: ModelKind,
    /// Row-major 3x3 transform entries.
    pub matrix: Vec<f64>,
    /// Fewer than 8 established matches: the model is statistically weak.
    pub unreliable: bool,
    pub stage_times_s: BTreeMap<String, f64>,
}

/// Counts matches whose sensed point, mapped through the ground truth, lands
/// within `tol` pixels of the matched reference point.
pub fn classify_correct(
    matches: &[MatchPair],
    ref_points: &[[f64; 2]],
    sen_points: &[[f64; 2]],
    gt: &GroundTruth,
    tol: f64,
) -> Result<usize> {
    let model = gt.to_model()?;
    let mut correct = 0usize;
    for m in matches {
        let mapped = match transform::apply(&model, sen_points[m.sen_index]) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let r = ref_points[m.ref_index];
        let err = ((mapped[0] - r[0]).powi(2) + (mapped[1] - r[1]).powi(2)).sqrt();
        if err <= tol {
            correct += 1;
        }
    }
    Ok(correct)
}

/// `CMR = Nc / N`; meaningless (an error) when no matches were established.
pub fn cmr(n_correct: usize, n_total: usize) -> Result<f64> {
    if n_total == 0 {
        return Err(Error::MeaninglessCmr);
    }
    Ok(n_correct as f64 / n_total as f64)
}

/// Root-mean-square distance over aligned point pairs.
pub fn rmse(pairs: &[([f64; 2], [f64; 2])]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("rmse pairs"));
    }
    let sum: f64 = pairs
        .iter()
        .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
        .sum();
    Ok((sum / pairs.len() as f64).sqrt())
}

/// Loads ground truth from a transform file (kind + nine entries) or a
/// control-point text file (`x_ref y_ref x_sen y_sen` per line, `#`
/// comments).
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        source: e,
    })?;
    if let Some(model) = transform::parse_transform(&text) {
        return Ok(GroundTruth::Model(model));
    }
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedGroundTruth {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", lineno + 1),
            })?;
        if fields.len() != 4 {
            return Err(Error::MalformedGroundTruth {
                path: path.to_path_buf(),
                detail: format!("line {}: expected 4 values, got {}", lineno + 1, fields.len()),
            });
        }
        points.push([fields[0], fields[1], fields[2], fields[3]]);
    }
    if points.len() < 4 {
        return Err(Error::MalformedGroundTruth {
            path: path.to_path_buf(),
            detail: format!("need at least 4 control points, got {}", points.len()),
        });
    }
    Ok(GroundTruth::Points(points))
}
