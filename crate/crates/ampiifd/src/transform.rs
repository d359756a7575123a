//! Planar transform estimation and application: closed-form similarity,
//! normal-equation affine and normalized-DLT projective least squares, plus
//! inverse-mapped warping and the two mosaic renderings.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::image::{bilinear_sample_unchecked, Image};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Similarity,
    Affine,
    Projective,
}

impl ModelKind {
    /// Minimal number of point pairs needed for estimation.
    pub fn minimal_pairs(self) -> usize {
        match self {
            ModelKind::Similarity => 2,
            ModelKind::Affine => 3,
            ModelKind::Projective => 4,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Similarity => "similarity",
            ModelKind::Affine => "affine",
            ModelKind::Projective => "projective",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(ModelKind::Similarity),
            "affine" => Ok(ModelKind::Affine),
            "projective" => Ok(ModelKind::Projective),
            other => Err(Error::Config {
                key: "model".into(),
                detail: format!("unknown transform kind `{other}`"),
            }),
        }
    }
}

/// Homogeneous 3x3 planar transform of a declared kind. Similarity and
/// affine keep an exact (0, 0, 1) bottom row; projective is scaled so the
/// bottom-right entry is 1 when nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformModel {
    pub kind: ModelKind,
    pub matrix: Matrix3<f64>,
}

impl TransformModel {
    pub fn identity(kind: ModelKind) -> TransformModel {
        TransformModel {
            kind,
            matrix: Matrix3::identity(),
        }
    }

    pub fn inverse(&self) -> Result<TransformModel> {
        let inv = self
            .matrix
            .try_inverse()
            .ok_or(Error::NonInvertibleTransform)?;
        Ok(TransformModel {
            kind: self.kind,
            matrix: normalize_matrix(self.kind, inv),
        })
    }
}

fn normalize_matrix(kind: ModelKind, m: Matrix3<f64>) -> Matrix3<f64> {
    match kind {
        ModelKind::Projective => {
            if m[(2, 2)].abs() > 1e-12 {
                m / m[(2, 2)]
            } else {
                m
            }
        }
        _ => m,
    }
}

/// Point correspondence `(source, destination)`: the model maps source
/// points onto destination points.
pub type PointPair = ([f64; 2], [f64; 2]);

/// Least-squares estimation of the given model kind from correspondences.
pub fn estimate(kind: ModelKind, pairs: &[PointPair]) -> Result<TransformModel> {
    let needed = kind.minimal_pairs();
    if pairs.len() < needed {
        return Err(Error::TooFewMatches {
            needed,
            got: pairs.len(),
        });
    }
    let matrix = match kind {
        ModelKind::Similarity => estimate_similarity(pairs)?,
        ModelKind::Affine => estimate_affine(pairs)?,
        ModelKind::Projective => estimate_projective(pairs)?,
    };
    if matrix.determinant().abs() <= 1e-12 {
        return Err(Error::DegenerateConfiguration);
    }
    Ok(TransformModel {
        kind,
        matrix: normalize_matrix(kind, matrix),
    })
}

/// Closed-form least squares over (a, b, tx, ty) with
/// `x' = a x - b y + tx`, `y' = b x + a y + ty`.
fn estimate_similarity(pairs: &[PointPair]) -> Result<Matrix3<f64>> {
    let mut ata = Matrix4::<f64>::zeros();
    let mut atb = Vector4::<f64>::zeros();
    for ([x, y], [u, v]) in pairs {
        let rows = [
            (Vector4::new(*x, -*y, 1.0, 0.0), *u),
            (Vector4::new(*y, *x, 0.0, 1.0), *v),
        ];
        for (row, rhs) in rows {
            ata += row * row.transpose();
            atb += row * rhs;
        }
    }
    let theta = ata
        .lu()
        .solve(&atb)
        .ok_or(Error::DegenerateConfiguration)?;
    let (a, b, tx, ty) = (theta[0], theta[1], theta[2], theta[3]);
    Ok(Matrix3::new(a, -b, tx, b, a, ty, 0.0, 0.0, 1.0))
}

/// Normal-equations least squares on the 6 affine parameters.
fn estimate_affine(pairs: &[PointPair]) -> Result<Matrix3<f64>> {
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb_x = Vector3::<f64>::zeros();
    let mut atb_y = Vector3::<f64>::zeros();
    for ([x, y], [u, v]) in pairs {
        let row = Vector3::new(*x, *y, 1.0);
        ata += row * row.transpose();
        atb_x += row * *u;
        atb_y += row * *v;
    }
    let lu = ata.lu();
    let px = lu.solve(&atb_x).ok_or(Error::DegenerateConfiguration)?;
    let py = lu.solve(&atb_y).ok_or(Error::DegenerateConfiguration)?;
    Ok(Matrix3::new(
        px[0], px[1], px[2], py[0], py[1], py[2], 0.0, 0.0, 1.0,
    ))
}

/// Hartley normalization: translate the centroid to the origin and scale the
/// mean distance to sqrt(2).
fn hartley_normalize(points: impl Iterator<Item = [f64; 2]> + Clone) -> Result<Matrix3<f64>> {
    let mut n = 0usize;
    let (mut cx, mut cy) = (0.0, 0.0);
    for [x, y] in points.clone() {
        cx += x;
        cy += y;
        n += 1;
    }
    let n_f = n as f64;
    cx /= n_f;
    cy /= n_f;
    let mut mean_dist = 0.0;
    for [x, y] in points {
        mean_dist += ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
    }
    mean_dist /= n_f;
    if mean_dist <= 1e-12 {
        return Err(Error::DegenerateConfiguration);
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Normalized DLT: smallest-singular-vector solution of the stacked 2n x 9
/// system on Hartley-normalized points, then denormalized.
fn estimate_projective(pairs: &[PointPair]) -> Result<Matrix3<f64>> {
    let t_src = hartley_normalize(pairs.iter().map(|(s, _)| *s))?;
    let t_dst = hartley_normalize(pairs.iter().map(|(_, d)| *d))?;
    let norm = |t: &Matrix3<f64>, p: &[f64; 2]| {
        let q = t * Vector3::new(p[0], p[1], 1.0);
        [q[0] / q[2], q[1] / q[2]]
    };

    let n = pairs.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for (i, (src, dst)) in pairs.iter().enumerate() {
        let [x, y] = norm(&t_src, src);
        let [u, v] = norm(&t_dst, dst);
        let r0 = 2 * i;
        let r1 = 2 * i + 1;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }
    // Null vector of A via the smallest eigenpair of the 9x9 Gram matrix
    // (a thin SVD of A would drop the null space when 2n < 9).
    let gram = a.transpose() * &a;
    let eig = gram.symmetric_eigen();
    let (min_idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .ok_or(Error::DegenerateConfiguration)?;
    let h_vec: DVector<f64> = eig.eigenvectors.column(min_idx).into_owned();
    let h_norm = Matrix3::from_row_slice(h_vec.as_slice());
    let t_dst_inv = t_dst.try_inverse().ok_or(Error::DegenerateConfiguration)?;
    Ok(t_dst_inv * h_norm * t_src)
}

/// Homogeneous multiply and dehomogenize.
pub fn apply(model: &TransformModel, point: [f64; 2]) -> Result<[f64; 2]> {
    let q = model.matrix * Vector3::new(point[0], point[1], 1.0);
    if q[2].abs() < 1e-12 {
        return Err(Error::PointAtInfinity);
    }
    Ok([q[0] / q[2], q[1] / q[2]])
}

/// Inverse-mapped warp of the sensed image into the reference frame; source
/// positions outside the sensed frame produce 0.
pub fn warp_image(
    sensed: &Image,
    model: &TransformModel,
    out_width: usize,
    out_height: usize,
) -> Result<Image> {
    let inv = model
        .matrix
        .try_inverse()
        .ok_or(Error::NonInvertibleTransform)?;
    let (sw, sh) = (sensed.width() as f64 - 1.0, sensed.height() as f64 - 1.0);
    let mut out = Image::zeros(out_width, out_height);
    let warp_row = |y: usize, row: &mut [f64]| {
        for (x, px) in row.iter_mut().enumerate() {
            let q = inv * Vector3::new(x as f64, y as f64, 1.0);
            if q[2].abs() < 1e-12 {
                continue;
            }
            let sx = q[0] / q[2];
            let sy = q[1] / q[2];
            if sx >= 0.0 && sx <= sw && sy >= 0.0 && sy <= sh {
                *px = bilinear_sample_unchecked(sensed, sx, sy);
            }
        }
    };
    #[cfg(feature = "parallel")]
    out.data_mut()
        .par_chunks_mut(out_width)
        .enumerate()
        .for_each(|(y, row)| warp_row(y, row));
    #[cfg(not(feature = "parallel"))]
    for (y, row) in out.data_mut().chunks_mut(out_width).enumerate() {
        warp_row(y, row);
    }
    Ok(out)
}

/// Alternating tiles from the reference and warped images.
pub fn checkerboard_mosaic(reference: &Image, warped: &Image, tile: usize) -> Result<Image> {
    if reference.width() != warped.width() || reference.height() != warped.height() {
        return Err(Error::DimensionMismatch(
            reference.width(),
            reference.height(),
            warped.width(),
            warped.height(),
        ));
    }
    let tile = tile.max(1);
    Ok(Image::from_fn(
        reference.width(),
        reference.height(),
        |x, y| {
            if (x / tile + y / tile) % 2 == 0 {
                reference.get(x, y)
            } else {
                warped.get(x, y)
            }
        },
    ))
}

/// Red = reference, green = warped, blue = 0. Registered regions render
/// yellow-gray; misregistration shows as red/green fringes.
pub fn rgb_overlay(reference: &Image, warped: &Image) -> Result<image::RgbImage> {
    if reference.width() != warped.width() || reference.height() != warped.height() {
        return Err(Error::DimensionMismatch(
            reference.width(),
            reference.height(),
            warped.width(),
            warped.height(),
        ));
    }
    Ok(image::RgbImage::from_fn(
        reference.width() as u32,
        reference.height() as u32,
        |x, y| {
            let r = crate::image::quantize_u8(reference.get(x as usize, y as usize));
            let g = crate::image::quantize_u8(warped.get(x as usize, y as usize));
            image::Rgb([r, g, 0])
        },
    ))
}

/// Writes the transform as two text lines: the kind, then the nine matrix
/// entries row-major in full double precision.
pub fn write_transform(model: &TransformModel, path: impl AsRef<Path>) -> Result<()> {
    let mut entries = Vec::with_capacity(9);
    for r in 0..3 {
        for c in 0..3 {
            entries.push(format!("{:.17e}", model.matrix[(r, c)]));
        }
    }
    let text = format!("{}\n{}\n", model.kind, entries.join(" "));
    std::fs::write(path.as_ref(), text).map_err(|e| Error::UnwritablePath {
        path: path.as_ref().to_path_buf(),
        detail: e.to_string(),
    })
}

pub fn read_transform(path: impl AsRef<Path>) -> Result<TransformModel> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::UnreadableFile {
        path: path.as_ref().to_path_buf(),
        source: e,
    })?;
    parse_transform(&text).ok_or_else(|| Error::MalformedGroundTruth {
        path: path.as_ref().to_path_buf(),
        detail: "expected kind line and nine matrix entries".into(),
    })
}

pub(crate) fn parse_transform(text: &str) -> Option<TransformModel> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let kind: ModelKind = lines.next()?.trim().parse().ok()?;
    let entries: Vec<f64> = lines
        .next()?
        .split_whitespace()
        .map(|t| t.parse().ok())
        .collect::<Option<Vec<f64>>>()?;
    if entries.len() != 9 {
        return None;
    }
    Some(TransformModel {
        kind,
        matrix: Matrix3::from_row_slice(&entries),
    })
}
