//! Correspondence pipeline: best-bin-first bilateral nearest-neighbor
//! matching, mismatch removal by the main-orientation-difference histogram
//! (5-degree bins over [0, 360)), and seeded RANSAC geometric filtering.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::descriptor::Descriptor;
use crate::detector::KeyPoint;
use crate::error::{Error, Result};
use crate::kdtree::DescriptorIndex;
use crate::transform::{self, ModelKind, PointPair, TransformModel};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchParams {
    pub bbf_max_checks: usize,
    /// Orientation-difference histogram bin width in degrees.
    pub bin_width: f64,
    pub include_adjacent_bins: bool,
    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    pub ransac_seed: u64,
    /// Nearest/second-nearest distance ratio cutoff; set to 1.0 (via
    /// strict-paper mode) to disable.
    pub ratio_threshold: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            bbf_max_checks: 200,
            bin_width: 5.0,
            include_adjacent_bins: true,
            ransac_threshold: 3.0,
            ransac_iterations: 2000,
            ransac_seed: 42,
            ratio_threshold: 0.9,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) || (360.0 / self.bin_width).fract() != 0.0 {
            return Err(Error::InvalidParameter {
                name: "bin_width",
                detail: "must divide 360".into(),
            });
        }
        if !(self.ransac_threshold > 0.0) {
            return Err(Error::InvalidParameter {
                name: "ransac_threshold",
                detail: "must be > 0".into(),
            });
        }
        if !(self.ratio_threshold > 0.0) {
            return Err(Error::InvalidParameter {
                name: "ratio_threshold",
                detail: "must be > 0".into(),
            });
        }
        if self.bbf_max_checks == 0 {
            return Err(Error::InvalidParameter {
                name: "bbf_max_checks",
                detail: "must be > 0".into(),
            });
        }
        Ok(())
    }
}

/// One correspondence: keypoint indices into the reference and sensed sets,
/// descriptor distance, and main-orientation difference in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub ref_index: usize,
    pub sen_index: usize,
    pub distance: f64,
    pub delta_phi: f64,
}

/// Builds the BBF index over a descriptor set.
pub fn build_index(descriptors: &[Descriptor]) -> Result<DescriptorIndex> {
    DescriptorIndex::build(descriptors)
}

/// Mutual-nearest-neighbor matching over two descriptor sets with the ratio
/// test. Returns `(ref_index, sen_index, distance)` triples.
pub fn mutual_nearest(
    ref_descs: &[Descriptor],
    sen_descs: &[Descriptor],
    params: &MatchParams,
) -> Result<Vec<(usize, usize, f64)>> {
    if ref_descs.is_empty() || sen_descs.is_empty() {
        return Err(Error::EmptyInput("descriptor set"));
    }
    let ref_index = build_index(ref_descs)?;
    let sen_index = build_index(sen_descs)?;

    // Nearest sensed descriptor for every reference descriptor, with the
    // forward ratio test.
    let forward: Vec<Option<(usize, f64)>> = {
        let query = |d: &Descriptor| {
            let (n, s) = sen_index.bbf_query(&d.values, params.bbf_max_checks);
            if let Some(second) = s {
                if second.distance > 0.0 && n.distance / second.distance > params.ratio_threshold {
                    return None;
                }
            }
            Some((n.index, n.distance))
        };
        #[cfg(feature = "parallel")]
        {
            ref_descs.par_iter().map(query).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            ref_descs.iter().map(query).collect()
        }
    };
    // Nearest reference descriptor for every sensed descriptor.
    let backward: Vec<usize> = {
        let query = |d: &Descriptor| ref_index.bbf_query(&d.values, params.bbf_max_checks).0.index;
        #[cfg(feature = "parallel")]
        {
            sen_descs.par_iter().map(query).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            sen_descs.iter().map(query).collect()
        }
    };

    let mut out = Vec::new();
    for (i, fwd) in forward.iter().enumerate() {
        if let Some((j, dist)) = fwd {
            if backward[*j] == i {
                out.push((i, *j, *dist));
            }
        }
    }
    Ok(out)
}

/// Initial correspondences by bilateral BBF matching; each kept pair records
/// the main-orientation difference `(phi_ref - phi_sen) mod 360` in degrees.
pub fn bilateral_match(
    ref_feats: &[(KeyPoint, Descriptor)],
    sen_feats: &[(KeyPoint, Descriptor)],
    params: &MatchParams,
) -> Result<Vec<MatchPair>> {
    params.validate()?;
    let ref_descs: Vec<Descriptor> = ref_feats.iter().map(|(_, d)| d.clone()).collect();
    let sen_descs: Vec<Descriptor> = sen_feats.iter().map(|(_, d)| d.clone()).collect();
    let mutual = mutual_nearest(&ref_descs, &sen_descs, params)?;
    Ok(mutual
        .into_iter()
        .map(|(i, j, distance)| MatchPair {
            ref_index: i,
            sen_index: j,
            distance,
            delta_phi: (ref_feats[i].0.orientation.to_degrees()
                - sen_feats[j].0.orientation.to_degrees())
            .rem_euclid(360.0),
        })
        .collect())
}

/// Keeps the matches whose orientation difference falls in the modal
/// histogram bin (plus the two circularly adjacent bins when configured).
/// Modal ties break toward the bin with smaller within-bin variance.
pub fn orientation_filter(matches: &[MatchPair], params: &MatchParams) -> Result<Vec<MatchPair>> {
    params.validate()?;
    if matches.is_empty() {
        return Err(Error::EmptyInput("match list"));
    }
    let nbins = (360.0 / params.bin_width) as usize;
    let bin_of = |m: &MatchPair| {
        ((m.delta_phi / params.bin_width).floor() as usize).min(nbins - 1)
    };
    let mut counts = vec![0usize; nbins];
    for m in matches {
        counts[bin_of(m)] += 1;
    }
    let max_count = *counts.iter().max().unwrap();
    let variance_of = |bin: usize| {
        let values: Vec<f64> = matches
            .iter()
            .filter(|m| bin_of(m) == bin)
            .map(|m| m.delta_phi)
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64
    };
    let modal = (0..nbins)
        .filter(|&b| counts[b] == max_count)
        .min_by(|&a, &b| {
            variance_of(a)
                .partial_cmp(&variance_of(b))
                .unwrap()
                .then(a.cmp(&b))
        })
        .unwrap();

    let mut kept_bins = vec![modal];
    if params.include_adjacent_bins {
        kept_bins.push((modal + nbins - 1) % nbins);
        kept_bins.push((modal + 1) % nbins);
    }
    Ok(matches
        .iter()
        .filter(|m| kept_bins.contains(&bin_of(m)))
        .copied()
        .collect())
}

/// Seeded RANSAC over the given model kind. `ref_points` / `sen_points` are
/// indexed by the match pair's keypoint indices; the model maps sensed
/// points onto reference points. Returns the consensus inliers and the
/// least-squares refit on them.
pub fn ransac(
    matches: &[MatchPair],
    ref_points: &[[f64; 2]],
    sen_points: &[[f64; 2]],
    kind: ModelKind,
    params: &MatchParams,
) -> Result<(Vec<MatchPair>, TransformModel)> {
    params.validate()?;
    let minimal = kind.minimal_pairs();
    if matches.len() < minimal {
        return Err(Error::TooFewMatches {
            needed: minimal,
            got: matches.len(),
        });
    }
    let pairs: Vec<PointPair> = matches
        .iter()
        .map(|m| (sen_points[m.sen_index], ref_points[m.ref_index]))
        .collect();

    let run_round = |round: usize| -> Option<(usize, f64)> {
        let model = round_model(&pairs, kind, params, round)?;
        let mut count = 0usize;
        let mut err_sum = 0.0;
        for pair in &pairs {
            if let Some(e) = reprojection_error(&model, pair) {
                if e < params.ransac_threshold {
                    count += 1;
                    err_sum += e;
                }
            }
        }
        if count == 0 {
            return None;
        }
        Some((count, err_sum / count as f64))
    };

    let results: Vec<Option<(usize, f64)>> = {
        #[cfg(feature = "parallel")]
        {
            (0..params.ransac_iterations)
                .into_par_iter()
                .map(run_round)
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..params.ransac_iterations).map(run_round).collect()
        }
    };

    // Deterministic reduction: best by inlier count, tie by lower mean
    // error, tie by round index.
    let mut best: Option<(usize, f64, usize)> = None;
    for (round, res) in results.iter().enumerate() {
        if let Some((count, mean_err)) = res {
            let better = match best {
                None => true,
                Some((bc, be, _)) => *count > bc || (*count == bc && *mean_err < be),
            };
            if better {
                best = Some((*count, *mean_err, round));
            }
        }
    }
    let (best_count, _, best_round) = best.ok_or(Error::NoConsensus)?;
    if best_count < minimal {
        return Err(Error::NoConsensus);
    }

    let best_model = round_model(&pairs, kind, params, best_round).ok_or(Error::NoConsensus)?;
    let mut inlier_matches = Vec::with_capacity(best_count);
    let mut inlier_pairs = Vec::with_capacity(best_count);
    for (m, pair) in matches.iter().zip(&pairs) {
        if let Some(e) = reprojection_error(&best_model, pair) {
            if e < params.ransac_threshold {
                inlier_matches.push(*m);
                inlier_pairs.push(*pair);
            }
        }
    }
    let refit = transform::estimate(kind, &inlier_pairs)?;
    Ok((inlier_matches, refit))
}

fn round_model(
    pairs: &[PointPair],
    kind: ModelKind,
    params: &MatchParams,
    round: usize,
) -> Option<TransformModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.ransac_seed.wrapping_add(round as u64));
    let sample: Vec<PointPair> =
        rand::seq::index::sample(&mut rng, pairs.len(), kind.minimal_pairs())
            .iter()
            .map(|i| pairs[i])
            .collect();
    transform::estimate(kind, &sample).ok()
}

fn reprojection_error(model: &TransformModel, pair: &PointPair) -> Option<f64> {
    let (src, dst) = pair;
    let mapped = transform::apply(model, *src).ok()?;
    Some(((mapped[0] - dst[0]).powi(2) + (mapped[1] - dst[1]).powi(2)).sqrt())
}
