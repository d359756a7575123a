//! Pipeline configuration: union of every stage's parameters plus output
//! options. Values come from three layers with increasing precedence:
//! built-in defaults, a plain-text `key = value` config file, then
//! command-line flags.

use std::path::{Path, PathBuf};

use crate::descriptor::DescriptorParams;
use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::matching::MatchParams;
use crate::scale_space::ScaleSpaceParams;
use crate::transform::ModelKind;

/// Every tunable knob of the registration pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scale_space: ScaleSpaceParams,
    pub detector: DetectorParams,
    pub descriptor: DescriptorParams,
    pub matching: MatchParams,
    pub model_kind: ModelKind,
    pub output_dir: PathBuf,
    /// Write per-level PNGs, keypoint lists and raw descriptor dumps.
    pub debug_dumps: bool,
    /// Literal-procedure mode: no ratio test, no descriptor clamping.
    pub strict_paper: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scale_space: ScaleSpaceParams::default(),
            detector: DetectorParams::default(),
            descriptor: DescriptorParams::default(),
            matching: MatchParams::default(),
            model_kind: ModelKind::Affine,
            output_dir: PathBuf::from("out"),
            debug_dumps: false,
            strict_paper: false,
        }
    }
}

impl PipelineConfig {
    /// Applies one `key = value` assignment. Unknown keys and unparsable
    /// values are configuration errors carrying the offending key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| Error::Config {
                key: key.to_string(),
                detail: format!("cannot parse {value:?}: {e}"),
            })
        }
        match key {
            "num_octaves" => self.scale_space.num_octaves = parse(key, value)?,
            "num_sublevels" => self.scale_space.num_sublevels = parse(key, value)?,
            "base_sigma" => self.scale_space.base_sigma = parse(key, value)?,
            "contrast_percentile" => self.scale_space.contrast_percentile = parse(key, value)?,
            "smoothing_sigma_for_gradient" => {
                self.scale_space.smoothing_sigma_for_gradient = parse(key, value)?
            }
            "aos_substeps" => self.scale_space.aos_substeps = parse(key, value)?,
            "response_threshold" => self.detector.response_threshold = parse(key, value)?,
            "offset" => self.detector.offset = parse(key, value)?,
            // The same region factor k sizes both detection neighborhoods
            // and description windows.
            "region_multiplier" => {
                let k: f64 = parse(key, value)?;
                self.detector.region_multiplier = k;
                self.descriptor.region_multiplier = k;
            }
            "max_keypoints" => self.detector.max_keypoints = parse(key, value)?,
            "combine_scale" => self.descriptor.combine_scale = parse(key, value)?,
            "min_region" => self.descriptor.min_region = parse(key, value)?,
            "clamp_components" => self.descriptor.clamp_components = parse(key, value)?,
            "bbf_max_checks" => self.matching.bbf_max_checks = parse(key, value)?,
            "bin_width" => self.matching.bin_width = parse(key, value)?,
            "include_adjacent_bins" => self.matching.include_adjacent_bins = parse(key, value)?,
            "ratio_threshold" => self.matching.ratio_threshold = parse(key, value)?,
            "ransac_threshold" => self.matching.ransac_threshold = parse(key, value)?,
            "ransac_iterations" => self.matching.ransac_iterations = parse(key, value)?,
            "ransac_seed" => self.matching.ransac_seed = parse(key, value)?,
            "model" | "model_kind" => self.model_kind = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "debug_dumps" => self.debug_dumps = parse(key, value)?,
            "strict_paper" => self.strict_paper = parse(key, value)?,
            _ => {
                return Err(Error::Config {
                    key: key.to_string(),
                    detail: "unknown key".to_string(),
                })
            }
        }
        Ok(())
    }

    /// Applies a config file of `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
            path: path.to_path_buf(),
            source: e,
        })?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: format!("{}:{}", path.display(), lineno + 1),
                detail: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Restores the literal published procedure: mutual nearest neighbors
    /// without a ratio test, and unclamped descriptor components.
    pub fn apply_strict_paper(&mut self) {
        self.strict_paper = true;
        self.matching.ratio_threshold = 1.0;
        self.descriptor.clamp_components = false;
    }

    /// Checks every stage's invariants; errors carry the failing key.
    pub fn validate(&self) -> Result<()> {
        self.scale_space.validate()?;
        self.detector.validate()?;
        self.descriptor.validate()?;
        self.matching.validate()?;
        Ok(())
    }
}
