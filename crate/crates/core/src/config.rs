//! Pipeline configuration, read from TOML. Every section and field is optional and
//! falls back to its default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blur_inference::{DEFAULT_DEPTH_BINS, DEFAULT_WAVELET_LEVELS, ESTIMATED_MAP_TOLERANCE};
use crate::blur_synth::ScheduleBounds;
use crate::error::{ensure_param, Error, Result};
use crate::flow_prop::{CompletionParams, DEFAULT_CONSISTENCY_THRESHOLD};
use crate::metrics::LossWeights;
use crate::mgst::MgstConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub levels: usize,
    pub depth_bins: usize,
    /// Pixels within this distance of the sharpest value count as in focus.
    pub tolerance: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_WAVELET_LEVELS,
            depth_bins: DEFAULT_DEPTH_BINS,
            tolerance: ESTIMATED_MAP_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub consistency_threshold: f64,
    /// Repeat propagation until a pass fills nothing, at most this many passes.
    pub max_passes: usize,
    pub completion: CompletionParams,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            consistency_threshold: DEFAULT_CONSISTENCY_THRESHOLD,
            max_passes: 1,
            completion: CompletionParams::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub frames: Option<PathBuf>,
    pub depth: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub weights: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub schedule: ScheduleBounds,
    pub estimate: EstimateConfig,
    pub propagation: PropagationConfig,
    pub transformer: MgstConfig,
    pub loss: LossWeights,
    pub paths: PathsConfig,
}


impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.jobs != Some(0), "jobs must be positive");
        self.schedule.validate()?;
        ensure_param!(self.estimate.levels >= 1, "at least one wavelet level is required");
        ensure_param!(self.estimate.depth_bins >= 1, "at least one depth bin is required");
        ensure_param!(
            (0.0..1.0).contains(&self.estimate.tolerance),
            "binarization tolerance must lie in [0, 1)"
        );
        ensure_param!(
            self.propagation.consistency_threshold > 0.0,
            "consistency threshold must be positive"
        );
        ensure_param!(self.propagation.max_passes >= 1, "at least one propagation pass is required");
        self.propagation.completion.validate()?;
        self.transformer.validate()?;
        self.loss.validate()
    }
}
