//! On-disk layout of a synthesized sequence and its JSON manifest.
//!
//! ```text
//! root/
//!   manifest.json
//!   gt/ depth/ blurred/ blur_maps/ masks/     full resolution
//!   lr/gt/ lr/depth/ lr/blurred/ ...          reduced resolution
//! ```
//!
//! Paths in the manifest are relative to the root and use `/` separators.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blur_synth::{Augmentation, FocusSchedule, SynthesizedDataset, DEPTH_MAX, DEPTH_MIN};
use crate::error::{Error, Result};
use crate::image::{BlurMapSequence, DepthSequence, FrameSequence, MaskSequence};
use crate::io::{
    read_blur_map, read_depth, read_frame, read_mask, save_sequence, write_atomic, write_blur_map, write_depth,
    write_frame, write_mask, BlurMapEncoding,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlurModelInfo {
    pub ramp: String,
    pub snapping: String,
    pub depth_range: [f64; 2],
    pub compositing: String,
    pub blur_map_png: String,
}

impl Default for BlurModelInfo {
    fn default() -> Self {
        Self {
            ramp: "linear from the focal band edge to the farthest reachable depth".into(),
            snapping: "nearest odd size, sizes below 3 are in focus".into(),
            depth_range: [DEPTH_MIN, DEPTH_MAX],
            compositing: "far to near layers, normalized Gaussian per layer".into(),
            blur_map_png: "8-bit, kernel size times 20".into(),
        }
    }
}

/// Relative paths of one resolution level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitPaths {
    pub width: usize,
    pub height: usize,
    pub ground_truth: Vec<String>,
    pub depth: Vec<String>,
    pub blurred: Vec<String>,
    pub blur_maps: Vec<String>,
    pub masks: Vec<String>,
}

impl SplitPaths {
    fn all(&self) -> impl Iterator<Item = &String> {
        self.ground_truth
            .iter()
            .chain(&self.depth)
            .chain(&self.blurred)
            .chain(&self.blur_maps)
            .chain(&self.masks)
    }

    fn lengths(&self) -> [usize; 5] {
        [
            self.ground_truth.len(),
            self.depth.len(),
            self.blurred.len(),
            self.blur_maps.len(),
            self.masks.len(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowResolutionPaths {
    pub factor: usize,
    #[serde(flatten)]
    pub paths: SplitPaths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub sequence_id: String,
    pub frame_count: usize,
    pub schedule: FocusSchedule,
    pub focal_points: Vec<f64>,
    pub blur_model: BlurModelInfo,
    pub source_indices: Vec<usize>,
    pub reference_indices: Vec<usize>,
    pub augmentation: Augmentation,
    pub full_resolution: SplitPaths,
    pub low_resolution: LowResolutionPaths,
}

/// Sequences of one resolution level read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedSplit {
    pub ground_truth: FrameSequence,
    pub depth: DepthSequence,
    pub blurred: FrameSequence,
    pub blur_maps: BlurMapSequence,
    pub masks: MaskSequence,
}

fn relative(root: &Path, paths: Vec<PathBuf>) -> Vec<String> {
    paths
        .iter()
        .map(|p| {
            p.strip_prefix(root)
                .unwrap_or(p)
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/")
        })
        .collect()
}

struct SplitRefs<'a> {
    ground_truth: &'a FrameSequence,
    depth: &'a DepthSequence,
    blurred: &'a FrameSequence,
    blur_maps: &'a BlurMapSequence,
    masks: &'a MaskSequence,
}

fn write_split(root: &Path, dir: &Path, s: SplitRefs<'_>) -> Result<SplitPaths> {
    let (width, height) = s.ground_truth.dims();
    Ok(SplitPaths {
        width,
        height,
        ground_truth: relative(root, save_sequence(&dir.join("gt"), s.ground_truth.frames(), write_frame)?),
        depth: relative(root, save_sequence(&dir.join("depth"), s.depth.frames(), write_depth)?),
        blurred: relative(root, save_sequence(&dir.join("blurred"), s.blurred.frames(), write_frame)?),
        blur_maps: relative(
            root,
            save_sequence(&dir.join("blur_maps"), s.blur_maps.frames(), |p, m| {
                write_blur_map(p, m, BlurMapEncoding::KernelSize)
            })?,
        ),
        masks: relative(root, save_sequence(&dir.join("masks"), s.masks.frames(), write_mask)?),
    })
}

/// Writes every artifact of `data` under `root` and returns the manifest that was
/// written next to them.
pub fn write_dataset(root: &Path, sequence_id: &str, data: &SynthesizedDataset) -> Result<DatasetManifest> {
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let full = write_split(
        root,
        root,
        SplitRefs {
            ground_truth: &data.ground_truth,
            depth: &data.depth,
            blurred: &data.clip.frames,
            blur_maps: &data.clip.blur_maps,
            masks: &data.clip.masks,
        },
    )?;
    let lr = &data.low_resolution;
    let low = write_split(
        root,
        &root.join("lr"),
        SplitRefs {
            ground_truth: &lr.ground_truth,
            depth: &lr.depth,
            blurred: &lr.frames,
            blur_maps: &lr.blur_maps,
            masks: &lr.masks,
        },
    )?;
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        sequence_id: sequence_id.to_string(),
        frame_count: data.ground_truth.len(),
        schedule: data.schedule.clone(),
        focal_points: data.focal_points.clone(),
        blur_model: BlurModelInfo::default(),
        source_indices: data.source_indices.clone(),
        reference_indices: data.reference_indices.clone(),
        augmentation: data.augmentation,
        full_resolution: full,
        low_resolution: LowResolutionPaths {
            factor: lr.factor,
            paths: low,
        },
    };
    manifest.save(root)?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write_atomic(&root.join(MANIFEST_FILE), self.to_json()?.as_bytes())
    }

    /// Reads `root/manifest.json` and checks it with [`DatasetManifest::validate`].
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = Self::from_json(&text)?;
        manifest.validate(root)?;
        Ok(manifest)
    }

    /// Every list has one entry per frame and every referenced file exists.
    pub fn validate(&self, root: &Path) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::UnsupportedFormat(format!("manifest schema version {}", self.schema_version)));
        }
        for split in [&self.full_resolution, &self.low_resolution.paths] {
            if let Some(bad) = split.lengths().iter().find(|&&n| n != self.frame_count) {
                return Err(Error::dims(format!("{} entries per artifact list", self.frame_count), bad));
            }
            if let Some(missing) = split.all().find(|p| !root.join(p).is_file()) {
                return Err(Error::EmptyInput(format!("manifest entry {missing} does not exist under {}", root.display())));
            }
        }
        if self.focal_points.len() != self.frame_count {
            return Err(Error::dims(format!("{} focal points", self.frame_count), self.focal_points.len()));
        }
        Ok(())
    }

    fn load_split(&self, root: &Path, split: &SplitPaths) -> Result<LoadedSplit> {
        use rayon::prelude::*;
        let read_all = |paths: &[String], read: fn(&Path) -> Result<crate::image::Image>| {
            paths.par_iter().map(|p| read(&root.join(p))).collect::<Result<Vec<_>>>()
        };
        Ok(LoadedSplit {
            ground_truth: FrameSequence::new(read_all(&split.ground_truth, read_frame)?)?,
            depth: DepthSequence::new(read_all(&split.depth, read_depth)?)?,
            blurred: FrameSequence::new(read_all(&split.blurred, read_frame)?)?,
            blur_maps: BlurMapSequence::new(read_all(&split.blur_maps, read_blur_map)?)?,
            masks: MaskSequence::new(read_all(&split.masks, read_mask)?)?,
        })
    }

    pub fn load_full(&self, root: &Path) -> Result<LoadedSplit> {
        self.load_split(root, &self.full_resolution)
    }

    pub fn load_low(&self, root: &Path) -> Result<LoadedSplit> {
        self.load_split(root, &self.low_resolution.paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blur_synth::build_davis_blur;
    use crate::image::Image;

    fn tiny() -> SynthesizedDataset {
        let frames = FrameSequence::new(
            (0..3)
                .map(|t| Image::from_fn(8, 6, 3, |x, y, c| ((x * 3 + y * 5 + c + t) % 7) as f64 / 6.0))
                .collect(),
        )
        .unwrap();
        let depth = DepthSequence::new(vec![Image::from_fn(8, 6, 1, |x, _, _| x as f64 * 30.0); 3]).unwrap();
        build_davis_blur(&frames, &depth).unwrap()
    }

    #[test]
    fn written_manifest_validates_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), "tiny", &tiny()).unwrap();
        assert_eq!(DatasetManifest::load(dir.path()).unwrap(), m);
        assert_eq!(m.full_resolution.ground_truth[0], "gt/00000.png");
        assert_eq!(m.low_resolution.paths.masks[2], "lr/masks/00002.png");
        assert_eq!((m.low_resolution.paths.width, m.low_resolution.paths.height), (4, 3));
    }

    #[test]
    fn schedule_survives_serialization_exactly() {
        let mut d = tiny();
        d.schedule.focus_rate = 0.1 + 0.2;
        d.schedule.initial_focal_point = 1.0 / 3.0;
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), "x", &d).unwrap();
        let back = DatasetManifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.schedule, d.schedule);
        assert_eq!(back.focal_points, d.focal_points);
    }

    #[test]
    fn missing_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), "tiny", &tiny()).unwrap();
        std::fs::remove_file(dir.path().join(&m.full_resolution.masks[1])).unwrap();
        assert!(m.validate(dir.path()).is_err());
    }

    #[test]
    fn artifacts_read_back_exactly() {
        let d = tiny();
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), "tiny", &d).unwrap();
        let full = m.load_full(dir.path()).unwrap();
        assert_eq!(full.blur_maps, d.clip.blur_maps);
        assert_eq!(full.masks, d.clip.masks);
    }
}
