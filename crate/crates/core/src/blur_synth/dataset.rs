//! Whole-sequence dataset builders: the deterministic near-to-far benchmark recipe and
//! random training samples.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{BlurMapSequence, DepthSequence, FrameSequence, MaskSequence};

use super::kernel::DEFAULT_SIGMA;
use super::schedule::{
    render_at_focal_points, sample_training_schedule, Augmentation, FocusSchedule, ScheduleBounds,
    SynthesizedClip,
};

/// Benchmark recipe constants.
pub const BENCHMARK_N_MAX: usize = 7;
pub const BENCHMARK_FOCAL_RANGE: f64 = 100.0;
pub const BENCHMARK_INITIAL_FOCAL_POINT: f64 = 0.0;
/// Low-resolution variants are produced at this reduction factor.
pub const LOW_RES_FACTOR: usize = 2;

/// Reduced-resolution copies of a synthesized clip.
#[derive(Clone, Debug, PartialEq)]
pub struct LowResolution {
    pub factor: usize,
    pub ground_truth: FrameSequence,
    pub frames: FrameSequence,
    pub depth: DepthSequence,
    pub blur_maps: BlurMapSequence,
    pub masks: MaskSequence,
}

impl LowResolution {
    pub fn build(
        factor: usize,
        ground_truth: &FrameSequence,
        depth: &DepthSequence,
        clip: &SynthesizedClip,
    ) -> Result<Self> {
        Ok(Self {
            factor,
            ground_truth: ground_truth.downsample(factor)?,
            frames: clip.frames.downsample(factor)?,
            depth: depth.downsample(factor)?,
            blur_maps: clip.blur_maps.downsample(factor)?,
            masks: clip.masks.downsample(factor)?,
        })
    }
}

/// A fully synthesized sequence ready to be written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedDataset {
    pub schedule: FocusSchedule,
    pub focal_points: Vec<f64>,
    /// Source indices of the emitted frames (clip followed by references).
    pub source_indices: Vec<usize>,
    pub reference_indices: Vec<usize>,
    pub augmentation: Augmentation,
    pub ground_truth: FrameSequence,
    pub depth: DepthSequence,
    pub clip: SynthesizedClip,
    pub low_resolution: LowResolution,
}

/// Largest depth value over the whole sequence.
pub fn max_depth(depths: &DepthSequence) -> f64 {
    depths
        .iter()
        .flat_map(|d| d.data().iter().copied())
        .fold(0.0, f64::max)
}

/// The benchmark recipe: one clip spanning the whole sequence, `n_max = 7`,
/// `focal_range = 100`, focus starting at depth 0 and sweeping to the deepest point of
/// the sequence by the last frame.
pub fn build_davis_blur(frames: &FrameSequence, depths: &DepthSequence) -> Result<SynthesizedDataset> {
    if frames.len() != depths.len() {
        return Err(Error::dims(format!("{} depth maps", frames.len()), depths.len()));
    }
    depths.ensure_dims(frames.dims())?;
    let t = frames.len();
    let schedule = FocusSchedule {
        initial_focal_point: BENCHMARK_INITIAL_FOCAL_POINT,
        focal_range: BENCHMARK_FOCAL_RANGE,
        focus_rate: max_depth(depths) / t as f64,
        n_max: BENCHMARK_N_MAX,
        sigma: DEFAULT_SIGMA,
        length: t,
        reference_count: 0,
    };
    build_with_schedule(frames, depths, schedule)
}

/// Blurs the whole sequence (clip = all frames) with an explicit schedule whose length
/// must equal the sequence length.
pub fn build_with_schedule(
    frames: &FrameSequence,
    depths: &DepthSequence,
    schedule: FocusSchedule,
) -> Result<SynthesizedDataset> {
    schedule.validate()?;
    if schedule.length != frames.len() {
        return Err(Error::InvalidParameter(format!(
            "schedule length {} differs from sequence length {}",
            schedule.length,
            frames.len()
        )));
    }
    let focal_points = schedule.focal_points();
    let clip = render_at_focal_points(frames.frames(), depths.frames(), &focal_points, &schedule.blur_params())?;
    let low_resolution = LowResolution::build(LOW_RES_FACTOR, frames, depths, &clip)?;
    Ok(SynthesizedDataset {
        source_indices: (0..frames.len()).collect(),
        reference_indices: Vec::new(),
        augmentation: Augmentation::default(),
        schedule,
        focal_points,
        ground_truth: frames.clone(),
        depth: depths.clone(),
        clip,
        low_resolution,
    })
}

/// Draws a random schedule and renders the clip plus its global references.
///
/// References are blurred at the focal depth the schedule reaches at their own time
/// offset from the clip start. Augmentations flip every output; reversal applies to the
/// clip frames only, references stay appended after the clip.
pub fn generate_training_sample<R: Rng + ?Sized>(
    rng: &mut R,
    frames: &FrameSequence,
    depths: &DepthSequence,
    bounds: &ScheduleBounds,
) -> Result<SynthesizedDataset> {
    if frames.len() != depths.len() {
        return Err(Error::dims(format!("{} depth maps", frames.len()), depths.len()));
    }
    depths.ensure_dims(frames.dims())?;
    let draw = sample_training_schedule(rng, frames.len(), bounds)?;
    let start = draw.clip[0] as isize;

    let mut order = draw.clip.clone();
    if draw.augmentation.temporal_reverse {
        order.reverse();
    }
    order.extend_from_slice(&draw.references);
    let focal_points: Vec<f64> = draw
        .clip
        .iter()
        .chain(&draw.references)
        .map(|&i| draw.schedule.focal_point(i as isize - start))
        .collect();
    // Reordering after rendering keeps each frame paired with its own focal depth.
    let mut ordered_focal = focal_points;
    if draw.augmentation.temporal_reverse {
        ordered_focal[..draw.clip.len()].reverse();
    }

    let mut gt = frames.select(&order)?;
    let mut depth = depths.select(&order)?;
    if draw.augmentation.horizontal_flip {
        gt = gt.horizontal_flip();
        depth = depth.horizontal_flip();
    }
    let clip = render_at_focal_points(gt.frames(), depth.frames(), &ordered_focal, &draw.schedule.blur_params())?;
    let low_resolution = LowResolution::build(LOW_RES_FACTOR, &gt, &depth, &clip)?;
    Ok(SynthesizedDataset {
        schedule: draw.schedule,
        focal_points: ordered_focal,
        source_indices: order,
        reference_indices: draw.references,
        augmentation: draw.augmentation,
        ground_truth: gt,
        depth,
        clip,
        low_resolution,
    })
}
