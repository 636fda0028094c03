//! Focus-shift schedules: deterministic sweeps for test sets and random draws for
//! training samples.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blur_inference::binarize_against;
use crate::error::{ensure_param, Error, Result};
use crate::image::{BlurMapSequence, DepthSequence, FrameSequence, Image, MaskSequence};

use super::kernel::DEFAULT_SIGMA;
use super::model::{DEPTH_MAX, DEPTH_MIN};
use super::render::{render_focal_blur, BlurParams};

/// Legal maximum kernel sizes.
pub const N_MAX_CHOICES: [usize; 5] = [3, 5, 7, 9, 11];

/// Parameters of one synthetic focus shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusSchedule {
    /// Focal depth of the first frame, in `[0, 255]`.
    pub initial_focal_point: f64,
    /// Width of the in-focus depth band centered on the focal point.
    pub focal_range: f64,
    /// Focal-point change per frame.
    pub focus_rate: f64,
    /// Largest kernel size, odd, in `[3, 11]`.
    pub n_max: usize,
    pub sigma: f64,
    /// Frames in the local clip.
    pub length: usize,
    /// Global reference frames drawn from outside the clip.
    pub reference_count: usize,
}

impl FocusSchedule {
    pub fn validate(&self) -> Result<()> {
        ensure_param!(
            N_MAX_CHOICES.contains(&self.n_max),
            "n_max must be an odd size in 3..=11, got {}",
            self.n_max
        );
        ensure_param!(self.focal_range >= 0.0, "focal range must be non-negative");
        ensure_param!(self.length >= 1, "clip length must be at least 1");
        ensure_param!(self.sigma > 0.0 && self.sigma.is_finite(), "sigma must be positive");
        ensure_param!(
            self.initial_focal_point.is_finite() && self.focus_rate.is_finite(),
            "focal point and rate must be finite"
        );
        Ok(())
    }

    pub fn blur_params(&self) -> BlurParams {
        BlurParams {
            focal_range: self.focal_range,
            n_max: self.n_max,
            sigma: self.sigma,
        }
    }

    /// Focal depth at clip frame `t` (may lie outside the clip for reference frames).
    ///
    /// The clip spans `length` rate steps: the first frame sits at the initial focal
    /// point and the last at `initial + rate * length`, with frames evenly spaced in
    /// between. Results are clamped to the depth scale.
    pub fn focal_point(&self, t: isize) -> f64 {
        let progress = if self.length > 1 {
            t as f64 * self.length as f64 / (self.length - 1) as f64
        } else {
            0.0
        };
        (self.initial_focal_point + self.focus_rate * progress).clamp(DEPTH_MIN, DEPTH_MAX)
    }

    pub fn focal_points(&self) -> Vec<f64> {
        (0..self.length as isize).map(|t| self.focal_point(t)).collect()
    }
}

/// Ranges for randomly drawn schedules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleBounds {
    pub focal_point: [f64; 2],
    pub focal_range: [f64; 2],
    /// Largest focus-rate magnitude; the sign always points toward the farther end of the
    /// depth scale.
    pub max_focus_rate: f64,
    pub n_max_choices: Vec<usize>,
    pub clip_length: usize,
    pub reference_count: usize,
    pub sigma: f64,
    pub flip_probability: f64,
    pub reverse_probability: f64,
}

impl Default for ScheduleBounds {
    fn default() -> Self {
        Self {
            focal_point: [DEPTH_MIN, DEPTH_MAX],
            focal_range: [0.0, 150.0],
            max_focus_rate: 25.5,
            n_max_choices: N_MAX_CHOICES.to_vec(),
            clip_length: 10,
            reference_count: 6,
            sigma: DEFAULT_SIGMA,
            flip_probability: 0.5,
            reverse_probability: 0.5,
        }
    }
}

impl ScheduleBounds {
    pub fn validate(&self) -> Result<()> {
        let [f_lo, f_hi] = self.focal_point;
        ensure_param!(
            DEPTH_MIN <= f_lo && f_lo <= f_hi && f_hi <= DEPTH_MAX,
            "focal point bounds must be an ordered sub-range of [0, 255]"
        );
        let [r_lo, r_hi] = self.focal_range;
        ensure_param!(0.0 <= r_lo && r_lo <= r_hi && r_hi.is_finite(), "focal range bounds must be ordered and non-negative");
        ensure_param!(self.max_focus_rate >= 0.0 && self.max_focus_rate.is_finite(), "max focus rate must be non-negative");
        ensure_param!(!self.n_max_choices.is_empty(), "n_max choices must not be empty");
        for n in &self.n_max_choices {
            ensure_param!(N_MAX_CHOICES.contains(n), "n_max choice {n} is not an odd size in 3..=11");
        }
        ensure_param!(self.clip_length >= 1, "clip length must be at least 1");
        ensure_param!(self.sigma > 0.0 && self.sigma.is_finite(), "sigma must be positive");
        for p in [self.flip_probability, self.reverse_probability] {
            ensure_param!((0.0..=1.0).contains(&p), "probabilities must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Data augmentations applied to a training sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augmentation {
    pub horizontal_flip: bool,
    pub temporal_reverse: bool,
}

/// One random draw: schedule, clip placement, references and augmentations.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingDraw {
    pub schedule: FocusSchedule,
    /// Contiguous indices of the local clip.
    pub clip: Vec<usize>,
    /// Distinct indices outside the clip, ascending. Fewer than requested when the
    /// sequence has fewer frames outside the clip.
    pub references: Vec<usize>,
    pub augmentation: Augmentation,
}

/// Draws a training schedule for a sequence of `total_frames` frames.
pub fn sample_training_schedule<R: Rng + ?Sized>(
    rng: &mut R,
    total_frames: usize,
    bounds: &ScheduleBounds,
) -> Result<TrainingDraw> {
    bounds.validate()?;
    let l = bounds.clip_length;
    if total_frames <= l {
        return Err(Error::InvalidParameter(format!(
            "sequence of {total_frames} frames is too short for a clip of {l}"
        )));
    }

    let start = rng.random_range(0..=total_frames - l);
    let clip: Vec<usize> = (start..start + l).collect();
    let outside: Vec<usize> = (0..total_frames).filter(|t| !(start..start + l).contains(t)).collect();
    let count = bounds.reference_count.min(outside.len());
    let mut references: Vec<usize> = sample(rng, outside.len(), count).into_iter().map(|i| outside[i]).collect();
    references.sort_unstable();

    let n_max = bounds.n_max_choices[rng.random_range(0..bounds.n_max_choices.len())];
    let initial = uniform(rng, bounds.focal_point);
    let focal_range = uniform(rng, bounds.focal_range);
    let magnitude = uniform(rng, [0.0, bounds.max_focus_rate]);
    // Shift toward whichever end of the depth scale is farther away.
    let midpoint = (DEPTH_MIN + DEPTH_MAX) / 2.0;
    let focus_rate = if initial <= midpoint { magnitude } else { -magnitude };

    let augmentation = Augmentation {
        horizontal_flip: rng.random_bool(bounds.flip_probability),
        temporal_reverse: rng.random_bool(bounds.reverse_probability),
    };

    Ok(TrainingDraw {
        schedule: FocusSchedule {
            initial_focal_point: initial,
            focal_range,
            focus_rate,
            n_max,
            sigma: bounds.sigma,
            length: l,
            reference_count: references.len(),
        },
        clip,
        references,
        augmentation,
    })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Blurred frames with their kernel-size maps and focus masks.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesizedClip {
    pub frames: FrameSequence,
    pub blur_maps: BlurMapSequence,
    pub masks: MaskSequence,
}

/// Renders each frame at its own focal depth, in parallel across frames.
pub fn render_at_focal_points(
    frames: &[Image],
    depths: &[Image],
    focal_points: &[f64],
    params: &BlurParams,
) -> Result<SynthesizedClip> {
    if frames.len() != depths.len() || frames.len() != focal_points.len() {
        return Err(Error::dims(
            format!("{} frames, depth maps and focal points", frames.len()),
            format!("{} depth maps and {} focal points", depths.len(), focal_points.len()),
        ));
    }
    let rendered = frames
        .par_iter()
        .zip(depths.par_iter())
        .zip(focal_points.par_iter())
        .map(|((frame, depth), &focal)| render_focal_blur(frame, depth, focal, params))
        .collect::<Result<Vec<_>>>()?;
    let mut out_frames = Vec::with_capacity(rendered.len());
    let mut maps = Vec::with_capacity(rendered.len());
    let mut masks = Vec::with_capacity(rendered.len());
    for r in rendered {
        masks.push(binarize_against(&r.blur_map, 0.0, 0.0));
        out_frames.push(r.frame);
        maps.push(r.blur_map);
    }
    Ok(SynthesizedClip {
        frames: FrameSequence::new(out_frames)?,
        blur_maps: BlurMapSequence::new(maps)?,
        masks: MaskSequence::new(masks)?,
    })
}

/// Blurs the first `schedule.length` frames with a temporally varying focal point.
pub fn synthesize_sequence(
    frames: &FrameSequence,
    depths: &DepthSequence,
    schedule: &FocusSchedule,
) -> Result<SynthesizedClip> {
    schedule.validate()?;
    if frames.len() != depths.len() {
        return Err(Error::dims(format!("{} depth maps", frames.len()), format!("{}", depths.len())));
    }
    depths.ensure_dims(frames.dims())?;
    if schedule.length > frames.len() {
        return Err(Error::InvalidParameter(format!(
            "clip length {} exceeds the {} available frames",
            schedule.length,
            frames.len()
        )));
    }
    let l = schedule.length;
    render_at_focal_points(
        &frames.frames()[..l],
        &depths.frames()[..l],
        &schedule.focal_points(),
        &schedule.blur_params(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn n_max_draws_stay_in_the_odd_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bounds = ScheduleBounds::default();
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..10_000 {
            let d = sample_training_schedule(&mut rng, 40, &bounds).unwrap();
            seen.insert(d.schedule.n_max);
        }
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![3, 5, 7, 9, 11]);
    }

    #[test]
    fn references_are_distinct_and_outside_the_clip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bounds = ScheduleBounds::default();
        for _ in 0..500 {
            let d = sample_training_schedule(&mut rng, 30, &bounds).unwrap();
            assert_eq!(d.clip.len(), 10);
            assert!(d.clip.windows(2).all(|w| w[1] == w[0] + 1));
            assert_eq!(d.references.len(), 6);
            assert!(d.references.windows(2).all(|w| w[0] < w[1]));
            assert!(d.references.iter().all(|r| !d.clip.contains(r) && *r < 30));
        }
    }

    #[test]
    fn same_seed_same_draw() {
        let bounds = ScheduleBounds::default();
        let a = sample_training_schedule(&mut ChaCha8Rng::seed_from_u64(9), 50, &bounds).unwrap();
        let b = sample_training_schedule(&mut ChaCha8Rng::seed_from_u64(9), 50, &bounds).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn short_sequences_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_training_schedule(&mut rng, 10, &ScheduleBounds::default()).is_err());
    }

    #[test]
    fn rate_points_toward_farther_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d = sample_training_schedule(&mut rng, 20, &ScheduleBounds::default()).unwrap();
            let s = &d.schedule;
            if s.initial_focal_point < 127.5 {
                assert!(s.focus_rate >= 0.0);
            } else if s.initial_focal_point > 127.5 {
                assert!(s.focus_rate <= 0.0);
            }
        }
    }

    #[test]
    fn augmentation_rates_are_near_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut flips, mut revs) = (0, 0);
        for _ in 0..4000 {
            let d = sample_training_schedule(&mut rng, 20, &ScheduleBounds::default()).unwrap();
            flips += usize::from(d.augmentation.horizontal_flip);
            revs += usize::from(d.augmentation.temporal_reverse);
        }
        assert!((1800..2200).contains(&flips));
        assert!((1800..2200).contains(&revs));
    }

    #[test]
    fn focal_points_span_the_full_shift() {
        let s = FocusSchedule {
            initial_focal_point: 0.0,
            focal_range: 100.0,
            focus_rate: 200.0 / 8.0,
            n_max: 7,
            sigma: 5.0,
            length: 8,
            reference_count: 0,
        };
        let pts = s.focal_points();
        assert_eq!(pts[0], 0.0);
        assert!((pts[7] - 200.0).abs() < 1e-12);
        assert!(pts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn focal_point_is_clamped() {
        let s = FocusSchedule {
            initial_focal_point: 250.0,
            focal_range: 0.0,
            focus_rate: 10.0,
            n_max: 3,
            sigma: 5.0,
            length: 5,
            reference_count: 0,
        };
        assert_eq!(s.focal_point(4), 255.0);
        assert_eq!(s.focal_point(-100), 0.0);
    }
}
