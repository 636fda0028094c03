//! Low-resolution clip to refocused high-resolution clip, and the four-way ablation of
//! image propagation and blur-map guidance.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PropagationConfig;
use crate::error::{Error, Result};
use crate::flow_prop::{complete_flows, propagate_to_saturation, translation_flows};
use crate::image::{BlurMapSequence, FlowSequence, FrameSequence, Image, MaskSequence};
use crate::manifest::LoadedSplit;
use crate::metrics::{evaluate, BlockMatcher};
use crate::mgst::{forward, BlockStats, ClipInput, ModelWeights};

/// Where the low-resolution optical flows come from.
#[derive(Clone, Debug, PartialEq)]
pub enum FlowSource {
    /// Forward and backward flows supplied by the caller.
    Given(FlowSequence, FlowSequence),
    /// A global translation in low-resolution pixels per frame.
    Translation(f64, f64),
    /// Estimated from the blurred frames with the block matcher used by tOF.
    Estimated(BlockMatcher),
}

/// Dense forward and backward flows between consecutive frames.
pub fn estimate_flows(frames: &FrameSequence, matcher: &BlockMatcher) -> Result<(FlowSequence, FlowSequence)> {
    let pairs = frames.len().saturating_sub(1);
    let fields = (0..2 * pairs)
        .into_par_iter()
        .map(|i| {
            let t = i % pairs;
            let (a, b) = (&frames.frames()[t], &frames.frames()[t + 1]);
            if i < pairs { matcher.estimate(a, b) } else { matcher.estimate(b, a) }
        })
        .collect::<Result<Vec<Image>>>()?;
    let mut fwd = fields;
    let bwd = fwd.split_off(pairs);
    Ok((FlowSequence::new(fwd)?, FlowSequence::new(bwd)?))
}

impl FlowSource {
    pub fn resolve(&self, frames: &FrameSequence) -> Result<(FlowSequence, FlowSequence)> {
        match self {
            FlowSource::Given(f, b) => Ok((f.clone(), b.clone())),
            FlowSource::Translation(dx, dy) => {
                let (w, h) = frames.dims();
                translation_flows(w, h, frames.len(), *dx, *dy)
            }
            FlowSource::Estimated(m) => estimate_flows(frames, m),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub propagation: bool,
    pub blur_maps: bool,
}

impl Variant {
    pub const FULL: Variant = Variant {
        propagation: true,
        blur_maps: true,
    };

    pub fn name(&self) -> &'static str {
        match (self.propagation, self.blur_maps) {
            (false, false) => "w/o Image Propagation or Blur Maps",
            (true, false) => "w/o Blur Maps",
            (false, true) => "w/o Image Propagation",
            (true, true) => "Full",
        }
    }
}

/// Rows in report order; the full model comes last.
pub const ABLATION_VARIANTS: [Variant; 4] = [
    Variant {
        propagation: false,
        blur_maps: false,
    },
    Variant {
        propagation: true,
        blur_maps: false,
    },
    Variant {
        propagation: false,
        blur_maps: true,
    },
    Variant::FULL,
];

#[derive(Clone, Debug, PartialEq)]
pub struct RefocusOutput {
    pub frames: FrameSequence,
    /// Low-resolution frames and masks after propagation (unchanged when disabled).
    pub propagated_frames: FrameSequence,
    pub propagated_masks: MaskSequence,
    pub filled_pixels: usize,
    pub propagation_passes: usize,
    pub skipped_windows: usize,
    pub active_windows: usize,
    pub blocks: Vec<BlockStats>,
}

/// Propagates sharp content into the blurred regions of `lr` (optional), then runs the
/// transformer. Without blur maps the guidance is an all-ones tensor.
pub fn refocus(
    weights: &ModelWeights,
    lr: &LoadedSplit,
    flows: &(FlowSequence, FlowSequence),
    variant: Variant,
    propagation: &PropagationConfig,
) -> Result<RefocusOutput> {
    let masks = &lr.masks;
    let (frames, new_masks, filled, passes) = if variant.propagation && lr.blurred.len() >= 2 {
        let (fwd, bwd, _) = complete_flows(&flows.0, &flows.1, masks, &propagation.completion)?;
        let (result, passes) = propagate_to_saturation(
            &lr.blurred,
            masks,
            &fwd,
            &bwd,
            propagation.consistency_threshold,
            propagation.max_passes,
        )?;
        let filled = masks.iter().flat_map(|m| m.data()).filter(|&&v| v >= 0.5).count()
            - result.masks.iter().flat_map(|m| m.data()).filter(|&&v| v >= 0.5).count();
        (result.frames, result.masks, filled, passes)
    } else {
        (lr.blurred.clone(), masks.clone(), 0, 0)
    };
    let ones;
    let maps = if variant.blur_maps {
        &lr.blur_maps
    } else {
        let (w, h) = lr.blur_maps.dims();
        ones = BlurMapSequence::new(vec![Image::filled(w, h, 1, 1.0); lr.blur_maps.len()])?;
        &ones
    };
    let out = forward(
        weights,
        &ClipInput {
            frames: &frames,
            masks: &new_masks,
            depth: &lr.depth,
            blur_maps: maps,
        },
    )?;
    Ok(RefocusOutput {
        skipped_windows: out.skipped_windows(),
        active_windows: out.active_windows(),
        frames: out.frames,
        blocks: out.blocks,
        propagated_frames: frames,
        propagated_masks: new_masks,
        filled_pixels: filled,
        propagation_passes: passes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub propagation: bool,
    pub blur_maps: bool,
    /// Mean over frames of PSNR restricted to the blurred regions.
    pub masked_psnr: Option<f64>,
    pub masked_ssim: Option<f64>,
    pub tof: Option<f64>,
    /// Differences from the full model (this row minus full).
    pub delta_psnr: Option<f64>,
    pub delta_ssim: Option<f64>,
    pub delta_tof: Option<f64>,
    pub filled_pixels: usize,
    pub skipped_windows: usize,
    pub active_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Runs every entry of [`ABLATION_VARIANTS`] on `lr` and scores the outputs against the
/// full-resolution ground truth inside the full-resolution masks.
pub fn ablate(
    weights: &ModelWeights,
    full: &LoadedSplit,
    lr: &LoadedSplit,
    flows: &(FlowSequence, FlowSequence),
    propagation: &PropagationConfig,
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(ABLATION_VARIANTS.len());
    for variant in ABLATION_VARIANTS {
        let out = refocus(weights, lr, flows, variant, propagation)?;
        if out.frames.dims() != full.ground_truth.dims() {
            return Err(Error::dims(
                format!("output of {:?}", full.ground_truth.dims()),
                format!("{:?}", out.frames.dims()),
            ));
        }
        let report = evaluate(&out.frames, &full.ground_truth, Some(&full.masks))?;
        rows.push(AblationRow {
            name: variant.name().to_string(),
            propagation: variant.propagation,
            blur_maps: variant.blur_maps,
            masked_psnr: report.mean_masked_psnr,
            masked_ssim: report.mean_masked_ssim,
            tof: report.tof,
            delta_psnr: None,
            delta_ssim: None,
            delta_tof: None,
            filled_pixels: out.filled_pixels,
            skipped_windows: out.skipped_windows,
            active_windows: out.active_windows,
        });
    }
    let full_row = rows.last().expect("four variants").clone();
    for row in &mut rows {
        row.delta_psnr = diff(row.masked_psnr, full_row.masked_psnr);
        row.delta_ssim = diff(row.masked_ssim, full_row.masked_ssim);
        row.delta_tof = diff(row.tof, full_row.tof);
    }
    Ok(AblationReport { rows })
}

impl AblationReport {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.propagation == variant.propagation && r.blur_maps == variant.blur_maps)
    }

    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>, p: usize| {
            v.map_or("-".to_string(), |x| {
                // Avoid printing "-0.000" for deltas that round to zero.
                let x = if x.abs() < 0.5 * 10f64.powi(-(p as i32)) { 0.0 } else { x };
                format!("{x:.p$}")
            })
        };
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<36} {:>8} {:>7} {:>7} {:>8} {:>8} {:>8} {:>8}",
            "variant", "PSNR", "SSIM", "tOF", "dPSNR", "dSSIM", "dtOF", "skipped"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<36} {:>8} {:>7} {:>7} {:>8} {:>8} {:>8} {:>8}",
                r.name,
                f(r.masked_psnr, 3),
                f(r.masked_ssim, 4),
                f(r.tof, 3),
                f(r.delta_psnr, 3),
                f(r.delta_ssim, 4),
                f(r.delta_tof, 3),
                r.skipped_windows
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::translating_frames;

    #[test]
    fn estimated_flows_match_translation_in_the_interior() {
        let frames = translating_frames(48, 40, 3, (2, -1), 4).unwrap();
        let (fwd, bwd) = estimate_flows(&frames, &BlockMatcher::default()).unwrap();
        assert_eq!((fwd.len(), bwd.len()), (2, 2));
        for y in 8..32 {
            for x in 8..40 {
                assert_eq!(fwd.frames()[1].pixel(x, y), &[2.0, -1.0]);
                assert_eq!(bwd.frames()[0].pixel(x, y), &[-2.0, 1.0]);
            }
        }
    }

    #[test]
    fn variant_names_follow_the_ablation_rows() {
        let names: Vec<_> = ABLATION_VARIANTS.iter().map(|v| v.name()).collect();
        assert_eq!(
            names,
            ["w/o Image Propagation or Blur Maps", "w/o Blur Maps", "w/o Image Propagation", "Full"]
        );
    }
}
