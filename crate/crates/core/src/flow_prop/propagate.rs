//! Bidirectional propagation of in-focus pixels along optical flow.
//!
//! `forward[t]` maps frame `t` to `t + 1`, `backward[t]` maps frame `t + 1` to `t`. The
//! backward pass walks `t = T-2 .. 0` pulling from frame `t + 1`; the forward pass walks
//! `t = 1 .. T-1` pulling from frame `t - 1`. A masked pixel takes the bilinear sample of
//! its neighbour when every contributing neighbour pixel is unmasked and the
//! forward-backward error is below the threshold; its mask bit then clears so the value
//! can travel further in the same pass.

use rayon::prelude::*;

use crate::error::{ensure_param, Error, Result};
use crate::image::{FlowSequence, FrameSequence, Image, MaskSequence};

use super::consistency::{fb_consistency, ConsistencyMap};
use super::warp::Footprint;

pub const DEFAULT_CONSISTENCY_THRESHOLD: f64 = 1.0;

/// Provenance value of pixels that were not filled by propagation.
pub const UNTOUCHED: i32 = -1;

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationResult {
    pub frames: FrameSequence,
    pub masks: MaskSequence,
    /// Per frame, per pixel: index of the frame the value was copied from, or
    /// [`UNTOUCHED`].
    pub provenance: Vec<Vec<i32>>,
}

impl PropagationResult {
    pub fn filled_count(&self) -> usize {
        self.provenance.iter().flatten().filter(|&&p| p != UNTOUCHED).count()
    }
}

struct Step<'a> {
    target: usize,
    source: usize,
    flow: &'a Image,
    errors: &'a ConsistencyMap,
}

/// Returns the filled pixels of `target` as `(index, value)` pairs.
fn fill_from(
    target_frame: &Image,
    target_mask: &Image,
    source_frame: &Image,
    source_mask: &Image,
    step: &Step<'_>,
    threshold: f64,
) -> Vec<(usize, Vec<f64>)> {
    let (w, h) = target_frame.dims();
    (0..w * h)
        .into_par_iter()
        .filter_map(|i| {
            let (x, y) = (i % w, i / w);
            if target_mask.get(x, y, 0) < 0.5 || step.errors.at(x, y) >= threshold {
                return None;
            }
            let f = step.flow.pixel(x, y);
            let fp = Footprint::inside(w, h, x as f64 + f[0], y as f64 + f[1])?;
            if fp.corners().any(|(cx, cy)| source_mask.get(cx, cy, 0) >= 0.5) {
                return None;
            }
            let mut v = vec![0.0; target_frame.channels()];
            fp.sample(source_frame, &mut v);
            Some((i, v))
        })
        .collect()
}

/// One backward pass followed by one forward pass. Flows are expected to be completed
/// already. Sequences shorter than two frames are returned unchanged.
pub fn propagate(
    frames: &FrameSequence,
    masks: &MaskSequence,
    forward: &FlowSequence,
    backward: &FlowSequence,
    consistency_threshold: f64,
) -> Result<PropagationResult> {
    ensure_param!(consistency_threshold >= 0.0, "consistency threshold must be non-negative");
    let t_len = frames.len();
    if masks.len() != t_len {
        return Err(Error::dims(format!("{t_len} masks"), masks.len()));
    }
    masks.ensure_dims(frames.dims())?;
    let (w, h) = frames.dims();
    let mut out_frames: Vec<Image> = frames.frames().to_vec();
    let mut out_masks: Vec<Image> = masks.frames().to_vec();
    let mut provenance = vec![vec![UNTOUCHED; w * h]; t_len];
    if t_len < 2 {
        return Ok(PropagationResult {
            frames: frames.clone(),
            masks: masks.clone(),
            provenance,
        });
    }
    let pairs = t_len - 1;
    if forward.len() != pairs || backward.len() != pairs {
        return Err(Error::dims(
            format!("{pairs} forward and backward flows"),
            format!("{} forward, {} backward", forward.len(), backward.len()),
        ));
    }
    forward.ensure_dims((w, h))?;
    backward.ensure_dims((w, h))?;

    let (fwd_err, bwd_err): (Vec<_>, Vec<_>) = forward
        .frames()
        .par_iter()
        .zip(backward.frames().par_iter())
        .map(|(f, b)| Ok((fb_consistency(f, b)?, fb_consistency(b, f)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();

    let backward_pass = (0..pairs).rev().map(|t| Step {
        target: t,
        source: t + 1,
        flow: &forward.frames()[t],
        errors: &fwd_err[t],
    });
    let forward_pass = (1..t_len).map(|t| Step {
        target: t,
        source: t - 1,
        flow: &backward.frames()[t - 1],
        errors: &bwd_err[t - 1],
    });

    for step in backward_pass.chain(forward_pass) {
        let fills = fill_from(
            &out_frames[step.target],
            &out_masks[step.target],
            &out_frames[step.source],
            &out_masks[step.source],
            &step,
            consistency_threshold,
        );
        let frame = &mut out_frames[step.target];
        for (i, v) in &fills {
            frame.pixel_mut(i % w, i / w).copy_from_slice(v);
        }
        let mask = &mut out_masks[step.target];
        for (i, _) in &fills {
            mask.set(i % w, i / w, 0, 0.0);
            provenance[step.target][*i] = step.source as i32;
        }
    }

    Ok(PropagationResult {
        frames: FrameSequence::new(out_frames)?,
        masks: MaskSequence::new(out_masks)?,
        provenance,
    })
}

/// Repeats [`propagate`] until a run fills nothing; returns the last productive result
/// and the number of runs that changed something.
pub fn propagate_to_saturation(
    frames: &FrameSequence,
    masks: &MaskSequence,
    forward: &FlowSequence,
    backward: &FlowSequence,
    consistency_threshold: f64,
    max_runs: usize,
) -> Result<(PropagationResult, usize)> {
    let mut current = propagate(frames, masks, forward, backward, consistency_threshold)?;
    let mut runs = usize::from(current.filled_count() > 0);
    while runs < max_runs {
        let next = propagate(&current.frames, &current.masks, forward, backward, consistency_threshold)?;
        if next.filled_count() == 0 {
            break;
        }
        for (acc, new) in current.provenance.iter_mut().zip(&next.provenance) {
            for (a, &n) in acc.iter_mut().zip(new) {
                if n != UNTOUCHED {
                    *a = n;
                }
            }
        }
        current.frames = next.frames;
        current.masks = next.masks;
        runs += 1;
    }
    Ok((current, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_flows(w: usize, h: usize, n: usize) -> FlowSequence {
        FlowSequence::new(vec![Image::new(w, h, 2); n]).unwrap()
    }

    #[test]
    fn nothing_masked_nothing_changes() {
        let frames = FrameSequence::new(vec![Image::filled(5, 4, 3, 0.2), Image::filled(5, 4, 3, 0.7)]).unwrap();
        let masks = MaskSequence::new(vec![Image::new(5, 4, 1); 2]).unwrap();
        let r = propagate(&frames, &masks, &zero_flows(5, 4, 1), &zero_flows(5, 4, 1), 1.0).unwrap();
        assert_eq!(r.frames, frames);
        assert!(r.provenance.iter().flatten().all(|&p| p == UNTOUCHED));
    }

    #[test]
    fn static_scene_copies_from_unmasked_neighbour() {
        let a = Image::filled(3, 3, 3, 0.2);
        let b = Image::filled(3, 3, 3, 0.9);
        let frames = FrameSequence::new(vec![a, b.clone()]).unwrap();
        let mut m0 = Image::new(3, 3, 1);
        m0.set(1, 1, 0, 1.0);
        let masks = MaskSequence::new(vec![m0, Image::new(3, 3, 1)]).unwrap();
        let r = propagate(&frames, &masks, &zero_flows(3, 3, 1), &zero_flows(3, 3, 1), 1.0).unwrap();
        assert_eq!(r.frames.frames()[0].pixel(1, 1), b.pixel(1, 1));
        assert_eq!(r.frames.frames()[0].get(0, 0, 0), 0.2);
        assert_eq!(r.masks.frames()[0].get(1, 1, 0), 0.0);
        assert_eq!(r.provenance[0][4], 1);
        assert_eq!(r.provenance[0].iter().filter(|&&p| p != UNTOUCHED).count(), 1);
    }

    #[test]
    fn values_chain_across_frames_within_a_pass() {
        let frames = FrameSequence::new(vec![
            Image::filled(2, 2, 3, 0.1),
            Image::filled(2, 2, 3, 0.2),
            Image::filled(2, 2, 3, 0.3),
        ])
        .unwrap();
        let masks = MaskSequence::new(vec![
            Image::filled(2, 2, 1, 1.0),
            Image::filled(2, 2, 1, 1.0),
            Image::new(2, 2, 1),
        ])
        .unwrap();
        let r = propagate(&frames, &masks, &zero_flows(2, 2, 2), &zero_flows(2, 2, 2), 1.0).unwrap();
        assert!(r.frames.frames()[0].data().iter().all(|&v| v == 0.3));
        assert!(r.provenance[0].iter().all(|&p| p == 1));
        assert!(r.provenance[1].iter().all(|&p| p == 2));
    }

    #[test]
    fn inconsistent_flow_blocks_the_copy() {
        let frames = FrameSequence::new(vec![Image::filled(4, 4, 3, 0.1), Image::filled(4, 4, 3, 0.8)]).unwrap();
        let masks = MaskSequence::new(vec![Image::filled(4, 4, 1, 1.0), Image::new(4, 4, 1)]).unwrap();
        let fwd = FlowSequence::new(vec![Image::from_fn(4, 4, 2, |_, _, c| if c == 0 { 1.5 } else { 0.0 })]).unwrap();
        let r = propagate(&frames, &masks, &fwd, &zero_flows(4, 4, 1), 1.0).unwrap();
        assert_eq!(r.filled_count(), 0);
        assert_eq!(r.frames, frames);
    }
}
