//! Classical masked flow completion.
//!
//! Flow vectors under the blur mask are unreliable. The field is reduced by block
//! averaging (default 8x8) over blocks that contain no masked pixel, the unknown blocks
//! are filled by Jacobi iteration of the 4-neighbour Laplace equation, and the result is
//! interpolated back to full resolution between block centroids. Unmasked vectors are
//! never touched.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, Error, Result};
use crate::image::{FlowSequence, Image, MaskSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionParams {
    pub downsample: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            downsample: 8,
            tolerance: 1e-4,
            max_iterations: 500,
        }
    }
}

impl CompletionParams {
    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.downsample >= 1, "completion downsample must be at least 1");
        ensure_param!(self.tolerance > 0.0, "completion tolerance must be positive");
        ensure_param!(self.max_iterations >= 1, "completion needs at least one iteration");
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletedFlow {
    pub flow: Image,
    /// No reliable block existed; masked vectors were set to zero.
    pub all_masked: bool,
    pub iterations: usize,
}

/// Mean written as `first + mean(v - first)`, exact when all values are equal.
fn stable_mean(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let mut it = values.clone();
    let first = it.next()?;
    let (mut acc, mut n) = (0.0, 1usize);
    for v in it {
        acc += v - first;
        n += 1;
    }
    Some(first + acc / n as f64)
}

/// Block extents and centroids along one axis.
struct Axis {
    /// `(start, end)` of each block.
    blocks: Vec<(usize, usize)>,
    /// For each fine index: lower block, upper block, weight of the upper block.
    interp: Vec<(usize, usize, f64)>,
}

impl Axis {
    fn new(len: usize, factor: usize) -> Self {
        let blocks: Vec<(usize, usize)> = (0..len.div_ceil(factor))
            .map(|i| (i * factor, ((i + 1) * factor).min(len)))
            .collect();
        let centers: Vec<f64> = blocks.iter().map(|&(s, e)| (s + e - 1) as f64 / 2.0).collect();
        let last = centers.len() - 1;
        let interp = (0..len)
            .map(|x| {
                let x = x as f64;
                if x <= centers[0] {
                    return (0, 0, 0.0);
                }
                if x >= centers[last] {
                    return (last, last, 0.0);
                }
                let i = centers.partition_point(|&c| c <= x) - 1;
                (i, i + 1, (x - centers[i]) / (centers[i + 1] - centers[i]))
            })
            .collect();
        Self { blocks, interp }
    }
}

/// Completes one flow field under its mask (1 = unreliable).
pub fn complete_flow(flow: &Image, mask: &Image, params: &CompletionParams) -> Result<CompletedFlow> {
    params.validate()?;
    if flow.channels() != 2 || mask.channels() != 1 {
        return Err(Error::dims("2-channel flow with 1-channel mask", format!("{} / {}", flow.shape_string(), mask.shape_string())));
    }
    flow.ensure_same_dims(mask)?;
    if mask.data().iter().all(|&m| m < 0.5) {
        return Ok(CompletedFlow {
            flow: flow.clone(),
            all_masked: false,
            iterations: 0,
        });
    }

    let (w, h) = flow.dims();
    let f = params.downsample;
    let scale = f as f64;
    let ax = Axis::new(w, f);
    let ay = Axis::new(h, f);
    let (lw, lh) = (ax.blocks.len(), ay.blocks.len());

    // Reduced field in reduced-pixel units; None where the block touches the mask.
    let mut known = vec![false; lw * lh];
    let mut low = vec![[0.0f64; 2]; lw * lh];
    for (by, &(y0, y1)) in ay.blocks.iter().enumerate() {
        for (bx, &(x0, x1)) in ax.blocks.iter().enumerate() {
            let coords = (y0..y1).flat_map(|y| (x0..x1).map(move |x| (x, y)));
            if coords.clone().any(|(x, y)| mask.get(x, y, 0) >= 0.5) {
                continue;
            }
            let i = by * lw + bx;
            known[i] = true;
            for c in 0..2 {
                low[i][c] = stable_mean(coords.clone().map(|(x, y)| flow.get(x, y, c))).expect("non-empty block") / scale;
            }
        }
    }

    let all_masked = !known.iter().any(|&k| k);
    let mut iterations = 0;
    if !all_masked {
        let seed: [f64; 2] = std::array::from_fn(|c| {
            stable_mean(known.iter().zip(&low).filter(|(k, _)| **k).map(|(_, v)| v[c])).expect("some known block")
        });
        for (k, v) in known.iter().zip(low.iter_mut()) {
            if !k {
                *v = seed;
            }
        }
        let unknown: Vec<usize> = (0..lw * lh).filter(|&i| !known[i]).collect();
        while iterations < params.max_iterations {
            iterations += 1;
            let prev = low.clone();
            let mut change = 0.0f64;
            for &i in &unknown {
                let (bx, by) = (i % lw, i / lw);
                let mut nbrs = Vec::with_capacity(4);
                if bx > 0 {
                    nbrs.push(i - 1);
                }
                if bx + 1 < lw {
                    nbrs.push(i + 1);
                }
                if by > 0 {
                    nbrs.push(i - lw);
                }
                if by + 1 < lh {
                    nbrs.push(i + lw);
                }
                if nbrs.is_empty() {
                    continue;
                }
                for c in 0..2 {
                    let v = stable_mean(nbrs.iter().map(|&j| prev[j][c])).expect("neighbours");
                    change = change.max((v - prev[i][c]).abs());
                    low[i][c] = v;
                }
            }
            if change < params.tolerance {
                break;
            }
        }
    }

    let mut out = flow.clone();
    for y in 0..h {
        let (j0, j1, ty) = ay.interp[y];
        for x in 0..w {
            if mask.get(x, y, 0) < 0.5 {
                continue;
            }
            let px = out.pixel_mut(x, y);
            if all_masked {
                px.fill(0.0);
                continue;
            }
            let (i0, i1, tx) = ax.interp[x];
            for c in 0..2 {
                let v00 = low[j0 * lw + i0][c];
                let v10 = low[j0 * lw + i1][c];
                let v01 = low[j1 * lw + i0][c];
                let v11 = low[j1 * lw + i1][c];
                let top = v00 + tx * (v10 - v00);
                let bottom = v01 + tx * (v11 - v01);
                px[c] = (top + ty * (bottom - top)) * scale;
            }
        }
    }

    Ok(CompletedFlow {
        flow: out,
        all_masked,
        iterations,
    })
}

/// Completes forward flows (`t -> t+1`, masked by frame `t`) and backward flows
/// (`t+1 -> t`, masked by frame `t+1`).
pub fn complete_flows(
    forward: &FlowSequence,
    backward: &FlowSequence,
    masks: &MaskSequence,
    params: &CompletionParams,
) -> Result<(FlowSequence, FlowSequence, Vec<bool>)> {
    use rayon::prelude::*;
    let pairs = masks.len().saturating_sub(1);
    if forward.len() != pairs || backward.len() != pairs {
        return Err(Error::dims(
            format!("{pairs} forward and backward flows"),
            format!("{} forward, {} backward", forward.len(), backward.len()),
        ));
    }
    let jobs: Vec<(&Image, &Image)> = forward
        .iter()
        .zip(&masks.frames()[..pairs])
        .chain(backward.iter().zip(&masks.frames()[1..]))
        .collect();
    let done = jobs
        .par_iter()
        .map(|(f, m)| complete_flow(f, m, params))
        .collect::<Result<Vec<_>>>()?;
    let flags = done.iter().map(|c| c.all_masked).collect();
    let mut flows: Vec<Image> = done.into_iter().map(|c| c.flow).collect();
    let bwd = flows.split_off(pairs);
    Ok((FlowSequence::new(flows)?, FlowSequence::new(bwd)?, flags))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 2, |x, y, c| {
            if c == 0 {
                1.0 + 0.03 * x as f64 - 0.02 * y as f64
            } else {
                -0.5 + 0.01 * x as f64 + 0.025 * y as f64
            }
        })
    }

    fn disc(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> Image {
        Image::from_fn(w, h, 1, |x, y, _| {
            if (x as f64 - cx).hypot(y as f64 - cy) <= r { 1.0 } else { 0.0 }
        })
    }

    #[test]
    fn unmasked_input_is_returned_bitwise() {
        let flow = linear(16, 16);
        let out = complete_flow(&flow, &Image::new(16, 16, 1), &CompletionParams::default()).unwrap();
        assert_eq!(out.flow, flow);
    }

    #[test]
    fn constant_flow_is_a_fixed_point() {
        let flow = Image::from_fn(40, 24, 2, |_, _, c| if c == 0 { 0.3 } else { -1.7 });
        let out = complete_flow(&flow, &disc(40, 24, 20.0, 12.0, 9.0), &CompletionParams::default()).unwrap();
        assert_eq!(out.flow, flow);
    }

    #[test]
    fn linear_field_is_recovered_inside_a_disc() {
        let (w, h) = (128, 96);
        let truth = linear(w, h);
        let mask = disc(w, h, 64.0, 48.0, 24.0);
        // Corrupt the masked vectors so only completion can recover them.
        let mut flow = truth.clone();
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y, 0) == 1.0 {
                    flow.pixel_mut(x, y).copy_from_slice(&[40.0, -40.0]);
                }
            }
        }
        let out = complete_flow(&flow, &mask, &CompletionParams::default()).unwrap();
        assert!(!out.all_masked);
        for y in 0..h {
            for x in 0..w {
                for c in 0..2 {
                    let err = (out.flow.get(x, y, c) - truth.get(x, y, c)).abs();
                    if mask.get(x, y, 0) == 1.0 {
                        assert!(err < 0.1, "({x},{y}) err {err}");
                    } else {
                        assert_eq!(out.flow.get(x, y, c), flow.get(x, y, c));
                    }
                }
            }
        }
    }

    #[test]
    fn fully_masked_field_becomes_zero_and_is_flagged() {
        let flow = linear(16, 16);
        let out = complete_flow(&flow, &Image::filled(16, 16, 1, 1.0), &CompletionParams::default()).unwrap();
        assert!(out.all_masked);
        assert!(out.flow.data().iter().all(|&v| v == 0.0));
    }
}
