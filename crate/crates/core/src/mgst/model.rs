//! End-to-end forward pass on a low-resolution clip.
//!
//! The learned encoder and decoder are replaced by fixed stand-ins: the clip, its focus
//! masks, depth (scaled to `[0, 1]`) and blur maps are stacked as six channels, reduced
//! by bicubic downsampling and mapped per pixel to the feature channels. After the
//! transformer blocks, per-pixel projections and pixel shuffles bring the features to
//! twice the input resolution, where they are added to a bilinear upsampling of the clip.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{BlurMapSequence, DepthSequence, FrameSequence, Image, MaskSequence};
use crate::resample::{downsample_bicubic, resize_bilinear};

use super::attention::{block_stack_forward, BlockStats};
use super::geometry::{soft_comp, soft_split, PatchGrid, Volume};
use super::mask::{build_query_mask, QueryMask};
use super::shuffle::pixel_shuffle;
use super::weights::{Linear, ModelWeights, INPUT_CHANNELS};

pub struct ClipInput<'a> {
    pub frames: &'a FrameSequence,
    pub masks: &'a MaskSequence,
    pub depth: &'a DepthSequence,
    pub blur_maps: &'a BlurMapSequence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub frames: FrameSequence,
    pub query_mask: QueryMask,
    pub blocks: Vec<BlockStats>,
}

impl ForwardOutput {
    pub fn skipped_windows(&self) -> usize {
        self.blocks.iter().map(|b| b.skipped_windows).sum()
    }

    pub fn active_windows(&self) -> usize {
        self.blocks.iter().map(|b| b.active_windows.len()).sum()
    }
}

fn per_pixel(input: &Volume, layer: &Linear) -> Volume {
    let mut out = Volume::zeros(input.frames, input.height, input.width, layer.output);
    out.data
        .par_chunks_mut(layer.output)
        .zip(input.data.par_chunks(input.channels))
        .for_each(|(o, x)| layer.apply(x, o));
    out
}

fn per_token(grid: &PatchGrid, layer: &Linear) -> PatchGrid {
    let mut out = PatchGrid::zeros(grid.frames, grid.rows, grid.cols, layer.output);
    out.data
        .par_chunks_mut(layer.output)
        .zip(grid.data.par_chunks(grid.dim))
        .for_each(|(o, x)| layer.apply(x, o));
    out
}

fn stack_inputs(input: &ClipInput<'_>, factor: usize) -> Result<Volume> {
    let (w, h) = input.frames.dims();
    input.masks.ensure_dims((w, h))?;
    input.depth.ensure_dims((w, h))?;
    input.blur_maps.ensure_dims((w, h))?;
    let t = input.frames.len();
    for (name, len) in [("masks", input.masks.len()), ("depth maps", input.depth.len()), ("blur maps", input.blur_maps.len())] {
        if len != t {
            return Err(Error::dims(format!("{t} {name}"), len));
        }
    }
    if w % factor != 0 || h % factor != 0 {
        return Err(Error::InvalidParameter(format!("{w}x{h} clip is not divisible by the encoder factor {factor}")));
    }
    let reduced = (0..t)
        .into_par_iter()
        .map(|i| {
            let f = &input.frames.frames()[i];
            let m = &input.masks.frames()[i];
            let d = &input.depth.frames()[i];
            let b = &input.blur_maps.frames()[i];
            let stacked = Image::from_fn(w, h, INPUT_CHANNELS, |x, y, c| match c {
                0..=2 => f.get(x, y, c),
                3 => m.get(x, y, 0),
                4 => d.get(x, y, 0) / 255.0,
                _ => b.get(x, y, 0),
            });
            if factor == 1 {
                Ok(stacked)
            } else {
                downsample_bicubic(&stacked, factor)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let data = reduced.into_iter().flat_map(Image::into_vec).collect();
    Volume::from_vec(t, h / factor, w / factor, INPUT_CHANNELS, data)
}

/// Runs the clip through encoder, transformer blocks and decoder. Output frames have
/// twice the input width and height.
pub fn forward(weights: &ModelWeights, input: &ClipInput<'_>) -> Result<ForwardOutput> {
    let config = &weights.config;
    config.validate()?;
    let e = config.encoder_factor;
    let features = per_pixel(&stack_inputs(input, e)?, &weights.encoder);
    let (fh, fw) = (features.height, features.width);

    let patches = soft_split(&features, &config.patch)?;
    let tokens = per_token(&patches, &weights.embed);
    let query_mask = build_query_mask(input.blur_maps, &config.patch, e)?;
    let (tokens, blocks) = block_stack_forward(&tokens, &query_mask, weights)?;
    let patches = per_token(&tokens, &weights.unembed);
    let mut x = soft_comp(&patches, &config.patch, fh, fw)?;
    for stage in &weights.decoder {
        x = pixel_shuffle(&per_pixel(&x, stage), 2)?;
    }

    let (w, h) = input.frames.dims();
    debug_assert_eq!((x.height, x.width, x.channels), (2 * h, 2 * w, 3));
    let frames = input
        .frames
        .frames()
        .par_iter()
        .enumerate()
        .map(|(t, frame)| {
            let mut up = resize_bilinear(frame, 2 * w, 2 * h);
            for (o, r) in up.data_mut().iter_mut().zip(x.frame(t)) {
                *o = (*o + r).clamp(0.0, 1.0);
            }
            up
        })
        .collect();
    Ok(ForwardOutput {
        frames: FrameSequence::new(frames)?,
        query_mask,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mgst::weights::MgstConfig;

    fn small() -> MgstConfig {
        MgstConfig {
            embed_dim: 16,
            heads: 4,
            blocks: 2,
            feature_channels: 4,
            ..MgstConfig::default()
        }
    }

    fn clip(t: usize, w: usize, h: usize, blur: f64) -> (FrameSequence, MaskSequence, DepthSequence, BlurMapSequence) {
        let frames = (0..t)
            .map(|i| Image::from_fn(w, h, 3, |x, y, c| ((x * 3 + y * 5 + c + i) % 17) as f64 / 16.0))
            .collect();
        let masks = vec![Image::filled(w, h, 1, if blur > 0.0 { 1.0 } else { 0.0 }); t];
        let depth = vec![Image::from_fn(w, h, 1, |x, _, _| x as f64); t];
        let maps = vec![Image::filled(w, h, 1, blur); t];
        (
            FrameSequence::new(frames).unwrap(),
            MaskSequence::new(masks).unwrap(),
            DepthSequence::new(depth).unwrap(),
            BlurMapSequence::new(maps).unwrap(),
        )
    }

    #[test]
    fn output_doubles_resolution() {
        let w = ModelWeights::seeded(&small(), 1).unwrap();
        let (f, m, d, b) = clip(4, 32, 24, 3.0);
        let out = forward(&w, &ClipInput { frames: &f, masks: &m, depth: &d, blur_maps: &b }).unwrap();
        assert_eq!(out.frames.len(), 4);
        assert_eq!(out.frames.dims(), (64, 48));
        assert_eq!(out.skipped_windows(), 0);
    }

    #[test]
    fn in_focus_clip_skips_every_window() {
        let w = ModelWeights::seeded(&small(), 1).unwrap();
        let (f, m, d, b) = clip(2, 32, 24, 0.0);
        let out = forward(&w, &ClipInput { frames: &f, masks: &m, depth: &d, blur_maps: &b }).unwrap();
        assert_eq!(out.active_windows(), 0);
    }

    #[test]
    fn encoder_factor_one_also_doubles() {
        let config = MgstConfig {
            encoder_factor: 1,
            ..small()
        };
        let w = ModelWeights::seeded(&config, 1).unwrap();
        let (f, m, d, b) = clip(2, 20, 14, 5.0);
        let out = forward(&w, &ClipInput { frames: &f, masks: &m, depth: &d, blur_maps: &b }).unwrap();
        assert_eq!(out.frames.dims(), (40, 28));
    }
}
