use rayon::prelude::*;

use crate::blur_synth::DEPTH_MAX;
use crate::error::{Error, Result};
use crate::image::{BlurMapSequence, DepthSequence, FrameSequence, Image};

use super::wavelet::wavelet_decompose;

pub const DEFAULT_WAVELET_LEVELS: usize = 3;
pub const DEFAULT_DEPTH_BINS: usize = 32;

/// Per-pixel sum of absolute Haar detail coefficients over all levels and bands, each
/// coefficient spread over the `2^l x 2^l` block it summarizes.
pub fn sharpness_map(gray: &Image, levels: usize) -> Result<Image> {
    let pyramid = wavelet_decompose(gray, levels)?;
    let (w, h) = gray.dims();
    let mut sharp = Image::new(w, h, 1);
    for (l, bands) in pyramid.levels.iter().enumerate() {
        let scale = 1usize << (l + 1);
        for y in 0..h {
            for x in 0..w {
                let (bx, by) = (x / scale, y / scale);
                let e = bands.lh.get(bx, by, 0).abs() + bands.hl.get(bx, by, 0).abs() + bands.hh.get(bx, by, 0).abs();
                let v = sharp.get(x, y, 0) + e;
                sharp.set(x, y, 0, v);
            }
        }
    }
    Ok(sharp)
}

/// Index of the equal-width bin over `[0, 255]` holding `depth`.
pub fn depth_bin(depth: f64, bins: usize) -> usize {
    ((depth / DEPTH_MAX * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Estimated blurriness in `[0, 1]` per pixel.
///
/// Wavelet detail energy is averaged per depth bin; a pixel's blurriness is how far its
/// bin's mean sharpness falls below the sharpest bin, divided by the spread between the
/// sharpest and bluntest occupied bins. A frame with no detail energy at all, or a
/// single occupied bin, reports zero everywhere.
pub fn estimate_blur_map(frame: &Image, depth: &Image, levels: usize, depth_bins: usize) -> Result<Image> {
    frame.ensure_same_dims(depth)?;
    if depth.channels() != 1 {
        return Err(Error::dims("1-channel depth", depth.shape_string()));
    }
    if depth_bins == 0 {
        return Err(Error::InvalidParameter("depth bins must be at least 1".into()));
    }
    let sharp = sharpness_map(&frame.luma(), levels)?;

    let mut sums = vec![0.0; depth_bins];
    let mut counts = vec![0usize; depth_bins];
    let bins: Vec<usize> = depth.data().iter().map(|&d| depth_bin(d, depth_bins)).collect();
    for (&b, &s) in bins.iter().zip(sharp.data()) {
        sums[b] += s;
        counts[b] += 1;
    }
    let global_mean = sharp.data().iter().sum::<f64>() / sharp.pixel_count().max(1) as f64;
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { global_mean } else { s / n as f64 })
        .collect();

    let occupied = || means.iter().zip(&counts).filter(|(_, &n)| n > 0).map(|(&m, _)| m);
    let best = occupied().fold(f64::NEG_INFINITY, f64::max);
    let worst = occupied().fold(f64::INFINITY, f64::min);
    let spread = best - worst;

    let mut out = Image::new(frame.width(), frame.height(), 1);
    if spread > 0.0 {
        for (dst, &b) in out.data_mut().iter_mut().zip(&bins) {
            *dst = (best - means[b]) / spread;
        }
    }
    Ok(out)
}

/// Runs [`estimate_blur_map`] over a sequence, in parallel across frames.
pub fn estimate_blur_maps(
    frames: &FrameSequence,
    depths: &DepthSequence,
    levels: usize,
    depth_bins: usize,
) -> Result<BlurMapSequence> {
    if frames.len() != depths.len() {
        return Err(Error::dims(format!("{} depth maps", frames.len()), depths.len()));
    }
    let maps = frames
        .frames()
        .par_iter()
        .zip(depths.frames().par_iter())
        .map(|(f, d)| estimate_blur_map(f, d, levels, depth_bins))
        .collect::<Result<Vec<_>>>()?;
    BlurMapSequence::new(maps)
}
