//! Inference-time blur maps from wavelet detail energy per depth, and their
//! binarization into focus masks.

mod estimate;
mod wavelet;

pub use estimate::{
    depth_bin, estimate_blur_map, estimate_blur_maps, sharpness_map, DEFAULT_DEPTH_BINS, DEFAULT_WAVELET_LEVELS,
};
pub use wavelet::{wavelet_decompose, wavelet_reconstruct, DetailBands, WaveletPyramid};

use crate::error::Result;
use crate::image::{BlurMapSequence, Image, MaskSequence};

/// Tolerance used when binarizing estimated maps scaled to `[0, 1]`.
pub const ESTIMATED_MAP_TOLERANCE: f64 = 0.02;

/// Marks every pixel as blurred (1) unless it holds the lowest value of the map, within
/// `tolerance`.
pub fn binarize(map: &Image, tolerance: f64) -> Image {
    let lowest = map.data().iter().copied().fold(f64::INFINITY, f64::min);
    binarize_against(map, lowest, tolerance)
}

/// Like [`binarize`] but with the in-focus level given explicitly. Kernel-size maps use
/// 0 here so a frame that is blurred everywhere is masked everywhere.
pub fn binarize_against(map: &Image, lowest: f64, tolerance: f64) -> Image {
    map.map(|v| if v - lowest <= tolerance { 0.0 } else { 1.0 })
}

pub fn binarize_sequence(maps: &BlurMapSequence, tolerance: f64) -> Result<MaskSequence> {
    MaskSequence::new(maps.iter().map(|m| binarize(m, tolerance)).collect())
}
