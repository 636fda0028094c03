//! Orthonormal 2-D Haar analysis and synthesis.
//!
//! Odd-sized inputs are extended by repeating the last row/column, so level `l` bands
//! measure `ceil(H / 2^l) x ceil(W / 2^l)`. Band naming: the first letter is the
//! vertical filter, the second the horizontal one; `LH` therefore responds to vertical
//! edges.

use crate::error::{Error, Result};
use crate::image::Image;

/// Detail bands of one decomposition level.
#[derive(Clone, Debug, PartialEq)]
pub struct DetailBands {
    pub lh: Image,
    pub hl: Image,
    pub hh: Image,
    /// Size of the input to this level, needed to undo edge extension.
    pub source_dims: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPyramid {
    /// Finest level first.
    pub levels: Vec<DetailBands>,
    pub approximation: Image,
}

const NORM: f64 = 0.5;

fn analyze(img: &Image) -> (Image, DetailBands) {
    let (w, h) = img.dims();
    let (hw, hh) = (w.div_ceil(2), h.div_ceil(2));
    let at = |x: usize, y: usize| img.get(x.min(w - 1), y.min(h - 1), 0);
    let mut ll = Image::new(hw, hh, 1);
    let mut lh = Image::new(hw, hh, 1);
    let mut hl = Image::new(hw, hh, 1);
    let mut hhb = Image::new(hw, hh, 1);
    for y in 0..hh {
        for x in 0..hw {
            let a = at(2 * x, 2 * y);
            let b = at(2 * x + 1, 2 * y);
            let c = at(2 * x, 2 * y + 1);
            let d = at(2 * x + 1, 2 * y + 1);
            ll.set(x, y, 0, NORM * (a + b + c + d));
            lh.set(x, y, 0, NORM * (a - b + c - d));
            hl.set(x, y, 0, NORM * (a + b - c - d));
            hhb.set(x, y, 0, NORM * (a - b - c + d));
        }
    }
    (
        ll,
        DetailBands {
            lh,
            hl,
            hh: hhb,
            source_dims: (w, h),
        },
    )
}

fn synthesize(ll: &Image, bands: &DetailBands) -> Image {
    let (w, h) = bands.source_dims;
    let mut out = Image::new(w, h, 1);
    for y in 0..ll.height() {
        for x in 0..ll.width() {
            let s = ll.get(x, y, 0);
            let p = bands.lh.get(x, y, 0);
            let q = bands.hl.get(x, y, 0);
            let r = bands.hh.get(x, y, 0);
            let quad = [
                (2 * x, 2 * y, NORM * (s + p + q + r)),
                (2 * x + 1, 2 * y, NORM * (s - p + q - r)),
                (2 * x, 2 * y + 1, NORM * (s + p - q - r)),
                (2 * x + 1, 2 * y + 1, NORM * (s - p - q + r)),
            ];
            for (qx, qy, v) in quad {
                if qx < w && qy < h {
                    out.set(qx, qy, 0, v);
                }
            }
        }
    }
    out
}

/// Multi-level Haar decomposition of a single-channel image.
pub fn wavelet_decompose(gray: &Image, levels: usize) -> Result<WaveletPyramid> {
    if gray.channels() != 1 {
        return Err(Error::dims("1-channel image", gray.shape_string()));
    }
    if levels == 0 {
        return Err(Error::InvalidParameter("wavelet levels must be at least 1".into()));
    }
    let mut current = gray.clone();
    let mut out = Vec::with_capacity(levels);
    for level in 1..=levels {
        let (w, h) = current.dims();
        if w < 2 || h < 2 {
            return Err(Error::InvalidParameter(format!(
                "{levels} wavelet levels are too many for {}x{} (level {level} input is {w}x{h})",
                gray.width(),
                gray.height()
            )));
        }
        let (ll, bands) = analyze(&current);
        out.push(bands);
        current = ll;
    }
    Ok(WaveletPyramid {
        levels: out,
        approximation: current,
    })
}

/// Inverse of [`wavelet_decompose`].
pub fn wavelet_reconstruct(pyramid: &WaveletPyramid) -> Image {
    pyramid
        .levels
        .iter()
        .rev()
        .fold(pyramid.approximation.clone(), |ll, bands| synthesize(&ll, bands))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_detail() {
        let img = Image::filled(13, 9, 1, 0.7);
        let p = wavelet_decompose(&img, 3).unwrap();
        for bands in &p.levels {
            for band in [&bands.lh, &bands.hl, &bands.hh] {
                assert!(band.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn band_dimensions_round_up() {
        let img = Image::new(13, 9, 1);
        let p = wavelet_decompose(&img, 3).unwrap();
        let dims: Vec<_> = p.levels.iter().map(|b| b.lh.dims()).collect();
        assert_eq!(dims, vec![(7, 5), (4, 3), (2, 2)]);
        assert_eq!(p.approximation.dims(), (2, 2));
    }

    #[test]
    fn too_many_levels_is_an_error() {
        let img = Image::new(8, 3, 1);
        assert!(wavelet_decompose(&img, 2).is_ok());
        assert!(wavelet_decompose(&img, 3).is_err());
        assert!(wavelet_decompose(&img, 0).is_err());
    }

    #[test]
    fn reconstruction_is_perfect() {
        for (w, h) in [(16, 16), (13, 9), (7, 12), (2, 2)] {
            let img = Image::from_fn(w, h, 1, |x, y, _| ((x * 31 + y * 17) % 23) as f64 / 23.0);
            let levels = if w.min(h) >= 8 { 3 } else { 1 };
            let back = wavelet_reconstruct(&wavelet_decompose(&img, levels).unwrap());
            for (a, b) in img.data().iter().zip(back.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn vertical_step_edge_lands_in_lh() {
        // Columns 0 | 1..4 split: the edge falls inside the first 2x2 block column.
        let img = Image::from_fn(4, 4, 1, |x, _, _| if x == 0 { 1.0 } else { 0.0 });
        let p = wavelet_decompose(&img, 1).unwrap();
        let bands = &p.levels[0];
        // Direct Haar filter: LH = (a - b + c - d) / 2 with a = c = 1, b = d = 0.
        for y in 0..2 {
            assert_eq!(bands.lh.get(0, y, 0), 1.0);
            assert_eq!(bands.lh.get(1, y, 0), 0.0);
        }
        assert!(bands.hl.data().iter().all(|&v| v == 0.0));
        assert!(bands.hh.data().iter().all(|&v| v == 0.0));
    }
}
