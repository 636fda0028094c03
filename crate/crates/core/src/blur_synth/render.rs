//! Depth-banded focal blur.
//!
//! Pixels are grouped into layers by kernel size and by which side of the focal depth
//! they lie on. Each blurred layer is filtered on its own support (normalized
//! convolution, so no colour from other layers leaks in), then layers are composited
//! far to near: the soft edge of a nearer blurred layer spills over farther pixels, but
//! nothing spills onto pixels nearer than itself. In-focus pixels are copied unchanged
//! unless a nearer defocused layer overlaps them.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::image::Image;

use super::kernel::gaussian_taps;
use super::model::{blur_size_at_depth, DEPTH_MAX, DEPTH_MIN};

/// Parameters of one blur rendering, fixed for a frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurParams {
    pub focal_range: f64,
    pub n_max: usize,
    pub sigma: f64,
}

/// A blurred frame and the kernel size applied at each pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FocalBlur {
    pub frame: Image,
    pub blur_map: Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    Near,
    Far,
}

/// Sort key ordering layers from farthest to nearest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct LayerKey(i64);

impl LayerKey {
    fn new(side: Side, size: usize) -> Self {
        let size = size as i64;
        match (side, size) {
            (_, 0) => LayerKey(0),
            (Side::Far, s) => LayerKey(-s),
            (Side::Near, s) => LayerKey(s),
        }
    }
}

struct Rect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Rect {
    fn width(&self) -> usize {
        self.x1 - self.x0
    }
    fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

/// Premultiplied colour and coverage of one layer after blurring, over a sub-rectangle.
struct BlurredLayer {
    rect: Rect,
    /// `[r, g, b, alpha]` per pixel of `rect`.
    data: Vec<[f64; 4]>,
}

impl BlurredLayer {
    fn at(&self, x: usize, y: usize) -> Option<&[f64; 4]> {
        let r = &self.rect;
        if x < r.x0 || x >= r.x1 || y < r.y0 || y >= r.y1 {
            return None;
        }
        Some(&self.data[(y - r.y0) * r.width() + (x - r.x0)])
    }
}

fn blur_layer(frame: &Image, members: &[usize], taps: &[f64]) -> BlurredLayer {
    let (w, h) = frame.dims();
    let radius = taps.len() / 2;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for &i in members {
        let (x, y) = (i % w, i / w);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x + 1);
        y1 = y1.max(y + 1);
    }
    let rect = Rect {
        x0: x0.saturating_sub(radius),
        y0: y0.saturating_sub(radius),
        x1: (x1 + radius).min(w),
        y1: (y1 + radius).min(h),
    };
    let (rw, rh) = (rect.width(), rect.height());

    let mut src = vec![[0.0f64; 4]; rw * rh];
    for &i in members {
        let (x, y) = (i % w, i / w);
        let p = frame.pixel(x, y);
        src[(y - rect.y0) * rw + (x - rect.x0)] = [p[0], p[1], p[2], 1.0];
    }

    // Zero padding outside the rectangle: everything there has zero coverage.
    let mut rows = vec![[0.0f64; 4]; rw * rh];
    for y in 0..rh {
        for x in 0..rw {
            let mut acc = [0.0; 4];
            for (k, &t) in taps.iter().enumerate() {
                let sx = x as isize + k as isize - radius as isize;
                if sx < 0 || sx >= rw as isize {
                    continue;
                }
                let s = &src[y * rw + sx as usize];
                for c in 0..4 {
                    acc[c] += t * s[c];
                }
            }
            rows[y * rw + x] = acc;
        }
    }
    let mut data = vec![[0.0f64; 4]; rw * rh];
    for y in 0..rh {
        for x in 0..rw {
            let mut acc = [0.0; 4];
            for (k, &t) in taps.iter().enumerate() {
                let sy = y as isize + k as isize - radius as isize;
                if sy < 0 || sy >= rh as isize {
                    continue;
                }
                let s = &rows[sy as usize * rw + x];
                for c in 0..4 {
                    acc[c] += t * s[c];
                }
            }
            data[y * rw + x] = acc;
        }
    }
    BlurredLayer { rect, data }
}

/// Kernel size per pixel for a given focal depth.
pub fn blur_map_for(depth: &Image, focal: f64, params: &BlurParams) -> Result<Image> {
    let mut map = Image::new(depth.width(), depth.height(), 1);
    for (dst, &d) in map.data_mut().iter_mut().zip(depth.data()) {
        *dst = blur_size_at_depth(d, focal, params.focal_range, params.n_max, DEPTH_MIN, DEPTH_MAX)? as f64;
    }
    Ok(map)
}

/// Renders focal blur for one frame with the focal plane at depth `focal`.
pub fn render_focal_blur(frame: &Image, depth: &Image, focal: f64, params: &BlurParams) -> Result<FocalBlur> {
    if frame.channels() != 3 || depth.channels() != 1 {
        return Err(Error::dims("RGB frame with 1-channel depth", format!("{} / {}", frame.shape_string(), depth.shape_string())));
    }
    frame.ensure_same_dims(depth)?;
    let blur_map = blur_map_for(depth, focal, params)?;
    let w = frame.width();

    let mut layers: BTreeMap<LayerKey, (usize, Vec<usize>)> = BTreeMap::new();
    for (i, (&size, &d)) in blur_map.data().iter().zip(depth.data()).enumerate() {
        let size = size as usize;
        let side = if d < focal { Side::Near } else { Side::Far };
        layers.entry(LayerKey::new(side, size)).or_insert_with(|| (size, Vec::new())).1.push(i);
    }

    let mut out = frame.clone();
    if layers.len() == 1 && layers.contains_key(&LayerKey(0)) {
        return Ok(FocalBlur { frame: out, blur_map });
    }

    // Rank of the layer each pixel belongs to; smaller rank is farther away.
    let mut rank_of = vec![0usize; frame.pixel_count()];
    let mut blurred: Vec<(usize, BlurredLayer)> = Vec::new();
    for (rank, (_, (size, members))) in layers.iter().enumerate() {
        for &i in members {
            rank_of[i] = rank;
        }
        if *size == 0 {
            continue;
        }
        let taps = gaussian_taps(*size, params.sigma)?;
        let layer = blur_layer(frame, members, &taps);
        for &i in members {
            let (x, y) = (i % w, i / w);
            let v = layer.at(x, y).expect("member inside its own rectangle");
            let px = out.pixel_mut(x, y);
            for c in 0..3 {
                px[c] = v[c] / v[3];
            }
        }
        blurred.push((rank, layer));
    }

    for (rank, layer) in &blurred {
        let r = &layer.rect;
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                if rank_of[y * w + x] >= *rank {
                    continue;
                }
                let v = layer.at(x, y).expect("inside rectangle");
                let alpha = v[3];
                if alpha <= 0.0 {
                    continue;
                }
                let px = out.pixel_mut(x, y);
                for c in 0..3 {
                    px[c] = (v[c] + (1.0 - alpha) * px[c]).clamp(0.0, 1.0);
                }
            }
        }
    }

    Ok(FocalBlur { frame: out, blur_map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blur_synth::kernel::gaussian_kernel;

    const PARAMS: BlurParams = BlurParams {
        focal_range: 100.0,
        n_max: 7,
        sigma: 5.0,
    };

    fn texture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| {
            let v = ((x * 37 + y * 91 + c * 13) % 101) as f64 / 100.0;
            0.1 + 0.8 * v
        })
    }

    #[test]
    fn all_in_focus_is_identity() {
        let frame = texture(20, 12);
        let depth = Image::filled(20, 12, 1, 30.0);
        let out = render_focal_blur(&frame, &depth, 0.0, &PARAMS).unwrap();
        assert_eq!(out.frame, frame);
        assert!(out.blur_map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_frame_stays_constant() {
        let frame = Image::filled(24, 16, 3, 0.4);
        let depth = Image::from_fn(24, 16, 1, |x, y, _| ((x * 11 + y * 7) % 256) as f64);
        for focal in [0.0, 100.0, 255.0] {
            let out = render_focal_blur(&frame, &depth, focal, &PARAMS).unwrap();
            assert!(out.frame.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
        }
    }

    #[test]
    fn mismatched_depth_is_rejected() {
        let frame = texture(8, 8);
        let depth = Image::new(8, 7, 1);
        assert!(render_focal_blur(&frame, &depth, 0.0, &PARAMS).is_err());
    }

    #[test]
    fn far_band_interior_matches_direct_convolution() {
        let (w, h) = (40, 24);
        let frame = texture(w, h);
        let depth = Image::from_fn(w, h, 1, |x, _, _| if x < w / 2 { 0.0 } else { 255.0 });
        let out = render_focal_blur(&frame, &depth, 0.0, &PARAMS).unwrap();
        let k = gaussian_kernel(7, 5.0).unwrap();
        for y in 3..h - 3 {
            for x in w / 2 + 3..w - 3 {
                for c in 0..3 {
                    let mut acc = 0.0;
                    for dy in -3isize..=3 {
                        for dx in -3isize..=3 {
                            let sx = (x as isize + dx) as usize;
                            let sy = (y as isize + dy) as usize;
                            acc += k.at(dx, dy) * frame.get(sx, sy, c);
                        }
                    }
                    assert!((out.frame.get(x, y, c) - acc).abs() < 1e-6);
                }
            }
            for x in 0..w / 2 {
                assert_eq!(out.frame.pixel(x, y), frame.pixel(x, y));
            }
        }
    }

    #[test]
    fn sharp_foreground_does_not_leak_into_blurred_background() {
        // Left half: black in-focus foreground. Right half: white far background.
        let (w, h) = (30, 10);
        let frame = Image::from_fn(w, h, 3, |x, _, _| if x < 15 { 0.0 } else { 1.0 });
        let depth = Image::from_fn(w, h, 1, |x, _, _| if x < 15 { 0.0 } else { 255.0 });
        let out = render_focal_blur(&frame, &depth, 0.0, &PARAMS).unwrap();
        for y in 0..h {
            for x in 15..w {
                assert!((out.frame.get(x, y, 0) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn defocused_foreground_spills_over_sharp_background() {
        let (w, h) = (30, 10);
        let frame = Image::from_fn(w, h, 3, |x, _, _| if x < 15 { 0.0 } else { 1.0 });
        // Focus on the far right half; the near left half is blurred.
        let depth = Image::from_fn(w, h, 1, |x, _, _| if x < 15 { 0.0 } else { 255.0 });
        let out = render_focal_blur(&frame, &depth, 255.0, &PARAMS).unwrap();
        assert!(out.frame.get(15, 5, 0) < 1.0);
        assert_eq!(out.frame.get(25, 5, 0), 1.0);
    }
}
