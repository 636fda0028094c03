//! Separable resampling: antialiased bicubic reduction, nearest-neighbour reduction and
//! bilinear / nearest enlargement. Borders replicate the edge sample.

use crate::error::{ensure_param, Error, Result};
use crate::image::Image;

/// Keys cubic convolution kernel with `a = -0.5`.
fn cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * A
    } else {
        0.0
    }
}

/// Per-output-sample source indices and normalized weights along one axis.
struct AxisWeights {
    taps: Vec<Vec<(usize, f64)>>,
}

impl AxisWeights {
    fn bicubic_reduce(src_len: usize, factor: usize) -> Self {
        let f = factor as f64;
        let dst_len = src_len / factor;
        let taps = (0..dst_len)
            .map(|i| {
                let center = (i as f64 + 0.5) * f - 0.5;
                let lo = (center - 2.0 * f).floor() as isize;
                let hi = (center + 2.0 * f).ceil() as isize;
                let mut taps: Vec<(usize, f64)> = Vec::new();
                for j in lo..=hi {
                    let w = cubic((j as f64 - center) / f);
                    if w == 0.0 {
                        continue;
                    }
                    let idx = j.clamp(0, src_len as isize - 1) as usize;
                    match taps.iter_mut().find(|(k, _)| *k == idx) {
                        Some(t) => t.1 += w,
                        None => taps.push((idx, w)),
                    }
                }
                let sum: f64 = taps.iter().map(|t| t.1).sum();
                taps.iter_mut().for_each(|t| t.1 /= sum);
                taps
            })
            .collect();
        Self { taps }
    }

    fn bilinear(src_len: usize, dst_len: usize) -> Self {
        let scale = src_len as f64 / dst_len as f64;
        let taps = (0..dst_len)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
                let i0 = pos.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                let t = pos - i0 as f64;
                if t == 0.0 || i0 == i1 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - t), (i1, t)]
                }
            })
            .collect();
        Self { taps }
    }
}

fn apply_separable(img: &Image, horizontal: &AxisWeights, vertical: &AxisWeights) -> Image {
    let c = img.channels();
    let h = img.height();
    let out_w = horizontal.taps.len();
    let out_h = vertical.taps.len();

    let mut rows = Image::new(out_w, h, c);
    for y in 0..h {
        for (x, taps) in horizontal.taps.iter().enumerate() {
            let dst = rows.pixel_mut(x, y);
            for &(sx, wgt) in taps {
                let src = img.pixel(sx, y);
                for k in 0..c {
                    dst[k] += wgt * src[k];
                }
            }
        }
    }

    let mut out = Image::new(out_w, out_h, c);
    for (y, taps) in vertical.taps.iter().enumerate() {
        for x in 0..out_w {
            let dst = out.pixel_mut(x, y);
            for &(sy, wgt) in taps {
                let src = rows.pixel(x, sy);
                for k in 0..c {
                    dst[k] += wgt * src[k];
                }
            }
        }
    }
    out
}

fn check_factor(img: &Image, factor: usize) -> Result<()> {
    ensure_param!(factor >= 1, "downsample factor must be at least 1");
    let (w, h) = img.dims();
    if w % factor != 0 || h % factor != 0 {
        return Err(Error::InvalidParameter(format!(
            "downsample factor {factor} does not divide {w}x{h}"
        )));
    }
    Ok(())
}

/// Antialiased bicubic reduction by an integer factor that divides both dimensions.
pub fn downsample_bicubic(img: &Image, factor: usize) -> Result<Image> {
    check_factor(img, factor)?;
    if factor == 1 {
        return Ok(img.clone());
    }
    let hw = AxisWeights::bicubic_reduce(img.width(), factor);
    let vw = AxisWeights::bicubic_reduce(img.height(), factor);
    Ok(apply_separable(img, &hw, &vw))
}

/// Picks the sample at offset `factor / 2` inside each `factor x factor` block.
pub fn downsample_nearest(img: &Image, factor: usize) -> Result<Image> {
    check_factor(img, factor)?;
    if factor == 1 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let (ow, oh) = (w / factor, h / factor);
    let mut out = Image::new(ow, oh, img.channels());
    for y in 0..oh {
        for x in 0..ow {
            out.pixel_mut(x, y)
                .copy_from_slice(img.pixel(x * factor + factor / 2, y * factor + factor / 2));
        }
    }
    Ok(out)
}

/// Bilinear resize to an arbitrary size (pixel-center aligned).
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Image {
    assert!(width > 0 && height > 0 && img.width() > 0 && img.height() > 0);
    let hw = AxisWeights::bilinear(img.width(), width);
    let vw = AxisWeights::bilinear(img.height(), height);
    apply_separable(img, &hw, &vw)
}

/// Replicates every sample into a `factor x factor` block.
pub fn upsample_nearest(img: &Image, factor: usize) -> Image {
    let (w, h) = img.dims();
    let mut out = Image::new(w * factor, h * factor, img.channels());
    for y in 0..h * factor {
        for x in 0..w * factor {
            out.pixel_mut(x, y).copy_from_slice(img.pixel(x / factor, y / factor));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_the_working_resolution() {
        let img = Image::filled(432, 240, 3, 0.25);
        let out = downsample_bicubic(&img, 2).unwrap();
        assert_eq!(out.dims(), (216, 120));
    }

    #[test]
    fn constant_survives_every_filter() {
        let img = Image::filled(24, 12, 2, 0.3);
        for factor in [1, 2, 3, 4, 6, 12] {
            for out in [
                downsample_bicubic(&img, factor).unwrap(),
                downsample_nearest(&img, factor).unwrap(),
            ] {
                assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-12), "factor {factor}");
            }
        }
        let up = resize_bilinear(&img, 50, 31);
        assert!(up.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn factor_one_is_identity() {
        let img = Image::from_fn(5, 4, 1, |x, y, _| (x * y) as f64);
        assert_eq!(downsample_bicubic(&img, 1).unwrap(), img);
        assert_eq!(downsample_nearest(&img, 1).unwrap(), img);
    }

    #[test]
    fn indivisible_factor_is_rejected() {
        let img = Image::new(5, 4, 1);
        assert!(downsample_bicubic(&img, 2).is_err());
        assert!(downsample_nearest(&img, 2).is_err());
    }

    #[test]
    fn nearest_keeps_only_existing_values() {
        let img = Image::from_fn(8, 8, 1, |x, y, _| [0.0, 3.0, 7.0][(x + y) % 3]);
        let out = downsample_nearest(&img, 2).unwrap();
        assert!(out.data().iter().all(|v| [0.0, 3.0, 7.0].contains(v)));
    }

    #[test]
    fn bilinear_reproduces_linear_ramp_in_interior() {
        let img = Image::from_fn(8, 8, 1, |x, _, _| x as f64);
        let up = resize_bilinear(&img, 16, 16);
        // output x maps to source (x + 0.5) / 2 - 0.5
        for x in 1..15 {
            let expected = (x as f64 + 0.5) / 2.0 - 0.5;
            assert!((up.get(x, 3, 0) - expected).abs() < 1e-12);
        }
    }
}
