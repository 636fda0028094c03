use crate::error::{Error, Result};
use crate::image::Image;

/// Reported PSNR for identical inputs.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

/// `10 log10(peak^2 / MSE)` over every sample, capped at [`PSNR_CAP`].
pub fn psnr(pred: &Image, gt: &Image, peak: f64) -> Result<f64> {
    pred.ensure_same_shape(gt)?;
    let n = pred.data().len() as f64;
    let mse = pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    Ok(psnr_from_mse(mse, peak))
}

/// PSNR over the pixels where `mask` is 1; `None` when the mask is empty.
pub fn psnr_masked(pred: &Image, gt: &Image, mask: &Image, peak: f64) -> Result<Option<f64>> {
    pred.ensure_same_shape(gt)?;
    pred.ensure_same_dims(mask)?;
    let c = pred.channels();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, &m) in mask.data().iter().enumerate() {
        if m >= 0.5 {
            for k in 0..c {
                let d = pred.data()[i * c + k] - gt.data()[i * c + k];
                sum += d * d;
            }
            n += c;
        }
    }
    Ok((n > 0).then(|| psnr_from_mse(sum / n as f64, peak)))
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Weighted local means over every fully-inside window ("valid" filtering).
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Local SSIM map, averaged over channels. Entry `(x, y)` belongs to the window
/// centred on pixel `(x + r, y + r)`, with `r` returned next to the map. The
/// window shrinks (keeping odd size) for images smaller than 11 pixels.
pub fn ssim_map(pred: &Image, gt: &Image) -> Result<(Image, usize)> {
    pred.ensure_same_shape(gt)?;
    let (w, h) = pred.dims();
    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    if size == 0 {
        return Err(Error::EmptyInput("image too small for SSIM".into()));
    }
    let taps = gaussian_window(size, SSIM_SIGMA);
    let (c1, c2) = ((K1 * 1.0f64).powi(2), (K2 * 1.0f64).powi(2));
    let channels = pred.channels();
    let (ow, oh) = (w + 1 - size, h + 1 - size);
    let mut acc = vec![0.0; ow * oh];
    for c in 0..channels {
        let x: Vec<f64> = pred.channel(c).into_vec();
        let y: Vec<f64> = gt.channel(c).into_vec();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let (mx, _, _) = filter_valid(&x, w, h, &taps);
        let (my, _, _) = filter_valid(&y, w, h, &taps);
        let (sxx, _, _) = filter_valid(&xx, w, h, &taps);
        let (syy, _, _) = filter_valid(&yy, w, h, &taps);
        let (sxy, _, _) = filter_valid(&xy, w, h, &taps);
        for i in 0..ow * oh {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc[i] += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
    }
    let map = Image::from_vec(ow, oh, 1, acc.into_iter().map(|v| v / channels as f64).collect())?;
    Ok((map, size / 2))
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over channels.
pub fn ssim(pred: &Image, gt: &Image) -> Result<f64> {
    let (map, _) = ssim_map(pred, gt)?;
    Ok(map.data().iter().sum::<f64>() / map.data().len() as f64)
}

/// Mean local SSIM over windows centred on masked pixels; `None` when there are none.
pub fn ssim_masked(pred: &Image, gt: &Image, mask: &Image) -> Result<Option<f64>> {
    pred.ensure_same_dims(mask)?;
    let (map, r) = ssim_map(pred, gt)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..map.height() {
        for x in 0..map.width() {
            if mask.get(x + r, y + r, 0) >= 0.5 {
                sum += map.get(x, y, 0);
                n += 1;
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| ((x * 31 + y * 17 + c * 7) % 23) as f64 / 22.0)
    }

    #[test]
    fn psnr_fixtures() {
        let a = Image::filled(8, 8, 3, 0.5);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP);
        let b = Image::filled(8, 8, 3, 0.4);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let c = Image::filled(8, 8, 3, 0.0);
        assert!((psnr(&a, &c, 1.0).unwrap() - 20.0 * 2.0f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn psnr_is_scale_consistent() {
        let a = texture(9, 9);
        let b = texture(9, 9).map(|v| v * 0.9);
        let p1 = psnr(&a, &b, 1.0).unwrap();
        let p2 = psnr(&a.map(|v| 2.0 * v), &b.map(|v| 2.0 * v), 2.0).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = texture(32, 24);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_inverted_checkerboard_is_low() {
        let a = Image::from_fn(32, 32, 3, |x, y, _| ((x + y) % 2) as f64);
        let b = a.map(|v| 1.0 - v);
        assert!(ssim(&a, &b).unwrap() < 0.2);
    }

    #[test]
    fn ssim_of_constants_is_the_luminance_term() {
        let (u, v) = (0.5, 0.6);
        let c1 = (0.01f64).powi(2);
        let expected = (2.0 * u * v + c1) / (u * u + v * v + c1);
        let s = ssim(&Image::filled(20, 20, 3, u), &Image::filled(20, 20, 3, v)).unwrap();
        assert!((s - expected).abs() < 1e-9, "{s} vs {expected}");
    }

    #[test]
    fn small_images_shrink_the_window() {
        let a = texture(6, 9);
        let (map, r) = ssim_map(&a, &a).unwrap();
        assert_eq!((map.width(), map.height(), r), (2, 5, 2));
    }
}
