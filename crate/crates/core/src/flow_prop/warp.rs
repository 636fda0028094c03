use crate::error::{Error, Result};
use crate::image::Image;

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // Exact at t == 0 and when a == b.
    a + t * (b - a)
}

/// Integer corners and fractional offsets of a bilinear sample.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Footprint {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub tx: f64,
    pub ty: f64,
}

impl Footprint {
    /// Footprint of `(x, y)` when it lies inside `[0, w-1] x [0, h-1]`.
    pub fn inside(w: usize, h: usize, x: f64, y: f64) -> Option<Self> {
        if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
            return None;
        }
        Some(Self::clamped(w, h, x, y))
    }

    /// Footprint of `(x, y)` after clamping it onto the raster.
    pub fn clamped(w: usize, h: usize, x: f64, y: f64) -> Self {
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, (w - 1) as f64) };
        let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, (h - 1) as f64) };
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (tx, ty) = (x - x0 as f64, y - y0 as f64);
        Self {
            x0,
            y0,
            x1: if tx > 0.0 { (x0 + 1).min(w - 1) } else { x0 },
            y1: if ty > 0.0 { (y0 + 1).min(h - 1) } else { y0 },
            tx,
            ty,
        }
    }

    /// Corners that carry nonzero weight.
    pub fn corners(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let xs = if self.tx > 0.0 { vec![self.x0, self.x1] } else { vec![self.x0] };
        let ys = if self.ty > 0.0 { vec![self.y0, self.y1] } else { vec![self.y0] };
        ys.into_iter().flat_map(move |y| xs.clone().into_iter().map(move |x| (x, y)))
    }

    pub fn sample(&self, img: &Image, out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let top = lerp(img.get(self.x0, self.y0, c), img.get(self.x1, self.y0, c), self.tx);
            let bottom = lerp(img.get(self.x0, self.y1, c), img.get(self.x1, self.y1, c), self.tx);
            *o = lerp(top, bottom, self.ty);
        }
    }
}

/// Backward-warped image and which pixels sampled inside the source.
#[derive(Clone, Debug, PartialEq)]
pub struct Warped {
    pub image: Image,
    pub valid: Vec<bool>,
}

/// `out(x) = image(x + flow(x))`, bilinearly sampled; samples falling outside the image
/// are zero and flagged invalid.
pub fn warp(image: &Image, flow: &Image) -> Result<Warped> {
    image.ensure_same_dims(flow)?;
    if flow.channels() != 2 {
        return Err(Error::dims("2-channel flow", flow.shape_string()));
    }
    let (w, h) = image.dims();
    let mut out = Image::new(w, h, image.channels());
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let f = flow.pixel(x, y);
            if let Some(fp) = Footprint::inside(w, h, x as f64 + f[0], y as f64 + f[1]) {
                fp.sample(image, out.pixel_mut(x, y));
                valid[y * w + x] = true;
            }
        }
    }
    Ok(Warped { image: out, valid })
}
