use crate::error::{Error, Result};
use crate::image::Image;

use super::warp::Footprint;

/// Per-pixel forward-backward round-trip error, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyMap {
    width: usize,
    height: usize,
    errors: Vec<f64>,
}

impl ConsistencyMap {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.errors[y * self.width + x]
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }
}

/// `e(x) = |F_fwd(x) + F_bwd(x + F_fwd(x))|`, sampling the backward field bilinearly with
/// edge clamping.
pub fn fb_consistency(forward: &Image, backward: &Image) -> Result<ConsistencyMap> {
    if forward.channels() != 2 || backward.channels() != 2 {
        return Err(Error::dims(
            "2-channel flows",
            format!("{} / {}", forward.shape_string(), backward.shape_string()),
        ));
    }
    forward.ensure_same_dims(backward)?;
    let (w, h) = forward.dims();
    let mut errors = Vec::with_capacity(w * h);
    let mut back = [0.0; 2];
    for y in 0..h {
        for x in 0..w {
            let f = forward.pixel(x, y);
            Footprint::clamped(w, h, x as f64 + f[0], y as f64 + f[1]).sample(backward, &mut back);
            errors.push((f[0] + back[0]).hypot(f[1] + back[1]));
        }
    }
    Ok(ConsistencyMap {
        width: w,
        height: h,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: usize, h: usize, dx: f64, dy: f64) -> Image {
        Image::from_fn(w, h, 2, |_, _, c| if c == 0 { dx } else { dy })
    }

    #[test]
    fn exact_inverse_translation_is_consistent() {
        let e = fb_consistency(&constant(10, 8, 2.5, -1.0), &constant(10, 8, -2.5, 1.0)).unwrap();
        assert!(e.errors().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_backward_flow_reports_forward_magnitude() {
        let e = fb_consistency(&constant(6, 5, 1.0, 0.0), &Image::new(6, 5, 2)).unwrap();
        assert!(e.errors().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn errors_are_never_negative() {
        let fwd = Image::from_fn(12, 9, 2, |x, y, c| ((x * 7 + y * 3 + c) % 11) as f64 - 5.0);
        let bwd = Image::from_fn(12, 9, 2, |x, y, c| ((x * 5 + y * 11 + c) % 13) as f64 - 6.3);
        let e = fb_consistency(&fwd, &bwd).unwrap();
        assert!(e.errors().iter().all(|&v| v >= 0.0));
    }
}
