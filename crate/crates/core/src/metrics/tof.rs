//! Temporal consistency: compare the motion of a predicted sequence with the motion of
//! the reference sequence, both estimated by the same deterministic block matcher.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Coarse-to-fine integer block matching on luma.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockMatcher {
    pub block: usize,
    pub levels: usize,
    /// Full search radius at the coarsest level, in that level's pixels.
    pub coarse_radius: i64,
    /// Refinement radius at every finer level.
    pub refine_radius: i64,
    /// Weight of the squared displacement added to the mean absolute difference.
    pub smoothness: f64,
}

impl Default for BlockMatcher {
    fn default() -> Self {
        Self {
            block: 8,
            levels: 3,
            coarse_radius: 3,
            refine_radius: 2,
            smoothness: 1e-3,
        }
    }
}

struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn at(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.w as i64 - 1) as usize;
        let y = y.clamp(0, self.h as i64 - 1) as usize;
        self.v[y * self.w + x]
    }

    fn half(&self) -> Plane {
        let (w, h) = (self.w.div_ceil(2), self.h.div_ceil(2));
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let s = self.at(2 * x, 2 * y) + self.at(2 * x + 1, 2 * y) + self.at(2 * x, 2 * y + 1) + self.at(2 * x + 1, 2 * y + 1);
                v.push(s / 4.0);
            }
        }
        Plane { w, h, v }
    }
}

impl BlockMatcher {
    fn pyramid(&self, img: &Image) -> Vec<Plane> {
        let luma = img.luma();
        let mut levels = vec![Plane {
            w: luma.width(),
            h: luma.height(),
            v: luma.into_vec(),
        }];
        while levels.len() < self.levels.max(1) {
            let next = levels.last().expect("non-empty").half();
            levels.push(next);
        }
        levels
    }

    fn cost(&self, a: &Plane, b: &Plane, x0: i64, y0: i64, x1: i64, y1: i64, dx: i64, dy: i64) -> f64 {
        let mut sad = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                sad += (a.at(x, y) - b.at(x + dx, y + dy)).abs();
            }
        }
        let n = ((x1 - x0) * (y1 - y0)).max(1) as f64;
        sad / n + self.smoothness * (dx * dx + dy * dy) as f64
    }

    /// Dense motion from `a` to `b`: every pixel carries its block's displacement.
    pub fn estimate(&self, a: &Image, b: &Image) -> Result<Image> {
        a.ensure_same_shape(b)?;
        if self.block == 0 {
            return Err(Error::InvalidParameter("block size must be positive".into()));
        }
        let (w, h) = a.dims();
        let pa = self.pyramid(a);
        let pb = self.pyramid(b);
        let (bw, bh) = (w.div_ceil(self.block), h.div_ceil(self.block));
        let mut field = vec![(0i64, 0i64); bw * bh];
        for level in (0..pa.len()).rev() {
            let (la, lb) = (&pa[level], &pb[level]);
            let coarsest = level + 1 == pa.len();
            let radius = if coarsest { self.coarse_radius } else { self.refine_radius };
            field = field
                .par_iter()
                .enumerate()
                .map(|(i, &(gx, gy))| {
                    let (cx, cy) = if coarsest { (0, 0) } else { (2 * gx, 2 * gy) };
                    let (bx, by) = ((i % bw) * self.block, (i / bw) * self.block);
                    // A block-sized support at every level, centred on the block, so
                    // coarse levels see a wider context.
                    let half = self.block as i64 / 2;
                    let cxl = ((bx + (self.block.min(w - bx)) / 2) >> level) as i64;
                    let cyl = ((by + (self.block.min(h - by)) / 2) >> level) as i64;
                    let (x0, x1) = (cxl - half, cxl - half + self.block as i64);
                    let (y0, y1) = (cyl - half, cyl - half + self.block as i64);
                    // Search around the propagated guess and around zero motion.
                    let mut best = (cx, cy);
                    let mut best_cost = f64::INFINITY;
                    for (ox, oy) in [(cx, cy), (0, 0)] {
                        for dy in oy - radius..=oy + radius {
                            for dx in ox - radius..=ox + radius {
                                let c = self.cost(la, lb, x0, y0, x1, y1, dx, dy);
                                if c < best_cost {
                                    best_cost = c;
                                    best = (dx, dy);
                                }
                            }
                        }
                    }
                    best
                })
                .collect();
        }
        Ok(Image::from_fn(w, h, 2, |x, y, c| {
            let (dx, dy) = field[(y / self.block) * bw + x / self.block];
            if c == 0 { dx as f64 } else { dy as f64 }
        }))
    }
}

/// Mean L1 distance between the motion of consecutive predicted frames and that of
/// consecutive reference frames, averaged over pixels and frame pairs.
pub fn tof(pred: &[Image], gt: &[Image]) -> Result<f64> {
    tof_with(pred, gt, &BlockMatcher::default())
}

pub fn tof_with(pred: &[Image], gt: &[Image], matcher: &BlockMatcher) -> Result<f64> {
    super::loss::check_pairs(pred, gt)?;
    if pred.len() < 2 {
        return Err(Error::InvalidParameter("tOF needs at least two frames".into()));
    }
    let per_pair = (0..pred.len() - 1)
        .into_par_iter()
        .map(|t| {
            let fp = matcher.estimate(&pred[t], &pred[t + 1])?;
            let fg = matcher.estimate(&gt[t], &gt[t + 1])?;
            let n = fp.pixel_count() as f64;
            let total: f64 = fp
                .data()
                .chunks_exact(2)
                .zip(fg.data().chunks_exact(2))
                .map(|(a, b)| (a[0] - b[0]).abs() + (a[1] - b[1]).abs())
                .sum();
            Ok(total / n)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_pair.iter().sum::<f64>() / per_pair.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hash(x: i64, y: i64) -> f64 {
        let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        h ^= h >> 29;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 32;
        (h % 1000) as f64 / 999.0
    }

    /// Value noise on a 3-pixel lattice, sampled `shift` pixels to the right.
    fn scene(w: usize, h: usize, shift: f64) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| {
            let u = (x as f64 + shift) / 3.0;
            let v = y as f64 / 3.0;
            let (i, j) = (u.floor() as i64, v.floor() as i64);
            let (fu, fv) = (u - i as f64, v - j as f64);
            let at = |a: i64, b: i64| hash(a + 7 * c as i64, b);
            let top = at(i, j) * (1.0 - fu) + at(i + 1, j) * fu;
            let bottom = at(i, j + 1) * (1.0 - fu) + at(i + 1, j + 1) * fu;
            top * (1.0 - fv) + bottom * fv
        })
    }

    #[test]
    fn recovers_integer_translation() {
        let a = scene(64, 48, 0.0);
        let b = scene(64, 48, -3.0);
        let flow = BlockMatcher::default().estimate(&a, &b).unwrap();
        // Interior blocks away from the replicated border.
        for y in 8..40 {
            for x in 8..48 {
                assert_eq!(flow.pixel(x, y), &[3.0, 0.0], "({x},{y})");
            }
        }
    }

    #[test]
    fn identical_sequences_score_zero() {
        let seq: Vec<Image> = (0..4).map(|t| scene(40, 32, t as f64)).collect();
        assert_eq!(tof(&seq, &seq).unwrap(), 0.0);
    }

    #[test]
    fn needs_two_frames() {
        let one = [scene(16, 16, 0.0)];
        assert!(tof(&one, &one).is_err());
    }
}
