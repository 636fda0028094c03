//! Deterministic synthetic scenes for tests, demos and the bundled CLI fixture.

use crate::blur_synth::{FocusSchedule, DEFAULT_SIGMA};
use crate::error::Result;
use crate::image::{DepthSequence, FrameSequence, Image};

fn hash(x: i64, y: i64, seed: u64) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 32;
    (h % 10_007) as f64 / 10_006.0
}

fn value_noise(x: f64, y: f64, cell: f64, seed: u64) -> f64 {
    let (u, v) = (x / cell, y / cell);
    let (i, j) = (u.floor() as i64, v.floor() as i64);
    let (fu, fv) = (u - i as f64, v - j as f64);
    let top = hash(i, j, seed) * (1.0 - fu) + hash(i + 1, j, seed) * fu;
    let bottom = hash(i, j + 1, seed) * (1.0 - fu) + hash(i + 1, j + 1, seed) * fu;
    top * (1.0 - fv) + bottom * fv
}

/// RGB texture value at continuous scene coordinates, in `[0.05, 0.95]`.
pub fn texture_at(x: f64, y: f64, channel: usize, seed: u64) -> f64 {
    let s = seed.wrapping_add(channel as u64 * 101);
    let fine = value_noise(x, y, 3.0, s);
    let coarse = value_noise(x, y, 11.0, s ^ 0xABCD);
    0.05 + 0.9 * (0.6 * fine + 0.4 * coarse)
}

/// Frame `t` shows the scene shifted by `t * step`, so the forward flow between
/// consecutive frames is `step` everywhere.
pub fn translating_frames(width: usize, height: usize, frames: usize, step: (i64, i64), seed: u64) -> Result<FrameSequence> {
    FrameSequence::new(
        (0..frames as i64)
            .map(|t| {
                Image::from_fn(width, height, 3, |x, y, c| {
                    texture_at((x as i64 - t * step.0) as f64, (y as i64 - t * step.1) as f64, c, seed)
                })
            })
            .collect(),
    )
}

/// Depth `left` on the left half of the frame and `right` on the rest.
pub fn split_depth(width: usize, height: usize, left: f64, right: f64) -> Image {
    Image::from_fn(width, height, 1, |x, _, _| if x < width / 2 { left } else { right })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub frames: FrameSequence,
    pub depth: DepthSequence,
    /// Forward flow between consecutive frames; the backward flow is its negation.
    pub step: (i64, i64),
}

/// Translating texture over a scene that gets deeper from left to right, with a nearer
/// block in the lower middle.
pub fn standard_fixture(width: usize, height: usize, frames: usize, seed: u64) -> Result<Fixture> {
    let depth = Image::from_fn(width, height, 1, |x, y, _| {
        let ramp = 30.0 + 200.0 * x as f64 / (width.max(2) - 1) as f64;
        let in_block = (width / 3..2 * width / 3).contains(&x) && (height / 2..height).contains(&y);
        if in_block { 10.0 } else { ramp.round() }
    });
    Ok(Fixture {
        frames: translating_frames(width, height, frames, (1, 0), seed)?,
        depth: DepthSequence::new(vec![depth; frames])?,
        step: (1, 0),
    })
}

/// Near depth of [`complementary_fixture`]; rendered sharp by [`complementary_schedule`].
pub const COMPLEMENTARY_NEAR: f64 = 20.0;
pub const COMPLEMENTARY_FAR: f64 = 240.0;

/// Two-pixel-per-frame translation whose depth swaps halves every frame: even frames
/// are near on the left, odd frames near on the right. With focus held on the near
/// depth, consecutive frames have complementary focus masks and every in-focus pixel is
/// unaffected by blur.
pub fn complementary_fixture(width: usize, height: usize, frames: usize, seed: u64) -> Result<Fixture> {
    let even = split_depth(width, height, COMPLEMENTARY_NEAR, COMPLEMENTARY_FAR);
    let odd = split_depth(width, height, COMPLEMENTARY_FAR, COMPLEMENTARY_NEAR);
    Ok(Fixture {
        frames: translating_frames(width, height, frames, (2, 0), seed)?,
        depth: DepthSequence::new((0..frames).map(|t| if t % 2 == 0 { even.clone() } else { odd.clone() }).collect())?,
        step: (2, 0),
    })
}

/// Focus fixed on the near depth with a 100-wide focal band.
pub fn complementary_schedule(frames: usize, n_max: usize) -> FocusSchedule {
    FocusSchedule {
        initial_focal_point: COMPLEMENTARY_NEAR,
        focal_range: 100.0,
        focus_rate: 0.0,
        n_max,
        sigma: DEFAULT_SIGMA,
        length: frames,
        reference_count: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blur_synth::build_with_schedule;

    #[test]
    fn translation_matches_step() {
        let f = translating_frames(20, 10, 3, (2, 1), 5).unwrap();
        for y in 0..9 {
            for x in 0..18 {
                assert_eq!(f.frames()[0].pixel(x, y), f.frames()[1].pixel(x + 2, y + 1));
            }
        }
    }

    #[test]
    fn texture_stays_in_range() {
        let f = translating_frames(40, 30, 2, (1, 0), 9).unwrap();
        assert!(f.iter().flat_map(|i| i.data()).all(|&v| (0.05..=0.95).contains(&v)));
    }

    #[test]
    fn complementary_masks_alternate_and_sharp_pixels_are_exact() {
        let fx = complementary_fixture(32, 16, 4, 1).unwrap();
        let d = build_with_schedule(&fx.frames, &fx.depth, complementary_schedule(4, 7)).unwrap();
        for t in 0..4 {
            let mask = &d.clip.masks.frames()[t];
            for y in 0..16 {
                for x in 0..32 {
                    let left = x < 16;
                    let blurred = if t % 2 == 0 { !left } else { left };
                    assert_eq!(mask.get(x, y, 0) == 1.0, blurred);
                    if !blurred {
                        assert_eq!(d.clip.frames.frames()[t].pixel(x, y), fx.frames.frames()[t].pixel(x, y));
                    }
                }
            }
        }
    }
}
