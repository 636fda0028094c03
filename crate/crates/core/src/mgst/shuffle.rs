use crate::error::{Error, Result};

use super::geometry::Volume;

/// `out(y*s + dy, x*s + dx, c) = in(y, x, c*s*s + dy*s + dx)`, frame by frame.
pub fn pixel_shuffle(input: &Volume, s: usize) -> Result<Volume> {
    let s2 = s * s;
    if s == 0 || !input.channels.is_multiple_of(s2) {
        return Err(Error::dims(format!("channels divisible by {s2}"), input.channels));
    }
    let c_out = input.channels / s2;
    let mut out = Volume::zeros(input.frames, input.height * s, input.width * s, c_out);
    for t in 0..input.frames {
        for y in 0..input.height {
            for x in 0..input.width {
                let px = input.pixel(t, y, x);
                for c in 0..c_out {
                    for dy in 0..s {
                        for dx in 0..s {
                            out.pixel_mut(t, y * s + dy, x * s + dx)[c] = px[c * s2 + dy * s + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(input: &Volume, s: usize) -> Result<Volume> {
    if s == 0 || !input.height.is_multiple_of(s) || !input.width.is_multiple_of(s) {
        return Err(Error::dims(
            format!("height and width divisible by {s}"),
            format!("{}x{}", input.height, input.width),
        ));
    }
    let s2 = s * s;
    let c_in = input.channels;
    let mut out = Volume::zeros(input.frames, input.height / s, input.width / s, c_in * s2);
    for t in 0..input.frames {
        for y in 0..out.height {
            for x in 0..out.width {
                for c in 0..c_in {
                    for dy in 0..s {
                        for dx in 0..s {
                            let v = input.pixel(t, y * s + dy, x * s + dx)[c];
                            out.pixel_mut(t, y, x)[c * s2 + dy * s + dx] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
