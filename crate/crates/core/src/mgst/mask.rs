use crate::error::{Error, Result};
use crate::image::BlurMapSequence;

use super::geometry::PatchGeometry;

/// Per-token blur intensity over the `m x n` grid, pooled across frames.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryMask {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl QueryMask {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }
}

/// Token footprint in map pixels along one axis: `[start, end)` clamped to the map.
fn map_span(geometry: &PatchGeometry, token: usize, feature_len: usize, scale: usize) -> (usize, usize) {
    let (s, e) = geometry.footprint(token);
    let clamp = |v: isize| v.clamp(0, feature_len as isize) as usize * scale;
    (clamp(s), clamp(e))
}

/// Maximum blur over every frame and every map pixel under each token. Maps are at the
/// input resolution; tokens live on features downsampled by `scale`.
pub fn build_query_mask(maps: &BlurMapSequence, geometry: &PatchGeometry, scale: usize) -> Result<QueryMask> {
    geometry.validate()?;
    let (w, h) = maps.dims();
    if scale == 0 || w % scale != 0 || h % scale != 0 {
        return Err(Error::InvalidParameter(format!("{w}x{h} maps are not divisible by {scale}")));
    }
    let (fh, fw) = (h / scale, w / scale);
    let rows = geometry.tokens_along(fh)?;
    let cols = geometry.tokens_along(fw)?;
    let mut mask = QueryMask::zeros(rows, cols);
    for i in 0..rows {
        let (y0, y1) = map_span(geometry, i, fh, scale);
        for j in 0..cols {
            let (x0, x1) = map_span(geometry, j, fw, scale);
            let mut peak = 0.0f64;
            for map in maps.iter() {
                for y in y0..y1 {
                    for x in x0..x1 {
                        peak = peak.max(map.get(x, y, 0));
                    }
                }
            }
            mask.values[i * cols + j] = peak;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    fn seq(values: &[f64]) -> BlurMapSequence {
        BlurMapSequence::new(values.iter().map(|&v| Image::filled(12, 12, 1, v)).collect()).unwrap()
    }

    #[test]
    fn zero_only_when_every_frame_is_in_focus() {
        let g = PatchGeometry::default();
        let m = build_query_mask(&seq(&[0.0, 0.0, 0.0]), &g, 1).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
        let m = build_query_mask(&seq(&[0.0, 5.0, 0.0]), &g, 1).unwrap();
        assert!(m.values.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn single_frame_mask_pools_that_map() {
        let map = Image::from_fn(24, 24, 1, |x, y, _| if x >= 12 && y < 6 { 3.0 } else { 0.0 });
        let m = build_query_mask(&BlurMapSequence::new(vec![map.clone()]).unwrap(), &PatchGeometry::default(), 2).unwrap();
        assert_eq!((m.rows, m.cols), (4, 4));
        for i in 0..m.rows {
            for j in 0..m.cols {
                // Token (i, j) covers feature rows 3i-3 .. 3i+4, i.e. map rows 6i-6 .. 6i+8.
                let rows = (6 * i).saturating_sub(6)..(6 * i + 8).min(24);
                let cols = (6 * j).saturating_sub(6)..(6 * j + 8).min(24);
                let hit = rows.clone().any(|y| cols.clone().any(|x| map.get(x, y, 0) > 0.0));
                assert_eq!(m.at(i, j) > 0.0, hit, "token ({i},{j})");
            }
        }
    }
}
