//! Feature volumes and the overlapping patch embedding (soft split / soft composite).

use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, Error, Result};

/// `T x H x W x C` feature volume, row-major with channels innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
            data: vec![0.0; frames * height * width * channels],
        }
    }

    pub fn from_vec(frames: usize, height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = frames * height * width * channels;
        if data.len() != expected {
            return Err(Error::dims(format!("{expected} values"), data.len()));
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.frames, self.height, self.width, self.channels]
    }

    #[inline]
    pub fn offset(&self, t: usize, y: usize, x: usize) -> usize {
        ((t * self.height + y) * self.width + x) * self.channels
    }

    pub fn pixel(&self, t: usize, y: usize, x: usize) -> &[f64] {
        let o = self.offset(t, y, x);
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, t: usize, y: usize, x: usize) -> &mut [f64] {
        let o = self.offset(t, y, x);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.height * self.width * self.channels;
        &self.data[t * n..(t + 1) * n]
    }
}

/// Overlapping patch geometry on a feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Default for PatchGeometry {
    fn default() -> Self {
        Self {
            kernel: 7,
            stride: 3,
            padding: 3,
        }
    }
}

impl PatchGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.kernel >= 1 && self.stride >= 1, "patch kernel and stride must be positive");
        ensure_param!(self.stride <= self.kernel, "stride {} leaves gaps between {}-pixel patches", self.stride, self.kernel);
        ensure_param!(self.padding < self.kernel, "padding must be smaller than the kernel");
        Ok(())
    }

    /// Token count along an axis of `len` pixels.
    pub fn tokens_along(&self, len: usize) -> Result<usize> {
        let padded = len + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::InvalidParameter(format!(
                "{len} pixels are too few for a {}-pixel patch",
                self.kernel
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// Pixel rows (or columns) covered by token `i`, possibly reaching outside the map.
    pub fn footprint(&self, i: usize) -> (isize, isize) {
        let start = (i * self.stride) as isize - self.padding as isize;
        (start, start + self.kernel as isize)
    }

    /// Trailing pixels never covered by a patch; soft composite cannot restore them.
    fn uncovered(&self, len: usize, tokens: usize) -> bool {
        self.footprint(tokens - 1).1 < len as isize
    }
}

/// `T x m x n` grid of token vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub frames: usize,
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl PatchGrid {
    pub fn zeros(frames: usize, rows: usize, cols: usize, dim: usize) -> Self {
        Self {
            frames,
            rows,
            cols,
            dim,
            data: vec![0.0; frames * rows * cols * dim],
        }
    }

    pub fn token_count(&self) -> usize {
        self.frames * self.rows * self.cols
    }

    #[inline]
    pub fn index(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.rows + i) * self.cols + j
    }

    pub fn token(&self, t: usize, i: usize, j: usize) -> &[f64] {
        let o = self.index(t, i, j) * self.dim;
        &self.data[o..o + self.dim]
    }

    pub fn token_at(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn token_at_mut(&mut self, index: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.data[index * d..(index + 1) * d]
    }
}

/// Extracts every `k x k` patch; token layout is `(c, ky, kx)`. Borders are padded by edge
/// replication so constant maps give constant tokens.
pub fn soft_split(features: &Volume, geometry: &PatchGeometry) -> Result<PatchGrid> {
    geometry.validate()?;
    let (h, w, c) = (features.height, features.width, features.channels);
    let m = geometry.tokens_along(h)?;
    let n = geometry.tokens_along(w)?;
    let k = geometry.kernel;
    let mut grid = PatchGrid::zeros(features.frames, m, n, c * k * k);
    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;
    for t in 0..features.frames {
        for i in 0..m {
            let (y0, _) = geometry.footprint(i);
            for j in 0..n {
                let (x0, _) = geometry.footprint(j);
                let idx = grid.index(t, i, j);
                let token = grid.token_at_mut(idx);
                for ky in 0..k {
                    let y = clamp(y0 + ky as isize, h);
                    for kx in 0..k {
                        let x = clamp(x0 + kx as isize, w);
                        let px = features.pixel(t, y, x);
                        for (ch, &v) in px.iter().enumerate() {
                            token[(ch * k + ky) * k + kx] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Inverse of [`soft_split`]: sums every in-bounds patch entry back onto its pixel and
/// divides by the number of patches covering it.
pub fn soft_comp(grid: &PatchGrid, geometry: &PatchGeometry, height: usize, width: usize) -> Result<Volume> {
    geometry.validate()?;
    let k = geometry.kernel;
    if !grid.dim.is_multiple_of(k * k) {
        return Err(Error::dims(format!("a multiple of {} per token", k * k), grid.dim));
    }
    if geometry.tokens_along(height)? != grid.rows || geometry.tokens_along(width)? != grid.cols {
        return Err(Error::dims(
            format!("{}x{} tokens", grid.rows, grid.cols),
            format!("a {height}x{width} map"),
        ));
    }
    if geometry.uncovered(height, grid.rows) || geometry.uncovered(width, grid.cols) {
        return Err(Error::InvalidParameter(format!(
            "a {height}x{width} map is not fully covered by the patch grid"
        )));
    }
    let c = grid.dim / (k * k);
    let mut out = Volume::zeros(grid.frames, height, width, c);
    let mut count = vec![0u32; height * width];
    for i in 0..grid.rows {
        let (y0, _) = geometry.footprint(i);
        for j in 0..grid.cols {
            let (x0, _) = geometry.footprint(j);
            for ky in 0..k {
                let y = y0 + ky as isize;
                for kx in 0..k {
                    let x = x0 + kx as isize;
                    if y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width {
                        count[y as usize * width + x as usize] += 1;
                    }
                }
            }
        }
    }
    for t in 0..grid.frames {
        for i in 0..grid.rows {
            let (y0, _) = geometry.footprint(i);
            for j in 0..grid.cols {
                let (x0, _) = geometry.footprint(j);
                let token = grid.token(t, i, j);
                for ky in 0..k {
                    let y = y0 + ky as isize;
                    if y < 0 || y as usize >= height {
                        continue;
                    }
                    for kx in 0..k {
                        let x = x0 + kx as isize;
                        if x < 0 || x as usize >= width {
                            continue;
                        }
                        let px = out.pixel_mut(t, y as usize, x as usize);
                        for (ch, p) in px.iter_mut().enumerate() {
                            *p += token[(ch * k + ky) * k + kx];
                        }
                    }
                }
            }
        }
        for y in 0..height {
            for x in 0..width {
                let n = count[y * width + x] as f64;
                out.pixel_mut(t, y, x).iter_mut().for_each(|v| *v /= n);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, h: usize, w: usize, c: usize) -> Volume {
        let data = (0..t * h * w * c).map(|i| ((i * 37) % 101) as f64 / 100.0 - 0.3).collect();
        Volume::from_vec(t, h, w, c, data).unwrap()
    }

    #[test]
    fn grid_size_for_sixty_by_one_hundred_eight() {
        let g = PatchGeometry::default();
        assert_eq!(g.tokens_along(60).unwrap(), (60 + 2 * 3 - 7) / 3 + 1);
        assert_eq!(g.tokens_along(60).unwrap(), 20);
        assert_eq!(g.tokens_along(108).unwrap(), 36);
    }

    #[test]
    fn composite_inverts_split() {
        let g = PatchGeometry::default();
        for (h, w) in [(60, 108), (13, 17), (7, 7)] {
            let v = ramp(2, h, w, 3);
            let grid = soft_split(&v, &g).unwrap();
            let back = soft_comp(&grid, &g, h, w).unwrap();
            let err = v.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{h}x{w}: {err}");
        }
    }

    #[test]
    fn constant_map_gives_constant_tokens() {
        let v = Volume::from_vec(1, 10, 12, 2, vec![0.25; 240]).unwrap();
        let grid = soft_split(&v, &PatchGeometry::default()).unwrap();
        assert!(grid.data.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn uncovered_tail_is_rejected() {
        let g = PatchGeometry {
            kernel: 2,
            stride: 2,
            padding: 0,
        };
        let grid = soft_split(&ramp(1, 5, 4, 1), &g).unwrap();
        assert!(soft_comp(&grid, &g, 5, 4).is_err());
    }
}
