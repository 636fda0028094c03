use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, Result};

/// Query window size and key/value expansion, both in tokens as `[rows, cols]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub size: [usize; 2],
    pub expand: [usize; 2],
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self::with_half_expansion([5, 9])
    }
}

impl WindowSpec {
    /// Expansion of half the window on each side, rounded down.
    pub fn with_half_expansion(size: [usize; 2]) -> Self {
        Self {
            size,
            expand: [size[0] / 2, size[1] / 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.size[0] >= 1 && self.size[1] >= 1, "window size must be positive");
        Ok(())
    }
}

/// One query window and its clamped key/value region on the token grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    pub kv_rows: Range<usize>,
    pub kv_cols: Range<usize>,
}

impl Window {
    pub fn query_tokens_per_frame(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn kv_tokens_per_frame(&self) -> usize {
        self.kv_rows.len() * self.kv_cols.len()
    }
}

/// Tiles an `m x n` grid with non-overlapping windows; the last row and column of
/// windows are cut at the grid edge.
pub fn partition_windows(rows: usize, cols: usize, spec: &WindowSpec) -> Result<Vec<Window>> {
    spec.validate()?;
    let [wh, ww] = spec.size;
    let [eh, ew] = spec.expand;
    let mut out = Vec::with_capacity(rows.div_ceil(wh) * cols.div_ceil(ww));
    for r0 in (0..rows).step_by(wh) {
        let r1 = (r0 + wh).min(rows);
        for c0 in (0..cols).step_by(ww) {
            let c1 = (c0 + ww).min(cols);
            out.push(Window {
                rows: r0..r1,
                cols: c0..c1,
                kv_rows: r0.saturating_sub(eh)..(r1 + eh).min(rows),
                kv_cols: c0.saturating_sub(ew)..(c1 + ew).min(cols),
            });
        }
    }
    Ok(out)
}

/// Frames whose tokens serve as keys and values in a block: every second frame,
/// alternating parity between consecutive blocks. A single frame is always used.
pub fn select_kv_frames(frames: usize, block_index: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let chosen: Vec<usize> = (0..frames).filter(|t| t % stride == block_index % stride).collect();
    if chosen.is_empty() && frames > 0 {
        return vec![0];
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_by_thirty_six_grid_has_sixteen_windows() {
        let ws = partition_windows(20, 36, &WindowSpec::default()).unwrap();
        assert_eq!(ws.len(), 20usize.div_ceil(5) * 36usize.div_ceil(9));
        assert_eq!(ws.len(), 16);
    }

    #[test]
    fn default_expansion_is_two_by_four() {
        assert_eq!(WindowSpec::default().expand, [2, 4]);
    }

    #[test]
    fn kv_regions_stay_on_the_grid() {
        for (m, n) in [(20, 36), (7, 11), (3, 4)] {
            for w in partition_windows(m, n, &WindowSpec::default()).unwrap() {
                assert!(w.kv_rows.end <= m && w.kv_cols.end <= n);
                assert!(w.kv_rows.start <= w.rows.start && w.kv_cols.start <= w.cols.start);
            }
        }
        let ws = partition_windows(20, 36, &WindowSpec::default()).unwrap();
        assert_eq!(ws[0].kv_rows, 0..7);
        assert_eq!(ws[0].kv_cols, 0..13);
        assert_eq!(ws[5].kv_rows, 3..12);
        assert_eq!(ws[5].kv_cols, 5..22);
    }

    #[test]
    fn windows_cover_every_token_once() {
        let (m, n) = (13, 22);
        let mut hits = vec![0; m * n];
        for w in partition_windows(m, n, &WindowSpec::default()).unwrap() {
            for i in w.rows.clone() {
                for j in w.cols.clone() {
                    hits[i * n + j] += 1;
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn parity_alternates_between_blocks() {
        assert_eq!(select_kv_frames(10, 0, 2), vec![0, 2, 4, 6, 8]);
        assert_eq!(select_kv_frames(10, 1, 2), vec![1, 3, 5, 7, 9]);
        assert_eq!(select_kv_frames(10, 6, 2), vec![0, 2, 4, 6, 8]);
        for b in 0..8 {
            assert_eq!(select_kv_frames(1, b, 2), vec![0]);
        }
        assert_eq!(select_kv_frames(7, 0, 2).len(), 4);
        assert_eq!(select_kv_frames(7, 1, 2).len(), 3);
    }
}
