//! Window attention blocks gated by the query mask.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

use super::geometry::PatchGrid;
use super::mask::QueryMask;
use super::weights::{BlockWeights, ModelWeights};
use super::window::{partition_windows, select_kv_frames, Window};

/// What one block did.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockStats {
    pub block: usize,
    pub kv_frames: Vec<usize>,
    /// Indices of windows that were computed.
    pub active_windows: Vec<usize>,
    pub skipped_windows: usize,
    /// Keys per active window, spatial tokens plus one global token per frame.
    pub kv_tokens: Vec<usize>,
    /// Largest `|sum(row) - 1|` over every softmax row evaluated.
    pub max_softmax_deviation: f64,
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

/// True when any query token of the window has a nonzero mask value.
pub fn window_is_active(window: &Window, mask: &QueryMask) -> bool {
    window
        .rows
        .clone()
        .any(|i| window.cols.clone().any(|j| mask.at(i, j) != 0.0))
}

struct KeyValues {
    keys: Vec<f64>,
    values: Vec<f64>,
}

fn project_kv(tokens: &[&[f64]], w: &BlockWeights, d: usize) -> KeyValues {
    let (keys, values): (Vec<Vec<f64>>, Vec<Vec<f64>>) = tokens
        .par_iter()
        .map(|x| {
            let mut n = vec![0.0; d];
            w.norm_attn.apply(x, &mut n);
            let mut k = vec![0.0; d];
            let mut v = vec![0.0; d];
            w.key.apply(&n, &mut k);
            w.value.apply(&n, &mut v);
            (k, v)
        })
        .unzip();
    KeyValues {
        keys: keys.concat(),
        values: values.concat(),
    }
}

/// Output tokens of one active window, in query order, and its largest softmax
/// deviation.
fn window_forward(
    grid: &PatchGrid,
    queries: &[usize],
    q_mask: &[f64],
    kv: &KeyValues,
    kv_rows: &[usize],
    w: &BlockWeights,
    heads: usize,
) -> (Vec<Vec<f64>>, f64) {
    let d = grid.dim;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let hidden = w.ffn_in.output;
    let mut deviation = 0.0f64;
    let mut n = vec![0.0; d];
    let mut q = vec![0.0; d];
    let mut mixed = vec![0.0; d];
    let mut attn = vec![0.0; d];
    let mut h = vec![0.0; hidden];
    let mut ff = vec![0.0; d];
    let mut scores = vec![0.0; kv_rows.len()];
    let out = queries
        .iter()
        .zip(q_mask)
        .map(|(&qi, &mq)| {
            let x = grid.token_at(qi);
            w.norm_attn.apply(x, &mut n);
            for (a, e) in n.iter_mut().zip(&w.mask_embed) {
                *a += mq * e;
            }
            w.query.apply(&n, &mut q);
            for head in 0..heads {
                let r = head * dh..(head + 1) * dh;
                let qh = &q[r.clone()];
                let mut peak = f64::NEG_INFINITY;
                for (s, &k) in scores.iter_mut().zip(kv_rows) {
                    let kh = &kv.keys[k * d..][r.clone()];
                    *s = qh.iter().zip(kh).map(|(a, b)| a * b).sum::<f64>() * scale;
                    peak = peak.max(*s);
                }
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - peak).exp();
                    total += *s;
                }
                let mut row_sum = 0.0;
                for s in scores.iter_mut() {
                    *s /= total;
                    row_sum += *s;
                }
                deviation = deviation.max((row_sum - 1.0).abs());
                let mh = &mut mixed[r.clone()];
                mh.fill(0.0);
                for (&p, &k) in scores.iter().zip(kv_rows) {
                    for (m, v) in mh.iter_mut().zip(&kv.values[k * d..][r.clone()]) {
                        *m += p * v;
                    }
                }
            }
            w.proj.apply(&mixed, &mut attn);
            let mut y: Vec<f64> = x.iter().zip(&attn).map(|(a, b)| a + b).collect();
            w.norm_ffn.apply(&y, &mut n);
            w.ffn_in.apply(&n, &mut h);
            h.iter_mut().for_each(|v| *v = gelu(*v));
            w.ffn_out.apply(&h, &mut ff);
            y.iter_mut().zip(&ff).for_each(|(a, b)| *a += b);
            y
        })
        .collect();
    (out, deviation)
}

/// One sparse attention block. Windows whose query mask is zero everywhere are left
/// untouched, attention and feed-forward alike.
pub fn attention_forward(
    grid: &PatchGrid,
    windows: &[Window],
    mask: &QueryMask,
    weights: &BlockWeights,
    block_index: usize,
    kv_stride: usize,
    heads: usize,
) -> Result<(PatchGrid, BlockStats)> {
    if (mask.rows, mask.cols) != (grid.rows, grid.cols) {
        return Err(Error::dims(
            format!("{}x{} query mask", grid.rows, grid.cols),
            format!("{}x{}", mask.rows, mask.cols),
        ));
    }
    let d = grid.dim;
    if weights.query.input != d || !d.is_multiple_of(heads) {
        return Err(Error::dims(format!("{d}-wide tokens split over {heads} heads"), weights.query.input));
    }
    let kv_frames = select_kv_frames(grid.frames, block_index, kv_stride);
    let active: Vec<usize> = (0..windows.len()).filter(|&w| window_is_active(&windows[w], mask)).collect();
    let mut stats = BlockStats {
        block: block_index,
        kv_frames: kv_frames.clone(),
        active_windows: active.clone(),
        skipped_windows: windows.len() - active.len(),
        kv_tokens: Vec::with_capacity(active.len()),
        max_softmax_deviation: 0.0,
    };
    let mut out = grid.clone();
    if active.is_empty() {
        return Ok((out, stats));
    }

    // Keys and values for every token of the selected frames, then one global token per
    // selected frame (the mean token of that frame).
    let per_frame = grid.rows * grid.cols;
    let globals: Vec<Vec<f64>> = kv_frames
        .iter()
        .map(|&t| {
            let mut g = vec![0.0; d];
            for k in 0..per_frame {
                g.iter_mut().zip(grid.token_at(t * per_frame + k)).for_each(|(a, b)| *a += b);
            }
            g.iter_mut().for_each(|v| *v /= per_frame as f64);
            g
        })
        .collect();
    let mut kv_inputs: Vec<&[f64]> = kv_frames
        .iter()
        .flat_map(|&t| (0..per_frame).map(move |k| t * per_frame + k))
        .map(|i| grid.token_at(i))
        .collect();
    kv_inputs.extend(globals.iter().map(Vec::as_slice));
    let kv = project_kv(&kv_inputs, weights, d);
    let global_base = kv_frames.len() * per_frame;

    let results: Vec<(Vec<usize>, Vec<Vec<f64>>, usize, f64)> = active
        .par_iter()
        .map(|&wi| {
            let win = &windows[wi];
            let mut queries = Vec::new();
            let mut q_mask = Vec::new();
            for t in 0..grid.frames {
                for i in win.rows.clone() {
                    for j in win.cols.clone() {
                        queries.push(grid.index(t, i, j));
                        q_mask.push(mask.at(i, j));
                    }
                }
            }
            let mut kv_rows = Vec::new();
            for (slot, _) in kv_frames.iter().enumerate() {
                for i in win.kv_rows.clone() {
                    for j in win.kv_cols.clone() {
                        kv_rows.push(slot * per_frame + i * grid.cols + j);
                    }
                }
            }
            kv_rows.extend(global_base..global_base + kv_frames.len());
            let (tokens, dev) = window_forward(grid, &queries, &q_mask, &kv, &kv_rows, weights, heads);
            (queries, tokens, kv_rows.len(), dev)
        })
        .collect();

    for (queries, tokens, kv_count, dev) in results {
        for (qi, t) in queries.into_iter().zip(tokens) {
            out.token_at_mut(qi).copy_from_slice(&t);
        }
        stats.kv_tokens.push(kv_count);
        stats.max_softmax_deviation = stats.max_softmax_deviation.max(dev);
    }
    Ok((out, stats))
}

/// All blocks in sequence, alternating key/value frame parity.
pub fn block_stack_forward(grid: &PatchGrid, mask: &QueryMask, weights: &ModelWeights) -> Result<(PatchGrid, Vec<BlockStats>)> {
    let config = &weights.config;
    let windows = partition_windows(grid.rows, grid.cols, &config.window)?;
    let mut current = grid.clone();
    let mut stats = Vec::with_capacity(weights.blocks.len());
    for (b, block) in weights.blocks.iter().enumerate() {
        let (next, s) = attention_forward(&current, &windows, mask, block, b, config.kv_stride, config.heads)?;
        current = next;
        stats.push(s);
    }
    Ok((current, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mgst::weights::MgstConfig;

    fn config() -> MgstConfig {
        MgstConfig {
            embed_dim: 16,
            heads: 4,
            blocks: 4,
            feature_channels: 2,
            ..MgstConfig::default()
        }
    }

    fn grid(t: usize, m: usize, n: usize, d: usize) -> PatchGrid {
        let mut g = PatchGrid::zeros(t, m, n, d);
        for (i, v) in g.data.iter_mut().enumerate() {
            *v = ((i * 7919) % 1013) as f64 / 1013.0 - 0.5;
        }
        g
    }

    #[test]
    fn zero_mask_is_identity_through_every_block() {
        let w = ModelWeights::seeded(&config(), 5).unwrap();
        let g = grid(4, 10, 18, 16);
        let (out, stats) = block_stack_forward(&g, &QueryMask::zeros(10, 18), &w).unwrap();
        assert_eq!(out, g);
        assert!(stats.iter().all(|s| s.active_windows.is_empty() && s.skipped_windows == 4));
    }

    #[test]
    fn only_masked_windows_change() {
        let w = ModelWeights::seeded(&config(), 5).unwrap();
        let g = grid(2, 10, 18, 16);
        let mut mask = QueryMask::zeros(10, 18);
        mask.values[18 * 7 + 12] = 3.0;
        let windows = partition_windows(10, 18, &w.config.window).unwrap();
        let (out, stats) = attention_forward(&g, &windows, &mask, &w.blocks[0], 0, 2, 4).unwrap();
        assert_eq!(stats.active_windows, vec![3]);
        for t in 0..2 {
            for i in 0..10 {
                for j in 0..18 {
                    let inside = (5..10).contains(&i) && (9..18).contains(&j);
                    assert_eq!(out.token(t, i, j) != g.token(t, i, j), inside, "({t},{i},{j})");
                }
            }
        }
    }

    #[test]
    fn softmax_rows_are_normalized_and_kv_counts_follow_stride() {
        let w = ModelWeights::seeded(&config(), 9).unwrap();
        let g = grid(6, 5, 9, 16);
        let mask = QueryMask {
            rows: 5,
            cols: 9,
            values: vec![1.0; 45],
        };
        let (_, stats) = block_stack_forward(&g, &mask, &w).unwrap();
        for s in &stats {
            assert_eq!(s.kv_frames.len(), 3);
            assert_eq!(s.kv_tokens, vec![3 * 45 + 3]);
            assert!(s.max_softmax_deviation < 1e-6);
        }
        assert_eq!(stats[0].kv_frames, vec![0, 2, 4]);
        assert_eq!(stats[1].kv_frames, vec![1, 3, 5]);
    }

    #[test]
    fn deterministic() {
        let w = ModelWeights::seeded(&config(), 2).unwrap();
        let g = grid(3, 7, 10, 16);
        let mask = QueryMask {
            rows: 7,
            cols: 10,
            values: (0..70).map(|i| (i % 3) as f64).collect(),
        };
        let a = block_stack_forward(&g, &mask, &w).unwrap();
        let b = block_stack_forward(&g, &mask, &w).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.data.len(), g.data.len());
    }
}
