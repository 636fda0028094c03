use crate::error::{ensure_param, Result};

/// Lower end of the normalized depth scale.
pub const DEPTH_MIN: f64 = 0.0;
/// Upper end of the normalized depth scale.
pub const DEPTH_MAX: f64 = 255.0;

/// Rounds to the nearest odd integer; anything that lands below 3 becomes 0 (no blur).
pub fn snap_to_odd(raw: f64) -> usize {
    if raw <= 0.0 {
        return 0;
    }
    let odd = 2.0 * ((raw - 1.0) / 2.0).round() + 1.0;
    if odd < 3.0 {
        0
    } else {
        odd as usize
    }
}

/// Kernel size applied at depth `d` for focal depth `focal`.
///
/// Zero within `focal_range / 2` of the focal depth; beyond that it ramps linearly with
/// the excess distance, reaching `n_max` at the farthest depth reachable inside
/// `[d_min, d_max]`, and is then snapped with [`snap_to_odd`].
pub fn blur_size_at_depth(
    d: f64,
    focal: f64,
    focal_range: f64,
    n_max: usize,
    d_min: f64,
    d_max: f64,
) -> Result<usize> {
    ensure_param!(focal_range >= 0.0, "focal range must be non-negative, got {focal_range}");
    let half = focal_range / 2.0;
    let dist = (d - focal).abs();
    if dist <= half {
        return Ok(0);
    }
    let reach = (d_min - focal).abs().max((d_max - focal).abs()) - half;
    if reach <= 0.0 {
        return Ok(0);
    }
    let raw = n_max as f64 * ((dist - half) / reach).min(1.0);
    Ok(snap_to_odd(raw).min(n_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn size(d: f64, f: f64) -> usize {
        blur_size_at_depth(d, f, 100.0, 7, DEPTH_MIN, DEPTH_MAX).unwrap()
    }

    #[test]
    fn zero_inside_focal_range() {
        assert_eq!(size(40.0, 0.0), 0);
        assert_eq!(size(50.0, 0.0), 0);
    }

    #[test]
    fn maximum_at_farthest_depth() {
        assert_eq!(size(255.0, 0.0), 7);
        assert_eq!(size(0.0, 255.0), 7);
    }

    #[test]
    fn halfway_ramp_snaps_down_to_three() {
        // (152.5 - 50) / (255 - 50) * 7 = 3.5, nearest odd is 3
        assert_eq!(size(152.5, 0.0), 3);
    }

    #[test]
    fn snapping_table() {
        assert_eq!(snap_to_odd(0.0), 0);
        assert_eq!(snap_to_odd(1.9), 0);
        assert_eq!(snap_to_odd(2.0), 3);
        assert_eq!(snap_to_odd(3.9), 3);
        assert_eq!(snap_to_odd(4.0), 5);
        assert_eq!(snap_to_odd(11.0), 11);
    }

    #[test]
    fn negative_focal_range_is_rejected() {
        assert!(blur_size_at_depth(1.0, 0.0, -1.0, 7, 0.0, 255.0).is_err());
    }

    #[test]
    fn monotone_in_distance_and_always_legal() {
        for n_max in [3usize, 5, 7, 9, 11] {
            for f in [0.0, 60.0, 127.5, 200.0, 255.0] {
                for fr in [0.0, 30.0, 100.0] {
                    let mut pairs: Vec<(f64, usize)> = (0..=510)
                        .map(|i| {
                            let d = i as f64 * 0.5;
                            ((d - f).abs(), blur_size_at_depth(d, f, fr, n_max, 0.0, 255.0).unwrap())
                        })
                        .collect();
                    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    for w in pairs.windows(2) {
                        assert!(w[0].1 <= w[1].1);
                    }
                    for (_, s) in pairs {
                        assert!(s == 0 || (s % 2 == 1 && (3..=n_max).contains(&s)));
                    }
                }
            }
        }
    }
}
