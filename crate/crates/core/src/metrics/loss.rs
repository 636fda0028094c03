use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            epsilon: 0.001,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.epsilon > 0.0, "Charbonnier epsilon must be positive");
        ensure_param!(
            [self.alpha, self.beta, self.gamma].iter().all(|w| w.is_finite()),
            "loss weights must be finite"
        );
        Ok(())
    }
}

pub(crate) fn check_pairs(pred: &[Image], gt: &[Image]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::dims(format!("{} frames", gt.len()), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no frames to compare".into()));
    }
    for (p, g) in pred.iter().zip(gt) {
        p.ensure_same_shape(g)?;
    }
    Ok(())
}

/// Mean of `sqrt(d^2 + eps^2)` over every sample. Evaluated as
/// `eps + mean(d^2 / (sqrt(d^2 + eps^2) + eps))`, which equals `eps` exactly when the
/// inputs agree.
pub fn charbonnier(pred: &[Image], gt: &[Image], epsilon: f64) -> Result<f64> {
    check_pairs(pred, gt)?;
    ensure_param!(epsilon >= 0.0, "epsilon must be non-negative");
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        for (a, b) in p.data().iter().zip(g.data()) {
            let d2 = (a - b) * (a - b);
            if d2 > 0.0 {
                sum += d2 / ((d2 + epsilon * epsilon).sqrt() + epsilon);
            }
            n += 1;
        }
    }
    Ok(epsilon + sum / n as f64)
}

/// Mean absolute difference over samples whose mask pixel is 1; zero for an empty
/// mask. Single-channel masks apply to every channel.
pub fn masked_l1(pred: &[Image], gt: &[Image], masks: &[Image]) -> Result<f64> {
    let (sum, count) = masked_abs_sum(pred, gt, masks, false)?;
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Sum and count of `|p - g|` where the mask is 1 (or 0 when `invert`).
pub(crate) fn masked_abs_sum(pred: &[Image], gt: &[Image], masks: &[Image], invert: bool) -> Result<(f64, usize)> {
    check_pairs(pred, gt)?;
    if masks.len() != pred.len() {
        return Err(Error::dims(format!("{} masks", pred.len()), masks.len()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((p, g), m) in pred.iter().zip(gt).zip(masks) {
        p.ensure_same_dims(m)?;
        if m.channels() != 1 {
            return Err(Error::dims("single-channel mask", m.shape_string()));
        }
        let c = p.channels();
        for (i, &mv) in m.data().iter().enumerate() {
            if (mv >= 0.5) != invert {
                for k in 0..c {
                    sum += (p.data()[i * c + k] - g.data()[i * c + k]).abs();
                }
                count += c;
            }
        }
    }
    Ok((sum, count))
}

/// `alpha * charbonnier(hr) + beta * l1(lr, blurred) + gamma * l1(lr, in focus)`.
pub fn total_loss(
    pred_hr: &[Image],
    gt_hr: &[Image],
    pred_lr: &[Image],
    gt_lr: &[Image],
    masks: &[Image],
    weights: &LossWeights,
) -> Result<f64> {
    weights.validate()?;
    let charb = charbonnier(pred_hr, gt_hr, weights.epsilon)?;
    let (blur_sum, blur_n) = masked_abs_sum(pred_lr, gt_lr, masks, false)?;
    let (focus_sum, focus_n) = masked_abs_sum(pred_lr, gt_lr, masks, true)?;
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(weights.alpha * charb + weights.beta * mean(blur_sum, blur_n) + weights.gamma * mean(focus_sum, focus_n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs_give_epsilon() {
        let x = Image::from_fn(7, 5, 3, |x, y, c| ((x + 2 * y + c) % 5) as f64 / 4.0);
        assert_eq!(charbonnier(&[x.clone()], &[x], 0.001).unwrap(), 0.001);
    }

    #[test]
    fn unit_difference() {
        let a = Image::filled(4, 4, 3, 1.0);
        let b = Image::filled(4, 4, 3, 0.0);
        let v = charbonnier(&[a], &[b], 0.001).unwrap();
        assert!((v - (1.0f64 + 1e-6).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_epsilon_is_mean_absolute_difference() {
        let a = Image::filled(3, 3, 3, 0.75);
        let b = Image::filled(3, 3, 3, 0.25);
        assert_eq!(charbonnier(&[a], &[b], 0.0).unwrap(), 0.5);
    }

    #[test]
    fn masked_l1_conventions() {
        let a = Image::filled(4, 4, 3, 0.5);
        let b = Image::filled(4, 4, 3, 0.3);
        let full = Image::filled(4, 4, 1, 1.0);
        assert!((masked_l1(&[a.clone()], &[b.clone()], &[full]).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(masked_l1(&[a], &[b], &[Image::new(4, 4, 1)]).unwrap(), 0.0);
    }

    #[test]
    fn checkerboard_mask_matches_explicit_loop() {
        let p = Image::from_fn(6, 5, 3, |x, y, c| ((x * 7 + y * 3 + c * 5) % 11) as f64 / 10.0);
        let g = Image::from_fn(6, 5, 3, |x, y, c| ((x * 2 + y * 9 + c) % 13) as f64 / 12.0);
        let m = Image::from_fn(6, 5, 1, |x, y, _| ((x + y) % 2) as f64);
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in 0..5 {
            for x in 0..6 {
                if (x + y) % 2 == 1 {
                    for c in 0..3 {
                        sum += (p.get(x, y, c) - g.get(x, y, c)).abs();
                        n += 1.0;
                    }
                }
            }
        }
        assert!((masked_l1(&[p], &[g], &[m]).unwrap() - sum / n).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_costs_epsilon() {
        let x = Image::from_fn(4, 4, 3, |x, y, _| (x * y) as f64 / 9.0);
        let m = Image::from_fn(4, 4, 1, |x, _, _| (x % 2) as f64);
        let s = [x.clone()];
        let v = total_loss(&s, &s, &s, &s, &[m], &LossWeights::default()).unwrap();
        assert_eq!(v, 0.001);
    }

    #[test]
    fn region_terms_are_weighted_separately() {
        let gt = Image::filled(2, 1, 3, 0.0);
        let pred = Image::from_vec(2, 1, 3, vec![0.4, 0.4, 0.4, 0.1, 0.1, 0.1]).unwrap();
        let mask = Image::from_vec(2, 1, 1, vec![1.0, 0.0]).unwrap();
        let w = LossWeights {
            alpha: 0.0,
            beta: 2.0,
            gamma: 3.0,
            epsilon: 0.001,
        };
        let v = total_loss(&[gt.clone()], &[gt.clone()], &[pred], &[gt], &[mask], &w).unwrap();
        assert!((v - (2.0 * 0.4 + 3.0 * 0.1)).abs() < 1e-12);
    }
}
