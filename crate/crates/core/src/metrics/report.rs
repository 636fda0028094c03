use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{FrameSequence, MaskSequence};

use super::quality::{psnr, psnr_masked, ssim, ssim_masked};
use super::tof::tof;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub masked_psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub masked_ssim: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_masked_psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_masked_ssim: Option<f64>,
    /// Absent for single-frame sequences.
    pub tof: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-frame PSNR and SSIM, their means, masked variants when masks are given, and
/// tOF over the whole sequence.
pub fn evaluate(pred: &FrameSequence, gt: &FrameSequence, masks: Option<&MaskSequence>) -> Result<MetricReport> {
    if pred.len() != gt.len() {
        return Err(Error::dims(format!("{} frames", gt.len()), pred.len()));
    }
    if let Some(m) = masks {
        if m.len() != pred.len() {
            return Err(Error::dims(format!("{} masks", pred.len()), m.len()));
        }
    }
    let frames = (0..pred.len())
        .into_par_iter()
        .map(|t| {
            let (p, g) = (&pred.frames()[t], &gt.frames()[t]);
            let (masked_psnr, masked_ssim) = match masks {
                Some(m) => (psnr_masked(p, g, &m.frames()[t], 1.0)?, ssim_masked(p, g, &m.frames()[t])?),
                None => (None, None),
            };
            Ok(FrameMetrics {
                index: t,
                psnr: psnr(p, g, 1.0)?,
                ssim: ssim(p, g)?,
                masked_psnr,
                masked_ssim,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = frames.len() as f64;
    let tof = if pred.len() >= 2 { Some(tof(pred.frames(), gt.frames())?) } else { None };
    Ok(MetricReport {
        mean_psnr: frames.iter().map(|f| f.psnr).sum::<f64>() / n,
        mean_ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
        mean_masked_psnr: mean_of(frames.iter().map(|f| f.masked_psnr)),
        mean_masked_ssim: mean_of(frames.iter().map(|f| f.masked_ssim)),
        frames,
        tof,
    })
}

impl MetricReport {
    /// Fixed-width plain-text table, one row per frame plus a mean row.
    pub fn to_table(&self) -> String {
        let masked = self.mean_masked_psnr.is_some() || self.mean_masked_ssim.is_some();
        let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.p$}"));
        let mut s = String::new();
        if masked {
            let _ = writeln!(s, "{:>6}  {:>8}  {:>7}  {:>10}  {:>10}", "frame", "PSNR", "SSIM", "mPSNR", "mSSIM");
        } else {
            let _ = writeln!(s, "{:>6}  {:>8}  {:>7}", "frame", "PSNR", "SSIM");
        }
        for f in &self.frames {
            let _ = write!(s, "{:>6}  {:>8.3}  {:>7.4}", f.index, f.psnr, f.ssim);
            if masked {
                let _ = write!(s, "  {:>10}  {:>10}", opt(f.masked_psnr, 3), opt(f.masked_ssim, 4));
            }
            s.push('\n');
        }
        let _ = write!(s, "{:>6}  {:>8.3}  {:>7.4}", "mean", self.mean_psnr, self.mean_ssim);
        if masked {
            let _ = write!(s, "  {:>10}  {:>10}", opt(self.mean_masked_psnr, 3), opt(self.mean_masked_ssim, 4));
        }
        s.push('\n');
        let _ = writeln!(s, "tOF {}", opt(self.tof, 4));
        s
    }
}
