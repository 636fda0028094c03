//! Training losses and evaluation metrics: Charbonnier and masked L1 losses, PSNR,
//! SSIM and the temporal-consistency score tOF.

mod loss;
mod quality;
mod report;
mod tof;

pub use loss::{charbonnier, masked_l1, total_loss, LossWeights};
pub use quality::{psnr, psnr_masked, ssim, ssim_map, ssim_masked, PSNR_CAP, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{evaluate, FrameMetrics, MetricReport};
pub use tof::{tof, tof_with, BlockMatcher};
