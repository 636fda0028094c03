//! Synthetic focal blur: depth-dependent Gaussian blurring, focus-shift schedules and
//! dataset construction.

mod dataset;
mod kernel;
mod model;
mod render;
mod schedule;

pub use dataset::{
    build_davis_blur, build_with_schedule, generate_training_sample, max_depth, LowResolution, SynthesizedDataset,
    BENCHMARK_FOCAL_RANGE, BENCHMARK_INITIAL_FOCAL_POINT, BENCHMARK_N_MAX, LOW_RES_FACTOR,
};
pub use kernel::{gaussian_kernel, gaussian_taps, GaussianKernel, DEFAULT_SIGMA};
pub use model::{blur_size_at_depth, snap_to_odd, DEPTH_MAX, DEPTH_MIN};
pub use render::{blur_map_for, render_focal_blur, BlurParams, FocalBlur};
pub use schedule::{
    render_at_focal_points, sample_training_schedule, synthesize_sequence, Augmentation, FocusSchedule,
    ScheduleBounds, SynthesizedClip, TrainingDraw, N_MAX_CHOICES,
};
