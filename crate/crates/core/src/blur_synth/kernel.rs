use crate::error::{ensure_param, Result};

/// Default Gaussian standard deviation for synthetic focal blur.
pub const DEFAULT_SIGMA: f64 = 5.0;

/// Truncated, renormalized 2-D Gaussian on an odd `size x size` support.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    size: usize,
    sigma: f64,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    /// Row-major `size x size` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at integer offset `(dx, dy)` from the center.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius() as isize;
        assert!(dx.abs() <= r && dy.abs() <= r, "offset outside kernel support");
        self.weights[((dy + r) as usize) * self.size + (dx + r) as usize]
    }
}

/// Builds the `size x size` kernel with weights proportional to `exp(-(x^2 + y^2) / (2 sigma^2))`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<GaussianKernel> {
    let taps = gaussian_taps(size, sigma)?;
    let weights = taps
        .iter()
        .flat_map(|&wy| taps.iter().map(move |&wx| wx * wy))
        .collect();
    Ok(GaussianKernel { size, sigma, weights })
}

/// Normalized 1-D Gaussian taps. The 2-D kernel is their outer product, so separable
/// filtering with these taps is the same operator as convolving with [`gaussian_kernel`].
pub fn gaussian_taps(size: usize, sigma: f64) -> Result<Vec<f64>> {
    ensure_param!(size % 2 == 1, "kernel size must be odd, got {size}");
    ensure_param!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive, got {sigma}");
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / sum).collect())
}
