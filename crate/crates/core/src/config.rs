use std::sync::Arc;

use crate::error::{GcpError, Result};
use crate::estimator::{NoiseClassifier, SigmaMap};
use crate::parallel::Execution;

pub const DEFAULT_PATCH_SIZE: usize = 8;
pub const DEFAULT_WINDOW: usize = 20;
pub const DEFAULT_GROUP_SIZE: usize = 30;
pub const DEFAULT_LAMBDA: f64 = 1.2;
pub const DEFAULT_TAU_MULT: f64 = 1.1;
pub const DEFAULT_STRIDE: usize = 4;

/// Where the per-reference noise level comes from.
#[derive(Debug, Clone)]
pub enum SigmaSource {
    Fixed(f64),
    Estimated(Arc<NoiseClassifier>),
    /// Precomputed maps, one per frame (or a single map shared by all).
    Maps(Arc<Vec<SigmaMap>>),
}

#[derive(Debug, Clone)]
pub struct DenoiseConfig {
    pub patch_size: usize,
    /// Side of the square search window, in candidate positions.
    pub window: usize,
    /// Number of patches per group, reference included.
    pub group_size: usize,
    /// Green-channel search weight.
    pub lambda: f64,
    pub tau_mult: f64,
    /// Step between reference patches.
    pub stride: usize,
    pub sigma: SigmaSource,
    pub execution: Execution,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_PATCH_SIZE,
            window: DEFAULT_WINDOW,
            group_size: DEFAULT_GROUP_SIZE,
            lambda: DEFAULT_LAMBDA,
            tau_mult: DEFAULT_TAU_MULT,
            stride: DEFAULT_STRIDE,
            sigma: SigmaSource::Fixed(0.0),
            execution: Execution::default(),
        }
    }
}

impl DenoiseConfig {
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            sigma: SigmaSource::Fixed(sigma),
            ..Self::default()
        }
    }

    /// A copy of this configuration with a fixed noise level.
    pub fn with_fixed_sigma(&self, sigma: f64) -> Self {
        Self {
            sigma: SigmaSource::Fixed(sigma),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GcpError::InvalidConfig(m.to_string()));
        if self.patch_size == 0 {
            return bad("patch size must be positive");
        }
        if self.patch_size > self.window {
            return bad("patch size must not exceed the search window");
        }
        if self.group_size == 0 {
            return bad("group size must be at least 1");
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return bad("lambda must be positive");
        }
        if self.tau_mult.is_nan() || self.tau_mult < 0.0 {
            return bad("tau multiplier must be nonnegative");
        }
        if self.stride == 0 {
            return bad("stride must be at least 1");
        }
        if let SigmaSource::Fixed(s) = self.sigma {
            if !s.is_finite() || s < 0.0 {
                return bad("sigma must be finite and nonnegative");
            }
        }
        Ok(())
    }

    /// Hard threshold for noise level `sigma` when groups draw on
    /// `frames` frames: `tau_mult * sigma * sqrt(2 ln(4 ps^2 frames K))`.
    pub fn tau(&self, sigma: f64, frames: usize) -> f64 {
        hard_threshold_level(self.tau_mult, sigma, self.patch_size, self.group_size, frames)
    }
}

pub fn hard_threshold_level(tau_mult: f64, sigma: f64, patch_size: usize, group_size: usize, frames: usize) -> f64 {
    let n = (4 * patch_size * patch_size * frames * group_size) as f64;
    tau_mult * sigma * (2.0 * n.ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = DenoiseConfig::default();
        assert_eq!((cfg.patch_size, cfg.window, cfg.group_size), (8, 20, 30));
        assert_eq!(cfg.lambda, 1.2);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_invalid() {
        let d = DenoiseConfig::default;
        assert!(DenoiseConfig { patch_size: 24, ..d() }.validate().is_err());
        assert!(DenoiseConfig { stride: 0, ..d() }.validate().is_err());
        assert!(DenoiseConfig { lambda: 0.0, ..d() }.validate().is_err());
        assert!(DenoiseConfig {
            lambda: f64::NAN,
            ..d()
        }
        .validate()
        .is_err());
        assert!(DenoiseConfig::with_sigma(-1.0).validate().is_err());
    }

    #[test]
    fn threshold_at_sigma_20() {
        // 1.1 * 20 * sqrt(2 ln 7680)
        let tau = DenoiseConfig::default().tau(20.0, 1);
        assert!((tau - 93.058).abs() < 5e-3, "{tau}");
        assert_eq!(DenoiseConfig::default().tau(0.0, 3), 0.0);
    }
}
