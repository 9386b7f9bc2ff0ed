//! Fractal noise and the random augmentation chain applied to decoded
//! intermediates before they are embedded.

mod chain;
mod noise;

pub use chain::{
    augment_batch, augment_batch_with_tapes, random_view, random_view_with_tape, ViewTape,
};
pub use noise::{add_noise, add_noise_with_mask, fractal_noise, noise_layer, NoiseField};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::MIN_EDGE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub n_views: usize,
    /// Per-axis scale factor range `[low, high]`.
    pub resize_range: [f64; 2],
    /// Side of the square crop; `None` means the encoder input resolution.
    pub crop_size: Option<usize>,
    /// Corner displacement bound as a fraction of `crop_size`.
    pub perspective_scale: f64,
    pub flip_probability: f64,
    pub gaussian_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            n_views: 8,
            resize_range: [0.8, 1.2],
            crop_size: None,
            perspective_scale: 0.2,
            flip_probability: 0.5,
            gaussian_sigma: 0.02,
        }
    }
}

impl AugmentConfig {
    /// Every random stage disabled; with `crop_size` equal to the image
    /// size, views reproduce their input.
    pub fn identity(crop_size: usize) -> Self {
        Self {
            n_views: 1,
            resize_range: [1.0, 1.0],
            crop_size: Some(crop_size),
            perspective_scale: 0.0,
            flip_probability: 0.0,
            gaussian_sigma: 0.0,
        }
    }

    pub fn with_crop_size(mut self, crop_size: usize) -> Self {
        self.crop_size = Some(crop_size);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let [low, high] = self.resize_range;
        if self.n_views < 1 {
            return Err(Error::config("augment.n_views", "must be at least 1"));
        }
        if !(low.is_finite() && high.is_finite() && low > 0.0 && low <= high) {
            return Err(Error::config(
                "augment.resize_range",
                format!("need 0 < low <= high, got [{low}, {high}]"),
            ));
        }
        if self.crop_size.is_some_and(|c| c < MIN_EDGE) {
            return Err(Error::config(
                "augment.crop_size",
                format!("must be at least {MIN_EDGE}"),
            ));
        }
        if !(0.0..1.0).contains(&self.perspective_scale) {
            return Err(Error::config(
                "augment.perspective_scale",
                "must lie in [0, 1)",
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::config(
                "augment.flip_probability",
                "must lie in [0, 1]",
            ));
        }
        if !(self.gaussian_sigma.is_finite() && self.gaussian_sigma >= 0.0) {
            return Err(Error::config(
                "augment.gaussian_sigma",
                "must be non-negative",
            ));
        }
        Ok(())
    }

    /// Checks that an image of `height × width` still covers the crop after
    /// the smallest allowed resize.
    pub fn check_fits(&self, height: usize, width: usize) -> Result<()> {
        let crop = self.crop_size()?;
        let low = self.resize_range[0];
        let min_h = (height as f64 * low).round() as usize;
        let min_w = (width as f64 * low).round() as usize;
        if min_h.min(min_w) < crop {
            return Err(Error::config(
                "augment.crop_size",
                format!(
                    "crop {crop} exceeds the smallest resized image {min_h}x{min_w} (from {height}x{width} at scale {low})"
                ),
            ));
        }
        Ok(())
    }

    pub fn crop_size(&self) -> Result<usize> {
        self.crop_size.ok_or_else(|| {
            Error::config(
                "augment.crop_size",
                "unset; resolve it from the encoder first",
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub octaves: u32,
    pub persistence: f64,
    /// Lattice cells per image edge at the first octave.
    pub base_frequency: u32,
    pub amplitude: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            octaves: 4,
            persistence: 0.5,
            base_frequency: 4,
            amplitude: 0.1,
        }
    }
}

impl NoiseConfig {
    /// Frequencies above this are pointless at any supported image size.
    pub const MAX_OCTAVES: u32 = 12;

    pub fn validate(&self) -> Result<()> {
        if !(1..=Self::MAX_OCTAVES).contains(&self.octaves) {
            return Err(Error::config(
                "noise.octaves",
                format!("must lie in [1, {}]", Self::MAX_OCTAVES),
            ));
        }
        if !(self.persistence > 0.0 && self.persistence <= 1.0) {
            return Err(Error::config("noise.persistence", "must lie in (0, 1]"));
        }
        if self.base_frequency < 1 {
            return Err(Error::config("noise.base_frequency", "must be at least 1"));
        }
        if !(0.0..=0.5).contains(&self.amplitude) {
            return Err(Error::config("noise.amplitude", "must lie in [0, 0.5]"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AugmentConfig::default().validate().unwrap();
        NoiseConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_name_their_field() {
        let cfg = AugmentConfig {
            resize_range: [1.2, 0.8],
            ..Default::default()
        };
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("augment.resize_range"));
        let cfg = AugmentConfig {
            flip_probability: 1.5,
            ..Default::default()
        };
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("flip_probability"));
        let cfg = NoiseConfig {
            amplitude: 0.7,
            ..Default::default()
        };
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("noise.amplitude"));
        let cfg = NoiseConfig {
            octaves: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fit_check_uses_smallest_scale() {
        let cfg = AugmentConfig::default().with_crop_size(32);
        assert!(cfg.check_fits(32, 32).is_err());
        assert!(cfg.check_fits(40, 40).is_ok());
    }
}
