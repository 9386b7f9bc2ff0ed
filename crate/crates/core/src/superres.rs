//! Pluggable super-resolution stage applied to the final image.

use image::imageops::{self, FilterType};
use image::Rgb32FImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpscalerHandle {
    pub identity: String,
    pub factor: u32,
    pub deterministic: bool,
}

pub trait Upscaler: Send + Sync {
    fn handle(&self) -> &UpscalerHandle;

    fn upscale(&self, img: &ImageBuffer) -> Result<ImageBuffer>;
}

/// Separable Lanczos-3 resampling; output clamped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LanczosUpscaler {
    handle: UpscalerHandle,
}

impl LanczosUpscaler {
    pub const ID: &'static str = "lanczos";

    pub fn new(factor: u32) -> Result<Self> {
        check_factor(factor)?;
        Ok(Self {
            handle: UpscalerHandle {
                identity: Self::ID.to_string(),
                factor,
                deterministic: true,
            },
        })
    }
}

impl Upscaler for LanczosUpscaler {
    fn handle(&self) -> &UpscalerHandle {
        &self.handle
    }

    fn upscale(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        let (w, h) = (img.width() as u32, img.height() as u32);
        let raw: Vec<f32> = img.pixels().iter().map(|&v| v as f32).collect();
        let src = Rgb32FImage::from_raw(w, h, raw).expect("buffer length matches dimensions");
        let f = self.handle.factor;
        let out = imageops::resize(&src, w * f, h * f, FilterType::Lanczos3);
        let pixels = out.into_raw().into_iter().map(f64::from).collect();
        ImageBuffer::from_clamped((h * f) as usize, (w * f) as usize, pixels)
    }
}

fn check_factor(factor: u32) -> Result<()> {
    if factor != 2 && factor != 4 {
        return Err(Error::config(
            "superres.factor",
            format!("must be 2 or 4, got {factor}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperresConfig {
    pub enabled: bool,
    pub adapter: String,
    pub factor: u32,
}

impl Default for SuperresConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            adapter: LanczosUpscaler::ID.to_string(),
            factor: 2,
        }
    }
}

impl SuperresConfig {
    pub fn validate(&self) -> Result<()> {
        check_factor(self.factor)?;
        upscaler_from_config(self).map(|_| ())
    }
}

/// Looks up an upscaler by adapter id.
pub fn upscaler_from_config(cfg: &SuperresConfig) -> Result<Box<dyn Upscaler>> {
    match cfg.adapter.as_str() {
        LanczosUpscaler::ID => Ok(Box::new(LanczosUpscaler::new(cfg.factor)?)),
        other => Err(Error::config(
            "superres.adapter",
            format!("unknown upscaler `{other}`"),
        )),
    }
}

/// Runs `u` and enforces the shape law.
pub fn upscale(u: &dyn Upscaler, img: &ImageBuffer) -> Result<ImageBuffer> {
    let out = u.upscale(img)?;
    let f = u.handle().factor as usize;
    if out.height() != img.height() * f || out.width() != img.width() * f {
        return Err(Error::Backend(format!(
            "upscaler `{}` returned {}x{} for a {}x{} input at factor {f}",
            u.handle().identity,
            out.height(),
            out.width(),
            img.height(),
            img.width()
        )));
    }
    Ok(out)
}

/// Applies the configured stage, or returns the image unchanged when disabled.
pub fn apply_stage(cfg: &SuperresConfig, img: &ImageBuffer) -> Result<ImageBuffer> {
    if !cfg.enabled {
        return Ok(img.clone());
    }
    upscale(upscaler_from_config(cfg)?.as_ref(), img)
}
