//! RGB rasters with float channels in `[0, 1]`, plus PNG I/O.

use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::SampleMap;

/// Smallest accepted image edge.
pub const MIN_EDGE: usize = 8;

/// Row-major `H×W×3` raster with every channel value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if pixels.len() != height * width * 3 {
            return Err(Error::domain(format!(
                "expected {} channel values for a {height}x{width} RGB image, got {}",
                height * width * 3,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image from values that may leave `[0, 1]`, clamping them.
    /// Non-finite values are rejected.
    pub fn from_clamped(height: usize, width: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("image contains non-finite values"));
        }
        for v in &mut pixels {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(height, width, pixels)
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        check_dims(height, width)?;
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(height * width * 3)
            .collect();
        Self::new(height, width, pixels)
    }

    /// Builds an image by evaluating `f(y, x)` for every pixel.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        check_dims(height, width)?;
        let mut pixels = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(y, x));
            }
        }
        Self::from_clamped(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        3
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Bilinear resize (half-pixel centers, edge clamp).
    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        check_dims(height, width)?;
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let map = SampleMap::resize(self.height, self.width, height, width);
        Self::from_clamped(height, width, map.apply(&self.pixels))
    }

    pub fn mean_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::domain("images differ in size"));
        }
        let sum: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(sum / self.pixels.len() as f64)
    }

    /// Converts to 8-bit RGB by rounding `value * 255`.
    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self
            .pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Converts to 8-bit RGBA with an opaque alpha channel.
    pub fn to_rgba8_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.height * self.width * 4);
        for px in self.pixels.chunks_exact(3) {
            for v in px {
                out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
            out.push(255);
        }
        out
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Result<Self> {
        let pixels = img.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(img.height() as usize, img.width() as usize, pixels)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let decoded = image::load_from_memory(&bytes)?;
        Self::from_rgb8(&decoded.to_rgb8())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(Error::from)
    }
}

pub(crate) fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < MIN_EDGE || width < MIN_EDGE {
        return Err(Error::domain(format!(
            "image is {height}x{width}; both edges must be at least {MIN_EDGE}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_small_images() {
        assert!(ImageBuffer::new(8, 8, vec![1.5; 192]).is_err());
        assert!(ImageBuffer::filled(4, 8, [0.0; 3]).is_err());
        assert!(ImageBuffer::new(8, 8, vec![0.5; 191]).is_err());
    }

    #[test]
    fn resize_to_same_size_is_identity() {
        let img =
            ImageBuffer::from_fn(9, 12, |y, x| [y as f64 / 9.0, x as f64 / 12.0, 0.3]).unwrap();
        assert_eq!(img.resize(9, 12).unwrap(), img);
    }

    #[test]
    fn png_round_trip_quantizes_to_255_levels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img =
            ImageBuffer::from_fn(8, 10, |y, x| [(y * 10 + x) as f64 / 80.0, 0.25, 1.0]).unwrap();
        img.save_png(&path).unwrap();
        let back = ImageBuffer::load_png(&path).unwrap();
        assert_eq!((back.height(), back.width()), (8, 10));
        assert!(img.mean_abs_diff(&back).unwrap() <= 0.5 / 255.0 + 1e-12);
    }
}
