use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NoiseConfig;
use crate::error::Result;
use crate::image::{check_dims, ImageBuffer};
use crate::seed;

/// Single-channel scalar field, row-major, values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl NoiseField {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// The field broadcast to three channels and mapped from `[-1, 1]` to
    /// `[0, 1]`, for display.
    pub fn to_image(&self) -> Result<ImageBuffer> {
        let pixels = self
            .values
            .iter()
            .flat_map(|v| [0.5 * (v + 1.0); 3])
            .collect();
        ImageBuffer::from_clamped(self.height, self.width, pixels)
    }
}

/// One octave of value noise: a `(f+1)²` lattice of uniform `[-1, 1]`
/// values, `f = base_frequency · 2^octave`, sampled bilinearly at pixel
/// centers.
pub fn noise_layer(
    height: usize,
    width: usize,
    cfg: &NoiseConfig,
    seed: u64,
    octave: u32,
) -> Result<NoiseField> {
    check_dims(height, width)?;
    cfg.validate()?;
    let cells = cfg.base_frequency as usize * (1usize << octave);
    let side = cells + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, u64::from(octave)));
    let lattice: Vec<f64> = (0..side * side)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();

    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        let v = (y as f64 + 0.5) / height as f64 * cells as f64;
        let y0 = (v.floor() as usize).min(cells - 1);
        let fy = v - y0 as f64;
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64 * cells as f64;
            let x0 = (u.floor() as usize).min(cells - 1);
            let fx = u - x0 as f64;
            let at = |yy: usize, xx: usize| lattice[yy * side + xx];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(NoiseField {
        height,
        width,
        values,
    })
}

/// Persistence-weighted sum of octaves, renormalized by `Σ persistence^o`
/// so the field stays in `[-1, 1]`.
pub fn fractal_noise(
    height: usize,
    width: usize,
    cfg: &NoiseConfig,
    seed: u64,
) -> Result<NoiseField> {
    check_dims(height, width)?;
    cfg.validate()?;
    let mut acc = vec![0.0; height * width];
    let mut total_weight = 0.0;
    for octave in 0..cfg.octaves {
        let weight = cfg.persistence.powi(octave as i32);
        let layer = noise_layer(height, width, cfg, seed, octave)?;
        for (a, v) in acc.iter_mut().zip(&layer.values) {
            *a += weight * v;
        }
        total_weight += weight;
    }
    for a in &mut acc {
        *a = (*a / total_weight).clamp(-1.0, 1.0);
    }
    Ok(NoiseField {
        height,
        width,
        values: acc,
    })
}

/// `clamp(img + amplitude · noise)` together with the mask of channel values
/// that stayed inside `[0, 1]` (where the gradient is 1).
pub fn add_noise_with_mask(
    img: &ImageBuffer,
    cfg: &NoiseConfig,
    seed: u64,
) -> Result<(ImageBuffer, Vec<bool>)> {
    cfg.validate()?;
    if cfg.amplitude == 0.0 {
        return Ok((img.clone(), vec![true; img.pixels().len()]));
    }
    let field = fractal_noise(img.height(), img.width(), cfg, seed)?;
    let mut mask = Vec::with_capacity(img.pixels().len());
    let mut out = Vec::with_capacity(img.pixels().len());
    for (px, n) in img.pixels().chunks_exact(3).zip(&field.values) {
        for p in px {
            let v = p + cfg.amplitude * n;
            mask.push((0.0..=1.0).contains(&v));
            out.push(v);
        }
    }
    Ok((
        ImageBuffer::from_clamped(img.height(), img.width(), out)?,
        mask,
    ))
}

pub fn add_noise(img: &ImageBuffer, cfg: &NoiseConfig, seed: u64) -> Result<ImageBuffer> {
    add_noise_with_mask(img, cfg, seed).map(|(out, _)| out)
}
