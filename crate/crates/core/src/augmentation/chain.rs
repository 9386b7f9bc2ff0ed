use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::AugmentConfig;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::sampling::SampleMap;

/// Everything needed to pull a gradient on a view back onto its source
/// image: the linear resampling stages in application order and the mask of
/// values left unclamped by the final clamp.
#[derive(Debug, Clone)]
pub struct ViewTape {
    stages: Vec<SampleMap>,
    unclamped: Vec<bool>,
}

impl ViewTape {
    /// Gradient with respect to the source pixels, given the gradient with
    /// respect to the view pixels.
    pub fn pullback(&self, grad_view: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = grad_view
            .iter()
            .zip(&self.unclamped)
            .map(|(g, keep)| if *keep { *g } else { 0.0 })
            .collect();
        for stage in self.stages.iter().rev() {
            g = stage.adjoint(&g);
        }
        g
    }
}

/// Draws one augmented `crop × crop` view of `img`.
pub fn random_view(img: &ImageBuffer, cfg: &AugmentConfig, seed: u64) -> Result<ImageBuffer> {
    random_view_with_tape(img, cfg, seed).map(|(view, _)| view)
}

/// Like [`random_view`], also returning the tape for backpropagation.
///
/// Stages, in order: independent per-axis resize, crop, perspective warp,
/// horizontal flip, additive Gaussian noise, clamp to `[0, 1]`.
pub fn random_view_with_tape(
    img: &ImageBuffer,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<(ImageBuffer, ViewTape)> {
    cfg.validate()?;
    let crop = cfg.crop_size()?;
    let (h, w) = (img.height(), img.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let [low, high] = cfg.resize_range;
    let fy = rng.random_range(low..=high);
    let fx = rng.random_range(low..=high);
    let rh = (h as f64 * fy).round() as usize;
    let rw = (w as f64 * fx).round() as usize;
    if rh < crop || rw < crop {
        return Err(Error::domain(format!(
            "image {h}x{w} resized to {rh}x{rw} is smaller than the {crop}px crop"
        )));
    }
    let top = rng.random_range(0..=rh - crop);
    let left = rng.random_range(0..=rw - crop);

    let reach = cfg.perspective_scale * crop as f64 / 2.0;
    let mut corners = [(0.0, 0.0); 4];
    for c in &mut corners {
        *c = (
            rng.random_range(-1.0..=1.0) * reach,
            rng.random_range(-1.0..=1.0) * reach,
        );
    }
    let flip = rng.random::<f64>() < cfg.flip_probability;

    let mut stages = vec![SampleMap::resize_window(
        h, w, rh, rw, top, left, crop, crop,
    )];
    if cfg.perspective_scale > 0.0 {
        stages.push(perspective_map(crop, &corners)?);
    }
    if flip {
        stages.push(SampleMap::flip_horizontal(crop, crop));
    }

    let mut values = img.pixels().to_vec();
    for stage in &stages {
        values = stage.apply(&values);
    }
    if cfg.gaussian_sigma > 0.0 {
        let normal =
            Normal::new(0.0, cfg.gaussian_sigma).map_err(|e| Error::domain(e.to_string()))?;
        for v in &mut values {
            *v += normal.sample(&mut rng);
        }
    }
    let unclamped = values.iter().map(|v| (0.0..=1.0).contains(v)).collect();
    let view = ImageBuffer::from_clamped(crop, crop, values)?;
    Ok((view, ViewTape { stages, unclamped }))
}

/// Bilinear warp of a `size × size` image whose output corners read from the
/// source corners displaced by `offsets` (`(dx, dy)` per corner, clockwise
/// from top-left). Out-of-bounds reads clamp to the edge.
fn perspective_map(size: usize, offsets: &[(f64, f64); 4]) -> Result<SampleMap> {
    let e = (size - 1) as f64;
    let dst = [(0.0, 0.0), (e, 0.0), (e, e), (0.0, e)];
    let src: Vec<(f64, f64)> = dst
        .iter()
        .zip(offsets)
        .map(|(&(x, y), &(dx, dy))| (x + dx, y + dy))
        .collect();
    let hom = homography(&dst, &src)?;
    Ok(SampleMap::from_coords(size, size, size, size, |y, x| {
        let (x, y) = (x as f64, y as f64);
        let den = hom[6] * x + hom[7] * y + 1.0;
        let sx = (hom[0] * x + hom[1] * y + hom[2]) / den;
        let sy = (hom[3] * x + hom[4] * y + hom[5]) / den;
        (sy, sx)
    }))
}

/// Solves for the 8 free entries of the projective map taking each `from`
/// point to the matching `to` point.
fn homography(from: &[(f64, f64); 4], to: &[(f64, f64)]) -> Result<[f64; 8]> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (&(x, y), &(u, v))) in from.iter().zip(to).enumerate() {
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::domain("degenerate perspective corners"))?;
    let mut out = [0.0; 8];
    out.copy_from_slice(sol.as_slice());
    Ok(out)
}

/// `n` views with seeds `seed, seed + 1, …`.
pub fn augment_batch(
    img: &ImageBuffer,
    cfg: &AugmentConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<ImageBuffer>> {
    Ok(augment_batch_with_tapes(img, cfg, n, seed)?
        .into_iter()
        .map(|(v, _)| v)
        .collect())
}

pub fn augment_batch_with_tapes(
    img: &ImageBuffer,
    cfg: &AugmentConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<(ImageBuffer, ViewTape)>> {
    if n < 1 {
        return Err(Error::domain("augment_batch needs at least one view"));
    }
    (0..n as u64)
        .map(|i| random_view_with_tape(img, cfg, seed.wrapping_add(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker(size: usize) -> ImageBuffer {
        ImageBuffer::from_fn(size, size, |y, x| {
            let v = ((y / 3 + x / 5) % 2) as f64;
            [
                v,
                0.25 + 0.5 * (x as f64 / size as f64),
                0.7 - 0.4 * (y as f64 / size as f64),
            ]
        })
        .unwrap()
    }

    #[test]
    fn identity_configuration_reproduces_input() {
        let img = checker(24);
        let view = random_view(&img, &AugmentConfig::identity(24), 11).unwrap();
        assert_eq!(view, img);
    }

    #[test]
    fn flip_only_is_exact_mirror() {
        let img = checker(20);
        let cfg = AugmentConfig {
            flip_probability: 1.0,
            ..AugmentConfig::identity(20)
        };
        let view = random_view(&img, &cfg, 3).unwrap();
        for y in 0..20 {
            for x in 0..20 {
                assert_eq!(view.pixel(y, x), img.pixel(y, 19 - x));
            }
        }
        assert_eq!(random_view(&view, &cfg, 4).unwrap(), img);
    }

    #[test]
    fn views_are_seeded_sized_and_distinct() {
        let img = checker(40);
        let cfg = AugmentConfig::default().with_crop_size(32);
        let a = random_view(&img, &cfg, 8).unwrap();
        assert_eq!(a, random_view(&img, &cfg, 8).unwrap());
        let batch = augment_batch(&img, &cfg, 8, 100).unwrap();
        assert_eq!(batch.len(), 8);
        for v in &batch {
            assert_eq!((v.height(), v.width()), (32, 32));
            assert!(v.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(batch[i], batch[j]);
            }
        }
        assert_eq!(
            augment_batch(&img, &cfg, 1, 100).unwrap()[0],
            random_view(&img, &cfg, 100).unwrap()
        );
        assert!(augment_batch(&img, &cfg, 0, 1).is_err());
    }

    #[test]
    fn too_small_image_is_rejected() {
        let img = checker(32);
        let cfg = AugmentConfig::default().with_crop_size(32);
        // Scale 0.8 for some seed shrinks 32 below the crop.
        let errs = (0..20)
            .filter(|s| random_view(&img, &cfg, *s).is_err())
            .count();
        assert!(errs > 0);
    }

    #[test]
    fn zero_offsets_give_identity_homography() {
        let e = 9.0;
        let pts = [(0.0, 0.0), (e, 0.0), (e, e), (0.0, e)];
        let h = homography(&pts, &pts).unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        for (a, b) in h.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
