//! Latent generator interface (encode, differentiable decode, sampling) and
//! the level-to-level latent handoff.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, MIN_EDGE};
use crate::sampling::SampleMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The learnable tensor, stored channel-major (`C×h×w`), tagged with the
/// image size it decodes to.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    shape: LatentShape,
    image_height: usize,
    image_width: usize,
    values: Vec<f64>,
}

impl LatentTensor {
    pub fn new(
        shape: LatentShape,
        image_height: usize,
        image_width: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::domain(format!(
                "latent has {} values, shape {:?} needs {}",
                values.len(),
                shape,
                shape.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("latent contains non-finite values"));
        }
        Ok(Self {
            shape,
            image_height,
            image_width,
            values,
        })
    }

    pub fn zeros(shape: LatentShape, image_height: usize, image_width: usize) -> Self {
        Self {
            shape,
            image_height,
            image_width,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    /// Image `(height, width)` this latent decodes to.
    pub fn image_size(&self) -> (usize, usize) {
        (self.image_height, self.image_width)
    }

    /// Square resolution tag; the larger edge for non-square latents.
    pub fn resolution(&self) -> usize {
        self.image_height.max(self.image_width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorHandle {
    pub identity: String,
    /// Pixels per latent cell along each axis.
    pub stride: usize,
    pub latent_channels: usize,
    pub differentiable: bool,
    pub reentrant: bool,
}

/// A latent generator backend (the role played by a VQGAN-style model).
pub trait LatentGenerator: Send + Sync {
    fn handle(&self) -> &GeneratorHandle;

    fn latent_shape_for(&self, height: usize, width: usize) -> Result<LatentShape> {
        let h = self.handle();
        if height < MIN_EDGE
            || width < MIN_EDGE
            || !height.is_multiple_of(h.stride)
            || !width.is_multiple_of(h.stride)
        {
            return Err(Error::domain(format!(
                "image size {height}x{width} must be at least {MIN_EDGE} and divisible by the generator stride {}",
                h.stride
            )));
        }
        Ok(LatentShape {
            channels: h.latent_channels,
            height: height / h.stride,
            width: width / h.stride,
        })
    }

    fn encode(&self, img: &ImageBuffer) -> Result<LatentTensor>;

    fn decode(&self, t: &LatentTensor) -> Result<ImageBuffer>;

    /// Gradient with respect to `t` of `<grad_pixels, decode(t)>`.
    fn decode_pullback(&self, t: &LatentTensor, grad_pixels: &[f64]) -> Result<Vec<f64>>;

    fn random_latent(&self, resolution: usize, seed: u64) -> Result<LatentTensor>;
}

/// Moves a latent to a higher resolution by decoding, bilinearly resizing
/// the image and re-encoding it.
pub fn latent_transfer(
    gen: &dyn LatentGenerator,
    t: &LatentTensor,
    new_resolution: usize,
) -> Result<LatentTensor> {
    if new_resolution <= t.resolution() {
        return Err(Error::domain(format!(
            "latent transfer must increase resolution ({} -> {new_resolution})",
            t.resolution()
        )));
    }
    gen.latent_shape_for(new_resolution, new_resolution)?;
    let img = gen.decode(t)?;
    gen.encode(&img.resize(new_resolution, new_resolution)?)
}

const LOGIT_EPS: f64 = 1e-3;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
    (p / (1.0 - p)).ln()
}

/// Deterministic stand-in for a pretrained latent generator.
///
/// * encode: average-pool by `stride`, map to logits, then apply the fixed
///   `C×3` channel matrix.
/// * decode: apply the pseudo-inverse `3×C` matrix, bilinear upsample by
///   `stride`, logistic squashing to `(0, 1)`.
///
/// The zero latent decodes to the constant image 0.5.
#[derive(Debug, Clone)]
pub struct ToyGenerator {
    handle: GeneratorHandle,
    /// Row-major `C×3`.
    encode_matrix: Vec<f64>,
    /// Row-major `3×C`.
    decode_matrix: Vec<f64>,
}

impl ToyGenerator {
    pub const ID: &'static str = "toy-generator";
    pub const STRIDE: usize = 4;
    pub const CHANNELS: usize = 8;
    pub const DEFAULT_SEED: u64 = 0x9e4e_4a70;

    pub fn new() -> Self {
        Self::seeded(Self::DEFAULT_SEED)
    }

    /// Random channel map with orthonormal columns.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Self::CHANNELS;
        let random = DMatrix::<f64>::from_fn(c, 3, |_, _| StandardNormal.sample(&mut rng));
        let q = random.qr().q();
        let encode: Vec<f64> = (0..c)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| q[(i, j)])
            .collect();
        Self::from_encode_matrix(Self::ID, Self::STRIDE, c, encode)
            .expect("orthonormal map has full rank")
    }

    /// Builds a generator from a row-major `channels×3` encode matrix; the
    /// decode matrix is its Moore-Penrose pseudo-inverse.
    pub fn from_encode_matrix(
        identity: &str,
        stride: usize,
        channels: usize,
        encode_matrix: Vec<f64>,
    ) -> Result<Self> {
        if stride == 0 || channels < 3 || encode_matrix.len() != channels * 3 {
            return Err(Error::Backend(format!(
                "encode matrix must be {channels}x3 with a nonzero stride"
            )));
        }
        if encode_matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Backend(
                "encode matrix contains non-finite weights".into(),
            ));
        }
        let e = DMatrix::from_row_slice(channels, 3, &encode_matrix);
        let pinv = e
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|msg| Error::Backend(format!("encode matrix not invertible: {msg}")))?;
        if (&pinv * &e - DMatrix::<f64>::identity(3, 3)).amax() > 1e-8 {
            return Err(Error::Backend("encode matrix must have rank 3".into()));
        }
        let decode_matrix = (0..3)
            .flat_map(|i| (0..channels).map(move |j| (i, j)))
            .map(|(i, j)| pinv[(i, j)])
            .collect();
        Ok(Self {
            handle: GeneratorHandle {
                identity: identity.to_string(),
                stride,
                latent_channels: channels,
                differentiable: true,
                reentrant: true,
            },
            encode_matrix,
            decode_matrix,
        })
    }

    fn check_latent(&self, t: &LatentTensor) -> Result<()> {
        let (h, w) = t.image_size();
        let expected = self.latent_shape_for(h, w)?;
        if t.shape() != expected {
            return Err(Error::domain(format!(
                "latent shape {:?} does not match {:?} expected for {h}x{w}",
                t.shape(),
                expected
            )));
        }
        Ok(())
    }

    /// `3`-channel low-resolution logits, interleaved `h×w×3`.
    fn mix_to_rgb(&self, t: &LatentTensor) -> Vec<f64> {
        let s = t.shape();
        let cells = s.height * s.width;
        let v = t.values();
        let mut out = vec![0.0; cells * 3];
        for k in 0..cells {
            for j in 0..3 {
                let row = &self.decode_matrix[j * s.channels..(j + 1) * s.channels];
                out[k * 3 + j] = row
                    .iter()
                    .enumerate()
                    .map(|(c, d)| d * v[c * cells + k])
                    .sum();
            }
        }
        out
    }

    fn upsample_map(&self, t: &LatentTensor) -> SampleMap {
        let s = t.shape();
        let (h, w) = t.image_size();
        SampleMap::resize(s.height, s.width, h, w)
    }
}

impl Default for ToyGenerator {
    fn default() -> Self {
        Self::new()
    }
}

impl LatentGenerator for ToyGenerator {
    fn handle(&self) -> &GeneratorHandle {
        &self.handle
    }

    fn encode(&self, img: &ImageBuffer) -> Result<LatentTensor> {
        let shape = self.latent_shape_for(img.height(), img.width())?;
        let stride = self.handle.stride;
        let cells = shape.height * shape.width;
        let norm = 1.0 / (stride * stride) as f64;
        let mut values = vec![0.0; shape.len()];
        for cy in 0..shape.height {
            for cx in 0..shape.width {
                let mut mean = [0.0; 3];
                for y in cy * stride..(cy + 1) * stride {
                    for x in cx * stride..(cx + 1) * stride {
                        let p = img.pixel(y, x);
                        for c in 0..3 {
                            mean[c] += p[c] * norm;
                        }
                    }
                }
                let logits = mean.map(logit);
                let k = cy * shape.width + cx;
                for c in 0..shape.channels {
                    let row = &self.encode_matrix[c * 3..c * 3 + 3];
                    values[c * cells + k] =
                        row[0] * logits[0] + row[1] * logits[1] + row[2] * logits[2];
                }
            }
        }
        LatentTensor::new(shape, img.height(), img.width(), values)
    }

    fn decode(&self, t: &LatentTensor) -> Result<ImageBuffer> {
        self.check_latent(t)?;
        let (h, w) = t.image_size();
        let up = self.upsample_map(t).apply(&self.mix_to_rgb(t));
        ImageBuffer::from_clamped(h, w, up.into_iter().map(sigmoid).collect())
    }

    fn decode_pullback(&self, t: &LatentTensor, grad_pixels: &[f64]) -> Result<Vec<f64>> {
        self.check_latent(t)?;
        let (h, w) = t.image_size();
        if grad_pixels.len() != h * w * 3 {
            return Err(Error::domain("pixel gradient has the wrong length"));
        }
        let map = self.upsample_map(t);
        let pre = map.apply(&self.mix_to_rgb(t));
        let g_pre: Vec<f64> = pre
            .iter()
            .zip(grad_pixels)
            .map(|(x, g)| {
                let y = sigmoid(*x);
                g * y * (1.0 - y)
            })
            .collect();
        let g_low = map.adjoint(&g_pre);
        let s = t.shape();
        let cells = s.height * s.width;
        let mut grad = vec![0.0; s.len()];
        for c in 0..s.channels {
            for k in 0..cells {
                grad[c * cells + k] = (0..3)
                    .map(|j| self.decode_matrix[j * s.channels + c] * g_low[k * 3 + j])
                    .sum();
            }
        }
        Ok(grad)
    }

    /// Standard normal per component.
    fn random_latent(&self, resolution: usize, seed: u64) -> Result<LatentTensor> {
        let shape = self.latent_shape_for(resolution, resolution)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..shape.len())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        LatentTensor::new(shape, resolution, resolution, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fixture_image(size: usize) -> ImageBuffer {
        let f = size as f64;
        ImageBuffer::from_fn(size, size, |y, x| {
            let (u, v) = (x as f64 / f, y as f64 / f);
            [
                0.5 + 0.35 * (3.0 * u).sin(),
                0.2 + 0.6 * v,
                0.5 + 0.3 * (2.0 * (u + v)).cos(),
            ]
        })
        .unwrap()
    }

    #[test]
    fn encode_shapes_and_stride_errors() {
        let gen = ToyGenerator::new();
        let t = gen.encode(&fixture_image(32)).unwrap();
        assert_eq!(
            t.shape(),
            LatentShape {
                channels: 8,
                height: 8,
                width: 8
            }
        );
        assert_eq!(t, gen.encode(&fixture_image(32)).unwrap());
        let odd = ImageBuffer::filled(30, 30, [0.5; 3]).unwrap();
        let err = gen.encode(&odd).unwrap_err().to_string();
        assert!(err.contains("stride 4"), "{err}");
    }

    #[test]
    fn round_trip_reconstructs_smooth_image() {
        let gen = ToyGenerator::new();
        let img = fixture_image(32);
        let back = gen.decode(&gen.encode(&img).unwrap()).unwrap();
        let mae = img.mean_abs_diff(&back).unwrap();
        assert!(mae < 0.15, "mae {mae}");
    }

    #[test]
    fn zero_latent_decodes_to_half_gray() {
        let gen = ToyGenerator::new();
        let shape = gen.latent_shape_for(16, 16).unwrap();
        let img = gen.decode(&LatentTensor::zeros(shape, 16, 16)).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn extreme_latents_stay_in_range() {
        let gen = ToyGenerator::new();
        let mut t = gen.random_latent(16, 3).unwrap();
        for (i, v) in t.values_mut().iter_mut().enumerate() {
            *v = if i % 2 == 0 { 1e3 } else { -1e3 };
        }
        let img = gen.decode(&t).unwrap();
        assert!(img.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn random_latents_are_seeded() {
        let gen = ToyGenerator::new();
        let a = gen.random_latent(32, 1).unwrap();
        assert_eq!(a, gen.random_latent(32, 1).unwrap());
        assert_ne!(a, gen.random_latent(32, 2).unwrap());
        assert_eq!(
            a.shape(),
            LatentShape {
                channels: 8,
                height: 8,
                width: 8
            }
        );
        assert!(gen.random_latent(30, 1).is_err());
    }

    #[test]
    fn decode_rejects_mismatched_shape() {
        let gen = ToyGenerator::new();
        let bad = LatentTensor::zeros(
            LatentShape {
                channels: 8,
                height: 4,
                width: 4,
            },
            32,
            32,
        );
        assert!(gen.decode(&bad).is_err());
    }

    #[test]
    fn transfer_doubles_resolution() {
        let gen = ToyGenerator::new();
        let t = gen.random_latent(32, 5).unwrap();
        let up = latent_transfer(&gen, &t, 64).unwrap();
        assert_eq!(
            up.shape(),
            LatentShape {
                channels: 8,
                height: 16,
                width: 16
            }
        );
        let img = gen.decode(&up).unwrap();
        assert_eq!((img.height(), img.width()), (64, 64));
        assert!(latent_transfer(&gen, &t, 32).is_err());
        assert!(latent_transfer(&gen, &up, 32).is_err());
    }

    #[test]
    fn weights_must_have_full_rank() {
        assert!(ToyGenerator::from_encode_matrix(
            "x",
            4,
            3,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        )
        .is_err());
        assert!(ToyGenerator::from_encode_matrix(
            "x",
            4,
            3,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        )
        .is_ok());
    }
}
