//! Browser bindings for the demo page in `www/`: fractal noise, random
//! augmented views, and a step-at-a-time stylizer on the toy backends.

use promptpainter::augmentation::{fractal_noise, random_view, AugmentConfig, NoiseConfig};
use promptpainter::optim::Optimizer;
use promptpainter::pipeline::{step, NullClock, StepContext};
use promptpainter::{
    embed_text, ImageBuffer, ImageEncoder, LatentGenerator, LatentTensor, OptimizerKind,
    ToyEncoder, ToyGenerator, WeightedEmbedding,
};
use wasm_bindgen::prelude::*;

fn js_err(e: promptpainter::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// RGBA bytes (alpha ignored) to an image.
fn from_rgba(rgba: &[u8], width: usize, height: usize) -> Result<ImageBuffer, JsError> {
    if rgba.len() != width * height * 4 {
        return Err(JsError::new(&format!(
            "expected {} bytes for {width}x{height} RGBA, got {}",
            width * height * 4,
            rgba.len()
        )));
    }
    let px = rgba
        .chunks_exact(4)
        .flat_map(|p| p[..3].iter().map(|&c| c as f64 / 255.0))
        .collect();
    ImageBuffer::new(height, width, px).map_err(js_err)
}

/// Fractal value noise mapped from [-1, 1] to grey levels.
#[wasm_bindgen]
pub fn fractal_noise_rgba(
    width: usize,
    height: usize,
    octaves: u32,
    persistence: f64,
    base_frequency: u32,
    seed: u64,
) -> Result<Vec<u8>, JsError> {
    let cfg = NoiseConfig {
        octaves,
        persistence,
        base_frequency,
        ..NoiseConfig::default()
    };
    cfg.validate().map_err(js_err)?;
    let field = fractal_noise(height, width, &cfg, seed).map_err(js_err)?;
    Ok(field
        .values
        .iter()
        .flat_map(|v| {
            let g = ((v + 1.0) * 127.5).round() as u8;
            [g, g, g, 255]
        })
        .collect())
}

/// One random augmented view of an RGBA image, `crop`×`crop` pixels.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn augment_view_rgba(
    rgba: &[u8],
    width: usize,
    height: usize,
    crop: usize,
    perspective_scale: f64,
    flip_probability: f64,
    gaussian_sigma: f64,
    seed: u64,
) -> Result<Vec<u8>, JsError> {
    let img = from_rgba(rgba, width, height)?;
    let cfg = AugmentConfig {
        n_views: 1,
        crop_size: Some(crop),
        perspective_scale,
        flip_probability,
        gaussian_sigma,
        ..AugmentConfig::default()
    };
    cfg.validate().map_err(js_err)?;
    cfg.check_fits(height, width).map_err(js_err)?;
    Ok(random_view(&img, &cfg, seed)
        .map_err(js_err)?
        .to_rgba8_bytes())
}

/// Optimizes a toy latent towards a text prompt, one step per call.
#[wasm_bindgen]
pub struct Stylizer {
    encoder: ToyEncoder,
    generator: ToyGenerator,
    styles: Vec<WeightedEmbedding>,
    augment: AugmentConfig,
    noise: NoiseConfig,
    latent: LatentTensor,
    optimizer: Optimizer,
    learning_rate: f64,
    seed: u64,
    iteration: usize,
    last_loss: f64,
}

#[wasm_bindgen]
impl Stylizer {
    /// `resolution` must be a multiple of 4, at least 32.
    #[wasm_bindgen(constructor)]
    pub fn new(
        prompt: &str,
        resolution: usize,
        seed: u64,
        learning_rate: f64,
        n_views: usize,
    ) -> Result<Stylizer, JsError> {
        let encoder = ToyEncoder::new();
        let generator = ToyGenerator::new();
        let styles = vec![WeightedEmbedding {
            embedding: embed_text(&encoder, prompt).map_err(js_err)?,
            weight: 1.0,
        }];
        let crop = encoder.handle().input_resolution.min(resolution * 4 / 5);
        let augment = AugmentConfig {
            n_views,
            ..AugmentConfig::default().with_crop_size(crop)
        };
        augment.validate().map_err(js_err)?;
        augment.check_fits(resolution, resolution).map_err(js_err)?;
        let latent = generator.random_latent(resolution, seed).map_err(js_err)?;
        let optimizer = Optimizer::new(OptimizerKind::AdaptiveMoments, latent.values().len());
        Ok(Stylizer {
            encoder,
            generator,
            styles,
            augment,
            noise: NoiseConfig::default(),
            latent,
            optimizer,
            learning_rate,
            seed,
            iteration: 0,
            last_loss: f64::NAN,
        })
    }

    /// Runs one optimization step and returns its loss.
    pub fn step(&mut self) -> Result<f64, JsError> {
        let ctx = StepContext {
            encoder: &self.encoder,
            generator: &self.generator,
            styles: &self.styles,
            augment: &self.augment,
            noise: &self.noise,
        };
        let out = step(
            &ctx,
            &mut self.latent,
            &mut self.optimizer,
            self.learning_rate,
            0,
            self.iteration,
            self.seed,
            &NullClock,
            0.0,
        )
        .map_err(js_err)?;
        self.iteration += 1;
        self.last_loss = out.record.total;
        Ok(self.last_loss)
    }

    /// Current decoded image as RGBA bytes.
    pub fn image_rgba(&self) -> Result<Vec<u8>, JsError> {
        Ok(self
            .generator
            .decode(&self.latent)
            .map_err(js_err)?
            .to_rgba8_bytes())
    }

    pub fn resolution(&self) -> usize {
        self.latent.resolution()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Loss of the most recent step, NaN before the first.
    pub fn loss(&self) -> f64 {
        self.last_loss
    }
}
