//! Joint image-text encoder interface, normalization and style projection.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::sampling::SampleMap;

/// Tolerance on the unit-norm invariant.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A unit-norm vector in the joint embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Wraps values that are already unit-norm, within `tolerance`.
    pub fn from_unit(values: Vec<f64>, tolerance: f64) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("embedding has non-finite components"));
        }
        let n = l2_norm(&values);
        if (n - 1.0).abs() > tolerance {
            return Err(Error::domain(format!("embedding norm {n} is not 1")));
        }
        Ok(Self { values })
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<EmbeddingVector> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("cannot normalize non-finite vector"));
    }
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(Error::domain("cannot normalize zero vector"));
    }
    Ok(EmbeddingVector {
        values: v.iter().map(|x| x / n).collect(),
    })
}

/// Pulls a gradient with respect to `normalize(raw)` back onto `raw`:
/// `(g - y (y·g)) / ‖raw‖`.
pub fn normalize_pullback(raw: &[f64], upstream: &[f64]) -> Vec<f64> {
    let n = l2_norm(raw);
    let y: Vec<f64> = raw.iter().map(|x| x / n).collect();
    let yg: f64 = y.iter().zip(upstream).map(|(a, b)| a * b).sum();
    y.iter()
        .zip(upstream)
        .map(|(yi, gi)| (gi - yi * yg) / n)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleKind {
    Text,
    Image,
}

/// One element of the style set: a prompt or a path to a style image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleParam {
    pub kind: StyleKind,
    pub payload: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl StyleParam {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            kind: StyleKind::Text,
            payload: text.into(),
            weight: 1.0,
        }
    }

    pub fn image(path: impl Into<String>) -> Self {
        Self {
            kind: StyleKind::Image,
            payload: path.into(),
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::config(
                "weight",
                format!("must be positive, got {}", self.weight),
            ));
        }
        match self.kind {
            StyleKind::Text if self.payload.is_empty() => {
                Err(Error::config("text", "style text must not be empty"))
            }
            StyleKind::Image if !Path::new(&self.payload).is_file() => Err(Error::Io {
                path: self.payload.clone().into(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "style image not found"),
            }),
            _ => Ok(()),
        }
    }
}

/// Ordered, non-empty list of style parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StyleSet {
    params: Vec<StyleParam>,
}

impl StyleSet {
    pub fn new(params: Vec<StyleParam>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::config(
                "styles",
                "at least one style text or image is required",
            ));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[StyleParam] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// Identity and geometry of a joint encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderHandle {
    pub identity: String,
    pub dim: usize,
    pub input_resolution: usize,
    /// Whether concurrent inference calls are allowed.
    pub reentrant: bool,
}

/// A joint image-text encoder backend.
///
/// Backends return raw (unnormalized) features; normalization and its
/// Jacobian are applied by [`embed_text`], [`embed_image`] and
/// [`embed_image_pullback`].
pub trait ImageEncoder: Send + Sync {
    fn handle(&self) -> &EncoderHandle;

    fn text_features(&self, text: &str) -> Result<Vec<f64>>;

    /// Raw features of `img`; the backend resamples to its input resolution.
    fn image_features(&self, img: &ImageBuffer) -> Result<Vec<f64>>;

    /// Gradient of `<upstream, image_features(img)>` with respect to the
    /// pixels of `img`, in the image's interleaved layout.
    fn image_features_pullback(&self, img: &ImageBuffer, upstream: &[f64]) -> Result<Vec<f64>>;
}

pub fn embed_text(enc: &dyn ImageEncoder, text: &str) -> Result<EmbeddingVector> {
    if text.is_empty() {
        return Err(Error::domain("cannot embed empty text"));
    }
    let raw = enc.text_features(text)?;
    check_dim(enc, &raw)?;
    normalize(&raw)
}

pub fn embed_image(enc: &dyn ImageEncoder, img: &ImageBuffer) -> Result<EmbeddingVector> {
    let raw = enc.image_features(img)?;
    check_dim(enc, &raw)?;
    normalize(&raw)
}

/// Embeds `img`, also returning the raw features needed by
/// [`embed_image_pullback`].
pub fn embed_image_with_raw(
    enc: &dyn ImageEncoder,
    img: &ImageBuffer,
) -> Result<(EmbeddingVector, Vec<f64>)> {
    let raw = enc.image_features(img)?;
    check_dim(enc, &raw)?;
    Ok((normalize(&raw)?, raw))
}

/// Gradient with respect to the pixels of `img`, given `upstream`, the
/// gradient with respect to its unit embedding.
pub fn embed_image_pullback(
    enc: &dyn ImageEncoder,
    img: &ImageBuffer,
    raw: &[f64],
    upstream: &[f64],
) -> Result<Vec<f64>> {
    let g_raw = normalize_pullback(raw, upstream);
    enc.image_features_pullback(img, &g_raw)
}

fn check_dim(enc: &dyn ImageEncoder, raw: &[f64]) -> Result<()> {
    let dim = enc.handle().dim;
    if raw.len() != dim {
        return Err(Error::Backend(format!(
            "encoder `{}` returned {} features, expected {dim}",
            enc.handle().identity,
            raw.len()
        )));
    }
    Ok(())
}

/// A style embedding paired with its weight in the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEmbedding {
    pub embedding: EmbeddingVector,
    pub weight: f64,
}

/// Projects style sets through an encoder, caching each distinct parameter
/// so that a run invokes the encoder at most once per style.
#[derive(Debug, Default)]
pub struct StyleProjector {
    cache: Mutex<HashMap<(String, StyleKind, String), EmbeddingVector>>,
}

impl StyleProjector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn project(
        &self,
        enc: &dyn ImageEncoder,
        styles: &StyleSet,
    ) -> Result<Vec<WeightedEmbedding>> {
        let mut out = Vec::with_capacity(styles.len());
        for (index, param) in styles.params().iter().enumerate() {
            let key = (
                enc.handle().identity.clone(),
                param.kind,
                param.payload.clone(),
            );
            let cached = self
                .cache
                .lock()
                .expect("style cache poisoned")
                .get(&key)
                .cloned();
            let embedding = match cached {
                Some(e) => e,
                None => {
                    let e = embed_param(enc, param).map_err(|source| Error::Style {
                        index,
                        source: Box::new(source),
                    })?;
                    self.cache
                        .lock()
                        .expect("style cache poisoned")
                        .insert(key, e.clone());
                    e
                }
            };
            out.push(WeightedEmbedding {
                embedding,
                weight: param.weight,
            });
        }
        Ok(out)
    }
}

fn embed_param(enc: &dyn ImageEncoder, param: &StyleParam) -> Result<EmbeddingVector> {
    param.validate()?;
    match param.kind {
        StyleKind::Text => embed_text(enc, &param.payload),
        StyleKind::Image => {
            let img = ImageBuffer::load_png(Path::new(&param.payload))?;
            embed_image(enc, &img)
        }
    }
}

/// One-shot projection without a shared cache.
pub fn project_style_set(
    enc: &dyn ImageEncoder,
    styles: &StyleSet,
) -> Result<Vec<WeightedEmbedding>> {
    StyleProjector::new().project(enc, styles)
}

/// Deterministic stand-in for a pretrained encoder.
///
/// Images are bilinearly resampled to `input_resolution²`, flattened, mapped
/// through a fixed Gaussian projection (entries `N(0, 1/n)` for `n` inputs)
/// and squashed with `tanh`. Texts are hashed with SHA-256 together with the
/// seed; the digest seeds a Gaussian draw of `dim` components.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    handle: EncoderHandle,
    seed: u64,
    /// Row-major `dim × (res·res·3)`.
    projection: Vec<f64>,
}

impl ToyEncoder {
    pub const ID: &'static str = "toy-encoder";
    pub const DIM: usize = 16;
    pub const INPUT_RESOLUTION: usize = 32;
    pub const DEFAULT_SEED: u64 = 0x5eed_c11b;

    pub fn new() -> Self {
        Self::seeded(Self::DEFAULT_SEED)
    }

    pub fn seeded(seed: u64) -> Self {
        Self::with_geometry(Self::ID, Self::DIM, Self::INPUT_RESOLUTION, seed)
    }

    pub fn with_geometry(identity: &str, dim: usize, input_resolution: usize, seed: u64) -> Self {
        let n = input_resolution * input_resolution * 3;
        let scale = 1.0 / (n as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = (0..dim * n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect();
        Self::from_projection(identity, input_resolution, projection, seed)
            .expect("generated projection has a consistent shape")
    }

    /// Builds an encoder from an explicit `dim × (res·res·3)` projection.
    pub fn from_projection(
        identity: &str,
        input_resolution: usize,
        projection: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let n = input_resolution * input_resolution * 3;
        if input_resolution == 0 || projection.is_empty() || !projection.len().is_multiple_of(n) {
            return Err(Error::Backend(format!(
                "projection of length {} does not match input resolution {input_resolution}",
                projection.len()
            )));
        }
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(Error::Backend(
                "projection contains non-finite weights".into(),
            ));
        }
        Ok(Self {
            handle: EncoderHandle {
                identity: identity.to_string(),
                dim: projection.len() / n,
                input_resolution,
                reentrant: true,
            },
            seed,
            projection,
        })
    }

    fn resample(&self, img: &ImageBuffer) -> (Option<SampleMap>, Vec<f64>) {
        let r = self.handle.input_resolution;
        if img.height() == r && img.width() == r {
            (None, img.pixels().to_vec())
        } else {
            let map = SampleMap::resize(img.height(), img.width(), r, r);
            let flat = map.apply(img.pixels());
            (Some(map), flat)
        }
    }

    fn project(&self, flat: &[f64]) -> Vec<f64> {
        self.projection
            .chunks_exact(flat.len())
            .map(|row| row.iter().zip(flat).map(|(w, x)| w * x).sum::<f64>().tanh())
            .collect()
    }
}

impl Default for ToyEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl ImageEncoder for ToyEncoder {
    fn handle(&self) -> &EncoderHandle {
        &self.handle
    }

    fn text_features(&self, text: &str) -> Result<Vec<f64>> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(text.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        Ok((0..self.handle.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect())
    }

    fn image_features(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
        let (_, flat) = self.resample(img);
        Ok(self.project(&flat))
    }

    fn image_features_pullback(&self, img: &ImageBuffer, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.handle.dim {
            return Err(Error::domain("upstream gradient has the wrong dimension"));
        }
        let (map, flat) = self.resample(img);
        let z = self.project(&flat);
        let mut g_flat = vec![0.0; flat.len()];
        for ((row, zi), ui) in self
            .projection
            .chunks_exact(flat.len())
            .zip(&z)
            .zip(upstream)
        {
            let gi = ui * (1.0 - zi * zi);
            if gi == 0.0 {
                continue;
            }
            for (g, w) in g_flat.iter_mut().zip(row) {
                *g += gi * w;
            }
        }
        Ok(match map {
            Some(map) => map.adjoint(&g_flat),
            None => g_flat,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize(&[1.0, 0.0, 0.0, 0.0]).unwrap().values(),
            &[1.0, 0.0, 0.0, 0.0]
        );
        let v = normalize(&[3.0, 4.0]).unwrap();
        assert!((v.values()[0] - 0.6).abs() < 1e-15);
        assert!((v.values()[1] - 0.8).abs() < 1e-15);
        let err = normalize(&[0.0, 0.0]).unwrap_err();
        assert_eq!(err.to_string(), "cannot normalize zero vector");
    }

    #[test]
    fn text_embeddings_are_deterministic_unit_and_distinct() {
        let enc = ToyEncoder::new();
        let a1 = embed_text(&enc, "a").unwrap();
        let a2 = embed_text(&enc, "a").unwrap();
        let b = embed_text(&enc, "b").unwrap();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert!((a1.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE);
        assert_eq!(a1.dim(), ToyEncoder::DIM);
        assert!(embed_text(&enc, "").is_err());
    }

    #[test]
    fn prompts_are_passed_verbatim() {
        let enc = ToyEncoder::new();
        let piped = embed_text(&enc, "City of the future | Geometric art").unwrap();
        let head = embed_text(&enc, "City of the future").unwrap();
        assert_ne!(piped, head);
    }

    #[test]
    fn constant_image_embedding_is_frozen() {
        let enc = ToyEncoder::new();
        let img = ImageBuffer::filled(32, 32, [0.5; 3]).unwrap();
        let e = embed_image(&enc, &img).unwrap();
        assert!((e.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE);
        let golden = CONSTANT_HALF_EMBEDDING;
        for (a, b) in e.values().iter().zip(golden) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // Resampling a constant image is exact, so size does not matter.
        let big = ImageBuffer::filled(48, 40, [0.5; 3]).unwrap();
        let e_big = embed_image(&enc, &big).unwrap();
        for (a, b) in e.values().iter().zip(e_big.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // tanh(0.5 · Σⱼ Pₖⱼ) normalized, evaluated by a standalone script that
    // redraws the projection rows from ChaCha8(0x5eedc11b).
    const CONSTANT_HALF_EMBEDDING: [f64; 16] = [
        0.37304341938721924,
        -0.31737774617543885,
        -0.29479231976037396,
        -0.3524425727900995,
        0.038110226137021655,
        -0.056847307601214654,
        0.21760465615578609,
        -0.31038984675982706,
        0.4142109801632715,
        0.06123219552271565,
        0.09930064879735488,
        0.05422221093296504,
        0.3302857186867108,
        0.001806024466449261,
        0.32144254927665006,
        0.008719545014915592,
    ];

    struct Counting {
        inner: ToyEncoder,
        calls: AtomicUsize,
    }

    impl ImageEncoder for Counting {
        fn handle(&self) -> &EncoderHandle {
            self.inner.handle()
        }
        fn text_features(&self, text: &str) -> Result<Vec<f64>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.text_features(text)
        }
        fn image_features(&self, img: &ImageBuffer) -> Result<Vec<f64>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.image_features(img)
        }
        fn image_features_pullback(&self, img: &ImageBuffer, upstream: &[f64]) -> Result<Vec<f64>> {
            self.inner.image_features_pullback(img, upstream)
        }
    }

    #[test]
    fn projection_is_cached_per_run() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("style.png");
        ImageBuffer::from_fn(16, 16, |y, x| [y as f64 / 16.0, x as f64 / 16.0, 0.5])
            .unwrap()
            .save_png(&path)
            .unwrap();
        let enc = Counting {
            inner: ToyEncoder::new(),
            calls: AtomicUsize::new(0),
        };
        let styles = StyleSet::new(vec![
            StyleParam::text("oil painting"),
            StyleParam::image(path.to_string_lossy()),
            StyleParam::text("oil painting"),
        ])
        .unwrap();
        let projector = StyleProjector::new();
        let first = projector.project(&enc, &styles).unwrap();
        assert_eq!(first.len(), 3);
        assert_eq!(first[0], first[2]);
        for w in &first {
            assert!((w.embedding.norm() - 1.0).abs() < UNIT_NORM_TOLERANCE);
        }
        let calls = enc.calls.load(Ordering::SeqCst);
        assert!(calls <= styles.len());
        let second = projector.project(&enc, &styles).unwrap();
        assert_eq!(first, second);
        assert_eq!(enc.calls.load(Ordering::SeqCst), calls);
    }

    #[test]
    fn projection_errors_name_the_style_index() {
        let enc = ToyEncoder::new();
        let styles = StyleSet::new(vec![
            StyleParam::text("ok"),
            StyleParam::image("/nonexistent/x.png"),
        ])
        .unwrap();
        match project_style_set(&enc, &styles).unwrap_err() {
            Error::Style { index, .. } => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(StyleSet::new(vec![]).is_err());
    }
}
