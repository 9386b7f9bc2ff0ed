//! The optimization loop: initialization, the per-iteration
//! decode → augment → embed → loss → backprop → update step, and the
//! coarse-to-fine schedule across resolution levels.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::augmentation::{
    add_noise_with_mask, augment_batch_with_tapes, AugmentConfig, NoiseConfig, ViewTape,
};
use crate::embedding::{
    embed_image_pullback, embed_image_with_raw, EmbeddingVector, ImageEncoder, StyleProjector,
    StyleSet, WeightedEmbedding,
};
use crate::error::{Error, Result};
use crate::generator::{latent_transfer, LatentGenerator, LatentTensor};
use crate::image::{ImageBuffer, MIN_EDGE};
use crate::loss::{batch_loss, style_loss_gradient, LossValue};
use crate::optim::{Optimizer, OptimizerKind};
use crate::seed;
use crate::superres::SuperresConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub resolution: usize,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl LevelConfig {
    pub fn new(resolution: usize, iterations: usize, learning_rate: f64) -> Self {
        Self {
            resolution,
            iterations,
            learning_rate,
        }
    }
}

pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_FINAL_SIZE: usize = 1024;

/// Default schedule: 256px for 300 iterations, 512px for 200, then the
/// final size for 100. Intermediate levels not below `final_size` are
/// dropped.
pub fn default_levels(final_size: usize) -> Vec<LevelConfig> {
    let mut levels: Vec<LevelConfig> = [(256, 300), (512, 200)]
        .into_iter()
        .filter(|(r, _)| *r < final_size)
        .map(|(r, n)| LevelConfig::new(r, n, DEFAULT_LEARNING_RATE))
        .collect();
    levels.push(LevelConfig::new(final_size, 100, DEFAULT_LEARNING_RATE));
    levels
}

/// Full description of one stylization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub levels: Vec<LevelConfig>,
    pub augment: AugmentConfig,
    pub noise: NoiseConfig,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub content: Option<PathBuf>,
    pub styles: StyleSet,
    pub superres: SuperresConfig,
}

impl RunConfig {
    /// All defaults, with the given styles.
    pub fn new(styles: StyleSet) -> Self {
        Self {
            levels: default_levels(DEFAULT_FINAL_SIZE),
            augment: AugmentConfig::default(),
            noise: NoiseConfig::default(),
            optimizer: OptimizerKind::default(),
            seed: 0,
            content: None,
            styles,
            superres: SuperresConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("levels", "at least one level is required"));
        }
        for (i, level) in self.levels.iter().enumerate() {
            if level.iterations < 1 {
                return Err(Error::config(
                    "levels",
                    format!("level {i} needs at least one iteration"),
                ));
            }
            if !(level.learning_rate.is_finite() && level.learning_rate >= 0.0) {
                return Err(Error::config(
                    "levels",
                    format!("level {i} learning rate must be non-negative"),
                ));
            }
        }
        if self
            .levels
            .windows(2)
            .any(|w| w[1].resolution <= w[0].resolution)
        {
            return Err(Error::config(
                "levels",
                "resolutions must be strictly increasing",
            ));
        }
        if self.styles.is_empty() {
            return Err(Error::config(
                "styles",
                "at least one style text or image is required",
            ));
        }
        for p in self.styles.params() {
            if !(p.weight.is_finite() && p.weight > 0.0) {
                return Err(Error::config(
                    "styles",
                    format!("style weight {} must be positive", p.weight),
                ));
            }
        }
        self.augment.validate()?;
        self.noise.validate()?;
        self.superres.validate()
    }

    pub fn total_iterations(&self) -> usize {
        self.levels.iter().map(|l| l.iterations).sum()
    }

    /// Checks the schedule against concrete backends and returns the
    /// augmentation config with the crop size resolved.
    pub fn resolve(
        &self,
        enc: &dyn ImageEncoder,
        gen: &dyn LatentGenerator,
    ) -> Result<AugmentConfig> {
        self.validate()?;
        // An unset crop follows the encoder, shrunk if needed so that it
        // still fits the smallest level at the lowest resize factor.
        let augment = match self.augment.crop_size {
            Some(_) => self.augment.clone(),
            None => {
                let smallest = self.levels.iter().map(|l| l.resolution).min().unwrap_or(0);
                let fits = (smallest as f64 * self.augment.resize_range[0]).round() as usize;
                self.augment
                    .clone()
                    .with_crop_size(enc.handle().input_resolution.min(fits).max(MIN_EDGE))
            }
        };
        for level in &self.levels {
            gen.latent_shape_for(level.resolution, level.resolution)
                .map_err(|e| Error::config("levels", e.to_string()))?;
            augment.check_fits(level.resolution, level.resolution)?;
        }
        if !gen.handle().differentiable {
            return Err(Error::config(
                "generator",
                format!("`{}` is not differentiable", gen.handle().identity),
            ));
        }
        Ok(augment)
    }
}

/// Millisecond source for stage timings.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Wall clock backed by [`std::time::Instant`].
#[derive(Debug, Clone, Copy)]
pub struct MonotonicClock {
    origin: std::time::Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self {
            origin: std::time::Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_ms(&self) -> f64 {
        self.origin.elapsed().as_secs_f64() * 1e3
    }
}

/// Always reports zero; for targets without a monotonic clock.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub decode_ms: f64,
    pub augment_ms: f64,
    pub embed_ms: f64,
    pub backprop_ms: f64,
    pub update_ms: f64,
}

impl StageTimings {
    pub const STAGES: [&'static str; 5] = ["decode", "augment", "embed", "backprop", "update"];

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.decode_ms,
            self.augment_ms,
            self.embed_ms,
            self.backprop_ms,
            self.update_ms,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub level: usize,
    pub iteration: usize,
    pub total: f64,
    pub per_style: Vec<f64>,
    pub timings: StageTimings,
    /// Milliseconds since the start of the run, taken after the update.
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossTrace {
    pub records: Vec<StepRecord>,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn level(&self, level: usize) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.level == level)
    }

    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }
}

/// Backends, projected styles and augmentation settings shared by every
/// step of a run.
pub struct StepContext<'a> {
    pub encoder: &'a dyn ImageEncoder,
    pub generator: &'a dyn LatentGenerator,
    pub styles: &'a [WeightedEmbedding],
    /// Must have its crop size resolved.
    pub augment: &'a AugmentConfig,
    pub noise: &'a NoiseConfig,
}

/// Forward and backward pass at one latent with one iteration seed.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: LossValue,
    /// Gradient of `loss.total` with respect to the latent values.
    pub gradient: Vec<f64>,
    pub decoded: ImageBuffer,
    pub view_embeddings: Vec<EmbeddingVector>,
    pub timings: StageTimings,
}

/// Seeds for the noise field and the view batch of one iteration.
pub fn iteration_seeds(run_seed: u64, level: usize, iteration: usize) -> (u64, u64) {
    let it = seed::derive(seed::derive(run_seed, level as u64), iteration as u64);
    (seed::derive(it, 0), seed::derive(it, 1))
}

struct ViewPass {
    tape: ViewTape,
    view: ImageBuffer,
    embedding: EmbeddingVector,
    raw: Vec<f64>,
}

fn embed_views(
    enc: &dyn ImageEncoder,
    views: Vec<(ImageBuffer, ViewTape)>,
) -> Result<Vec<ViewPass>> {
    let one = |(view, tape): (ImageBuffer, ViewTape)| -> Result<ViewPass> {
        let (embedding, raw) = embed_image_with_raw(enc, &view)?;
        Ok(ViewPass {
            tape,
            view,
            embedding,
            raw,
        })
    };
    #[cfg(feature = "parallel")]
    if enc.handle().reentrant {
        use rayon::prelude::*;
        return views.into_par_iter().map(one).collect();
    }
    views.into_iter().map(one).collect()
}

fn view_pullbacks(
    enc: &dyn ImageEncoder,
    passes: &[ViewPass],
    upstream: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let one = |(p, u): (&ViewPass, &Vec<f64>)| -> Result<Vec<f64>> {
        let g_view = embed_image_pullback(enc, &p.view, &p.raw, u)?;
        Ok(p.tape.pullback(&g_view))
    };
    #[cfg(feature = "parallel")]
    if enc.handle().reentrant {
        use rayon::prelude::*;
        return passes
            .par_iter()
            .zip(upstream.par_iter())
            .map(one)
            .collect();
    }
    passes.iter().zip(upstream).map(one).collect()
}

/// Loss and its gradient with respect to `t`, with all augmentation
/// randomness fixed by `(noise_seed, view_seed)`.
pub fn evaluate(
    ctx: &StepContext<'_>,
    t: &LatentTensor,
    noise_seed: u64,
    view_seed: u64,
    clock: &dyn Clock,
) -> Result<Evaluation> {
    let mut timings = StageTimings::default();

    let t0 = clock.now_ms();
    let decoded = ctx.generator.decode(t)?;
    let t1 = clock.now_ms();
    timings.decode_ms = t1 - t0;

    let (noisy, noise_mask) = add_noise_with_mask(&decoded, ctx.noise, noise_seed)?;
    let views = augment_batch_with_tapes(&noisy, ctx.augment, ctx.augment.n_views, view_seed)?;
    let t2 = clock.now_ms();
    timings.augment_ms = t2 - t1;

    let passes = embed_views(ctx.encoder, views)?;
    let view_embeddings: Vec<EmbeddingVector> =
        passes.iter().map(|p| p.embedding.clone()).collect();
    let loss = batch_loss(&view_embeddings, ctx.styles)?;
    let t3 = clock.now_ms();
    timings.embed_ms = t3 - t2;

    let n = passes.len() as f64;
    let upstream = view_embeddings
        .iter()
        .map(|f| {
            style_loss_gradient(f, ctx.styles)
                .map(|g| g.into_iter().map(|v| v / n).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let per_view = view_pullbacks(ctx.encoder, &passes, &upstream)?;
    let mut g_image = vec![0.0; decoded.pixels().len()];
    for g in &per_view {
        for (acc, v) in g_image.iter_mut().zip(g) {
            *acc += v;
        }
    }
    for (g, keep) in g_image.iter_mut().zip(&noise_mask) {
        if !keep {
            *g = 0.0;
        }
    }
    let gradient = ctx.generator.decode_pullback(t, &g_image)?;
    timings.backprop_ms = clock.now_ms() - t3;

    Ok(Evaluation {
        loss,
        gradient,
        decoded,
        view_embeddings,
        timings,
    })
}

/// Result of one optimization step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub record: StepRecord,
    pub evaluation: Evaluation,
}

/// One iteration: evaluate at `t`, then update `t` in place.
#[allow(clippy::too_many_arguments)]
pub fn step(
    ctx: &StepContext<'_>,
    t: &mut LatentTensor,
    optimizer: &mut Optimizer,
    learning_rate: f64,
    level: usize,
    iteration: usize,
    run_seed: u64,
    clock: &dyn Clock,
    run_start_ms: f64,
) -> Result<StepOutcome> {
    let (noise_seed, view_seed) = iteration_seeds(run_seed, level, iteration);
    let mut evaluation = evaluate(ctx, t, noise_seed, view_seed, clock)?;
    let numerical = |message: String| Error::Numerical {
        level,
        iteration,
        message,
    };
    if !evaluation.loss.total.is_finite() {
        return Err(numerical(format!("loss is {}", evaluation.loss.total)));
    }
    if evaluation.gradient.iter().any(|g| !g.is_finite()) {
        return Err(numerical("gradient has non-finite components".into()));
    }

    let before = clock.now_ms();
    optimizer.step(t.values_mut(), &evaluation.gradient, learning_rate);
    if !t.is_finite() {
        return Err(numerical(
            "latent became non-finite after the update".into(),
        ));
    }
    let after = clock.now_ms();
    evaluation.timings.update_ms = after - before;

    Ok(StepOutcome {
        record: StepRecord {
            level,
            iteration,
            total: evaluation.loss.total,
            per_style: evaluation.loss.per_style.clone(),
            timings: evaluation.timings,
            elapsed_ms: after - run_start_ms,
        },
        evaluation,
    })
}

/// What observers see after each step.
pub struct StepEvent<'a> {
    pub level: usize,
    pub iteration: usize,
    /// The image decoded at the start of the step.
    pub image: &'a ImageBuffer,
    pub record: &'a StepRecord,
}

/// Runs one level's iterations, appending a record per step to `trace`.
#[allow(clippy::too_many_arguments)]
pub fn run_level(
    ctx: &StepContext<'_>,
    t: &mut LatentTensor,
    level: &LevelConfig,
    level_index: usize,
    optimizer_kind: OptimizerKind,
    run_seed: u64,
    clock: &dyn Clock,
    run_start_ms: f64,
    trace: &mut LossTrace,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> Result<()> {
    if t.resolution() != level.resolution {
        return Err(Error::domain(format!(
            "latent decodes to {}px but level {level_index} runs at {}px",
            t.resolution(),
            level.resolution
        )));
    }
    let mut optimizer = Optimizer::new(optimizer_kind, t.values().len());
    for iteration in 0..level.iterations {
        let out = step(
            ctx,
            t,
            &mut optimizer,
            level.learning_rate,
            level_index,
            iteration,
            run_seed,
            clock,
            run_start_ms,
        )?;
        observer(&StepEvent {
            level: level_index,
            iteration,
            image: &out.evaluation.decoded,
            record: &out.record,
        });
        trace.records.push(out.record);
    }
    Ok(())
}

/// Initial latent: the encoded content image resized to the first level,
/// or a seeded random latent when there is no content.
pub fn init_latent(cfg: &RunConfig, gen: &dyn LatentGenerator) -> Result<LatentTensor> {
    let first = cfg
        .levels
        .first()
        .ok_or_else(|| Error::config("levels", "at least one level is required"))?;
    match &cfg.content {
        Some(path) => {
            let content = ImageBuffer::load_png(path)?;
            init_latent_from_image(&content, first.resolution, gen)
        }
        None => gen.random_latent(first.resolution, cfg.seed),
    }
}

pub fn init_latent_from_image(
    content: &ImageBuffer,
    resolution: usize,
    gen: &dyn LatentGenerator,
) -> Result<LatentTensor> {
    gen.encode(&content.resize(resolution, resolution)?)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Decoded final latent, before any super-resolution.
    pub image: ImageBuffer,
    pub latent: LatentTensor,
    pub trace: LossTrace,
    pub styles: Vec<WeightedEmbedding>,
}

/// A failed run with the records gathered before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunError {
    #[source]
    pub error: Error,
    pub trace: LossTrace,
}

impl From<Error> for RunError {
    fn from(error: Error) -> Self {
        Self {
            error,
            trace: LossTrace::default(),
        }
    }
}

pub fn run_hierarchy(
    cfg: &RunConfig,
    enc: &dyn ImageEncoder,
    gen: &dyn LatentGenerator,
) -> std::result::Result<RunOutput, RunError> {
    run_hierarchy_with(
        cfg,
        enc,
        gen,
        &StyleProjector::new(),
        &MonotonicClock::new(),
        &mut |_| {},
    )
}

/// Full coarse-to-fine run: project styles once, initialize, optimize each
/// level and hand the latent up to the next resolution.
pub fn run_hierarchy_with(
    cfg: &RunConfig,
    enc: &dyn ImageEncoder,
    gen: &dyn LatentGenerator,
    projector: &StyleProjector,
    clock: &dyn Clock,
    observer: &mut dyn FnMut(&StepEvent<'_>),
) -> std::result::Result<RunOutput, RunError> {
    let augment = cfg.resolve(enc, gen)?;
    let start = clock.now_ms();
    let styles = projector.project(enc, &cfg.styles)?;
    let mut t = init_latent(cfg, gen)?;
    let ctx = StepContext {
        encoder: enc,
        generator: gen,
        styles: &styles,
        augment: &augment,
        noise: &cfg.noise,
    };
    let mut trace = LossTrace::default();
    for (index, level) in cfg.levels.iter().enumerate() {
        if index > 0 {
            t = latent_transfer(gen, &t, level.resolution).map_err(|error| RunError {
                error,
                trace: trace.clone(),
            })?;
        }
        if let Err(error) = run_level(
            &ctx,
            &mut t,
            level,
            index,
            cfg.optimizer,
            cfg.seed,
            clock,
            start,
            &mut trace,
            observer,
        ) {
            return Err(RunError { error, trace });
        }
    }
    let image = gen.decode(&t).map_err(|error| RunError {
        error,
        trace: trace.clone(),
    })?;
    Ok(RunOutput {
        image,
        latent: t,
        trace,
        styles,
    })
}
