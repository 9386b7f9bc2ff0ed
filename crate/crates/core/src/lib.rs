//! Stylization of a content image (or synthesis from noise) by gradient
//! descent on a generator latent, guided by a spherical distance between the
//! decoded image's embedding and the embeddings of style texts and images.
//!
//! The loop per iteration is: decode the latent, add fractal noise, draw a
//! batch of augmented views, embed them, score them against the styles,
//! backpropagate to the latent and update it. Runs proceed coarse-to-fine
//! over a list of resolution levels and may finish with an upscaling stage.
//!
//! Model backends sit behind [`ImageEncoder`] and [`LatentGenerator`]; the
//! deterministic [`ToyEncoder`] and [`ToyGenerator`] make the whole pipeline
//! runnable and testable without pretrained weights.

pub mod adapters;
pub mod augmentation;
pub mod embedding;
pub mod error;
pub mod generator;
pub mod image;
pub mod loss;
pub mod optim;
pub mod pipeline;
pub mod sampling;
pub mod seed;
pub mod superres;

pub use crate::embedding::{
    embed_image, embed_text, normalize, project_style_set, EmbeddingVector, EncoderHandle,
    ImageEncoder, StyleKind, StyleParam, StyleProjector, StyleSet, ToyEncoder, WeightedEmbedding,
};
pub use crate::error::{Error, Result};
pub use crate::generator::{
    latent_transfer, GeneratorHandle, LatentGenerator, LatentShape, LatentTensor, ToyGenerator,
};
pub use crate::image::ImageBuffer;
pub use crate::loss::{batch_loss, chord_term, style_loss, LossValue};
pub use crate::optim::OptimizerKind;
pub use crate::pipeline::{run_hierarchy, LevelConfig, LossTrace, RunConfig, StepRecord};
