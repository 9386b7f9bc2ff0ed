//! Adapter registry: binds encoder/generator ids to backends.
//!
//! Built in:
//!
//! | id                 | weights                                   |
//! |--------------------|-------------------------------------------|
//! | `toy-encoder`      | none (seeded)                             |
//! | `toy-generator`    | none (seeded)                             |
//! | `linear-encoder`   | JSON: `input_resolution`, `projection`    |
//! | `linear-generator` | JSON: `stride`, `encode_matrix`           |
//!
//! The `linear-*` adapters run the toy architectures with weights read from
//! disk. Pretrained joint encoders and latent generators are not compiled
//! into this build; their ids resolve to a backend error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::{ImageEncoder, ToyEncoder};
use crate::error::{Error, Result};
use crate::generator::{LatentGenerator, ToyGenerator};

pub const ENCODER_PATH_ENV: &str = "PROMPTPAINTER_ENCODER_PATH";
pub const GENERATOR_PATH_ENV: &str = "PROMPTPAINTER_GENERATOR_PATH";

pub const LINEAR_ENCODER_ID: &str = "linear-encoder";
pub const LINEAR_GENERATOR_ID: &str = "linear-generator";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    #[default]
    Cpu,
    Accelerator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub id: String,
    pub weights_path: Option<PathBuf>,
    pub device: Device,
    /// Require concurrent inference support.
    pub reentrant: bool,
    /// Require a gradient path.
    pub differentiable: bool,
}

impl AdapterSpec {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            weights_path: None,
            device: Device::Cpu,
            reentrant: false,
            differentiable: true,
        }
    }

    pub fn with_weights(mut self, path: impl Into<PathBuf>) -> Self {
        self.weights_path = Some(path.into());
        self
    }
}

/// Config value first, then the environment variable.
pub fn resolve_weights_path(configured: Option<&Path>, env_var: &str) -> Option<PathBuf> {
    configured.map(Path::to_path_buf).or_else(|| {
        std::env::var_os(env_var)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

fn read_weights<T: for<'de> Deserialize<'de>>(spec: &AdapterSpec) -> Result<T> {
    let path = spec
        .weights_path
        .as_ref()
        .ok_or_else(|| Error::Backend(format!("adapter `{}` needs a weights file", spec.id)))?;
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Backend(format!("cannot read weights {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::Backend(format!("corrupt weights {}: {e}", path.display())))
}

fn check_device(spec: &AdapterSpec) -> Result<()> {
    if spec.device == Device::Accelerator {
        return Err(Error::config(
            "device",
            format!("adapter `{}` runs on the CPU only", spec.id),
        ));
    }
    Ok(())
}

fn unavailable(id: &str) -> Error {
    Error::Backend(format!("adapter `{id}` is not available in this build"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearEncoderWeights {
    input_resolution: usize,
    /// One row per embedding component.
    projection: Vec<Vec<f64>>,
    #[serde(default)]
    text_seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearGeneratorWeights {
    stride: usize,
    /// One row of three weights per latent channel.
    encode_matrix: Vec<[f64; 3]>,
}

pub fn load_encoder(spec: &AdapterSpec) -> Result<Box<dyn ImageEncoder>> {
    check_device(spec)?;
    let enc: Box<dyn ImageEncoder> = match spec.id.as_str() {
        ToyEncoder::ID => Box::new(ToyEncoder::new()),
        LINEAR_ENCODER_ID => {
            let w: LinearEncoderWeights = read_weights(spec)?;
            let n = w.input_resolution * w.input_resolution * 3;
            if w.projection.iter().any(|row| row.len() != n) {
                return Err(Error::Backend(format!(
                    "corrupt weights: every projection row must have {n} entries"
                )));
            }
            let flat = w.projection.into_iter().flatten().collect();
            Box::new(ToyEncoder::from_projection(
                LINEAR_ENCODER_ID,
                w.input_resolution,
                flat,
                w.text_seed,
            )?)
        }
        other => return Err(unavailable(other)),
    };
    if spec.reentrant && !enc.handle().reentrant {
        return Err(Error::config(
            "encoder",
            format!("`{}` is not reentrant", spec.id),
        ));
    }
    Ok(enc)
}

pub fn load_generator(spec: &AdapterSpec) -> Result<Box<dyn LatentGenerator>> {
    check_device(spec)?;
    let gen: Box<dyn LatentGenerator> = match spec.id.as_str() {
        ToyGenerator::ID => Box::new(ToyGenerator::new()),
        LINEAR_GENERATOR_ID => {
            let w: LinearGeneratorWeights = read_weights(spec)?;
            let channels = w.encode_matrix.len();
            let flat = w.encode_matrix.into_iter().flatten().collect();
            Box::new(ToyGenerator::from_encode_matrix(
                LINEAR_GENERATOR_ID,
                w.stride,
                channels,
                flat,
            )?)
        }
        other => return Err(unavailable(other)),
    };
    let handle = gen.handle();
    if spec.differentiable && !handle.differentiable {
        return Err(Error::config(
            "generator",
            format!("`{}` is not differentiable", spec.id),
        ));
    }
    if spec.reentrant && !handle.reentrant {
        return Err(Error::config(
            "generator",
            format!("`{}` is not reentrant", spec.id),
        ));
    }
    Ok(gen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_adapters_need_no_weights() {
        let enc = load_encoder(&AdapterSpec::new("toy-encoder")).unwrap();
        assert_eq!(enc.handle().dim, 16);
        assert_eq!(enc.handle().input_resolution, 32);
        let gen = load_generator(&AdapterSpec::new("toy-generator")).unwrap();
        assert_eq!(gen.handle().stride, 4);
    }

    #[test]
    fn missing_weights_are_backend_errors_naming_the_path() {
        let spec = AdapterSpec::new(LINEAR_ENCODER_ID).with_weights("/nonexistent/enc.json");
        let err = load_encoder(&spec).err().unwrap();
        assert!(matches!(err, Error::Backend(_)));
        assert!(err.to_string().contains("/nonexistent/enc.json"));
        assert!(matches!(
            load_generator(&AdapterSpec::new(LINEAR_GENERATOR_ID)),
            Err(Error::Backend(_))
        ));
    }

    #[test]
    fn corrupt_weights_are_backend_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"stride\": 4").unwrap();
        let spec = AdapterSpec::new(LINEAR_GENERATOR_ID).with_weights(&path);
        assert!(matches!(load_generator(&spec), Err(Error::Backend(_))));
    }

    #[test]
    fn unknown_ids_and_capability_mismatches() {
        assert!(matches!(
            load_encoder(&AdapterSpec::new("clip-vit-b32")),
            Err(Error::Backend(_))
        ));
        let mut spec = AdapterSpec::new("toy-generator");
        spec.device = Device::Accelerator;
        assert!(matches!(load_generator(&spec), Err(Error::Config { .. })));
    }

    #[test]
    fn weights_path_prefers_config_over_env() {
        let var = "PROMPTPAINTER_TEST_ONLY_PATH";
        std::env::set_var(var, "/from/env");
        assert_eq!(
            resolve_weights_path(Some(Path::new("/cfg")), var),
            Some(PathBuf::from("/cfg"))
        );
        assert_eq!(
            resolve_weights_path(None, var),
            Some(PathBuf::from("/from/env"))
        );
        std::env::remove_var(var);
        assert_eq!(resolve_weights_path(None, var), None);
    }
}
