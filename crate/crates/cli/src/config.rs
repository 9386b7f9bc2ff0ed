//! JSON config file plus command-line overrides.
//!
//! Precedence is flags, then the config file, then built-in defaults. The
//! file schema is [`ConfigFile`]; unknown keys are rejected.

use std::path::{Path, PathBuf};

use promptpainter::adapters::{
    resolve_weights_path, AdapterSpec, ENCODER_PATH_ENV, GENERATOR_PATH_ENV,
};
use promptpainter::augmentation::{AugmentConfig, NoiseConfig};
use promptpainter::pipeline::default_levels;
use promptpainter::superres::SuperresConfig;
use promptpainter::{
    Error, LevelConfig, OptimizerKind, RunConfig, StyleParam, StyleSet, ToyEncoder, ToyGenerator,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_OUTPUT_DIR: &str = "promptpainter-out";

/// Backend selection in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub id: String,
    #[serde(default)]
    pub weights_path: Option<PathBuf>,
}

/// On-disk config. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub content: Option<PathBuf>,
    pub styles: Option<Vec<StyleParam>>,
    /// Final resolution for the default schedule; ignored when `levels` is set.
    pub size: Option<usize>,
    pub levels: Option<Vec<LevelConfig>>,
    pub optimizer: Option<OptimizerKind>,
    pub augment: Option<AugmentConfig>,
    pub noise: Option<NoiseConfig>,
    pub encoder: Option<BackendConfig>,
    pub generator: Option<BackendConfig>,
    pub superres: Option<SuperresConfig>,
    pub output_dir: Option<PathBuf>,
    pub save_intermediates: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            CliError::Core(Error::Io {
                path: path.to_path_buf(),
                source,
            })
        })?;
        Self::parse(&text, path)
    }
}

/// Values given on the command line. `None` and empty lists mean "not given".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub content: Option<PathBuf>,
    pub texts: Vec<String>,
    pub style_images: Vec<PathBuf>,
    /// Applied to texts first, then images, in flag order.
    pub style_weights: Vec<f64>,
    pub size: Option<usize>,
    pub levels: Option<Vec<LevelConfig>>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub save_intermediates: bool,
    pub encoder: Option<String>,
    pub generator: Option<String>,
    pub superres: Option<SuperresConfig>,
    pub bench: bool,
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub run: RunConfig,
    pub encoder: AdapterSpec,
    pub generator: AdapterSpec,
    pub output_dir: PathBuf,
    pub save_intermediates: bool,
    pub bench: bool,
}

/// Parses `"r:iters:lr,r:iters:lr"`. The learning rate may be omitted.
pub fn parse_levels(s: &str) -> Result<Vec<LevelConfig>, Error> {
    let bad = |part: &str| Error::Config {
        field: "levels".into(),
        message: format!("expected `resolution:iterations[:learning_rate]`, got `{part}`"),
    };
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|part| {
            let fields: Vec<&str> = part.split(':').collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(bad(part));
            }
            let resolution = fields[0].parse().map_err(|_| bad(part))?;
            let iterations = fields[1].parse().map_err(|_| bad(part))?;
            let learning_rate = match fields.get(2) {
                Some(lr) => lr.parse().map_err(|_| bad(part))?,
                None => promptpainter::pipeline::DEFAULT_LEARNING_RATE,
            };
            Ok(LevelConfig::new(resolution, iterations, learning_rate))
        })
        .collect()
}

/// Parses `off`, a bare factor (`2`, `4`) or `adapter:factor`.
pub fn parse_superres(s: &str) -> Result<SuperresConfig, Error> {
    let mut cfg = SuperresConfig::default();
    let bad = || Error::Config {
        field: "superres".into(),
        message: format!("expected `off`, a factor, or `adapter:factor`, got `{s}`"),
    };
    if s.is_empty() {
        return Err(bad());
    }
    match s.split_once(':') {
        _ if s == "off" => cfg.enabled = false,
        Some((adapter, factor)) => {
            cfg.adapter = adapter.to_string();
            cfg.factor = factor.parse().map_err(|_| bad())?;
        }
        None => match s.parse() {
            Ok(factor) => cfg.factor = factor,
            Err(_) => cfg.adapter = s.to_string(),
        },
    }
    Ok(cfg)
}

fn flag_styles(o: &Overrides) -> Result<Option<Vec<StyleParam>>, Error> {
    let mut params: Vec<StyleParam> = o.texts.iter().map(StyleParam::text).collect();
    params.extend(
        o.style_images
            .iter()
            .map(|p| StyleParam::image(p.to_string_lossy())),
    );
    if !o.style_weights.is_empty() {
        if o.style_weights.len() != params.len() {
            return Err(Error::Config {
                field: "style_weight".into(),
                message: format!(
                    "{} weights given for {} styles",
                    o.style_weights.len(),
                    params.len()
                ),
            });
        }
        for (p, w) in params.iter_mut().zip(&o.style_weights) {
            p.weight = *w;
        }
    }
    Ok((!params.is_empty()).then_some(params))
}

fn levels_for(levels: Option<Vec<LevelConfig>>, size: Option<usize>) -> Option<Vec<LevelConfig>> {
    levels.or_else(|| size.map(default_levels))
}

fn backend(
    flag: Option<&String>,
    file: Option<BackendConfig>,
    default_id: &str,
    env: &str,
) -> AdapterSpec {
    let (id, configured) = match (flag, file) {
        (Some(id), Some(f)) if *id == f.id => (id.clone(), f.weights_path),
        (Some(id), _) => (id.clone(), None),
        (None, Some(f)) => (f.id, f.weights_path),
        (None, None) => (default_id.to_string(), None),
    };
    let mut spec = AdapterSpec::new(id);
    spec.weights_path = resolve_weights_path(configured.as_deref(), env);
    spec
}

/// Merges flags over the file (if any) over defaults, then validates.
pub fn resolve(o: &Overrides) -> Result<Settings, CliError> {
    let file = match &o.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    Ok(merge(o, file)?)
}

/// Merge step of [`resolve`], with the file already parsed.
pub fn merge(o: &Overrides, file: ConfigFile) -> Result<Settings, Error> {
    let styles = match flag_styles(o)? {
        Some(s) => s,
        None => file.styles.unwrap_or_default(),
    };
    let mut run = RunConfig::new(StyleSet::new(styles)?);
    if let Some(levels) =
        levels_for(o.levels.clone(), o.size).or_else(|| levels_for(file.levels, file.size))
    {
        run.levels = levels;
    }
    run.seed = o.seed.or(file.seed).unwrap_or(run.seed);
    run.content = o.content.clone().or(file.content);
    run.optimizer = file.optimizer.unwrap_or(run.optimizer);
    run.augment = file.augment.unwrap_or(run.augment);
    run.noise = file.noise.unwrap_or(run.noise);
    run.superres = o.superres.clone().or(file.superres).unwrap_or(run.superres);
    run.validate()?;
    for p in run.styles.params() {
        p.validate()?;
    }
    if let Some(content) = &run.content {
        if !content.is_file() {
            return Err(Error::Io {
                path: content.clone(),
                source: std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "content image not found",
                ),
            });
        }
    }
    Ok(Settings {
        run,
        encoder: backend(
            o.encoder.as_ref(),
            file.encoder,
            ToyEncoder::ID,
            ENCODER_PATH_ENV,
        ),
        generator: backend(
            o.generator.as_ref(),
            file.generator,
            ToyGenerator::ID,
            GENERATOR_PATH_ENV,
        ),
        output_dir: o
            .output_dir
            .clone()
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        save_intermediates: o.save_intermediates || file.save_intermediates.unwrap_or(false),
        bench: o.bench,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(t: &[&str]) -> Overrides {
        Overrides {
            texts: t.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn empty_file_and_a_text_gives_defaults() {
        let s = merge(&texts(&["ink wash"]), ConfigFile::default()).unwrap();
        let expected = RunConfig::new(StyleSet::new(vec![StyleParam::text("ink wash")]).unwrap());
        assert_eq!(s.run, expected);
        assert_eq!(s.encoder.id, ToyEncoder::ID);
        assert_eq!(s.generator.id, ToyGenerator::ID);
        assert_eq!(s.output_dir, PathBuf::from(DEFAULT_OUTPUT_DIR));
        assert!(!s.save_intermediates);
    }

    #[test]
    fn flag_seed_overrides_file_seed() {
        let file = ConfigFile::parse(
            r#"{"seed": 3, "styles": [{"kind": "text", "payload": "moss"}]}"#,
            Path::new("c.json"),
        )
        .unwrap();
        let o = Overrides {
            seed: Some(7),
            ..Default::default()
        };
        let s = merge(&o, file.clone()).unwrap();
        assert_eq!(s.run.seed, 7);
        assert_eq!(merge(&Overrides::default(), file).unwrap().run.seed, 3);
    }

    #[test]
    fn unknown_keys_rejected_with_line_info() {
        let err = ConfigFile::parse("{\n  \"seed\": 1,\n  \"sede\": 2\n}", Path::new("c.json"))
            .unwrap_err();
        match err {
            CliError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("sede"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_increasing_levels_name_the_field() {
        let o = Overrides {
            levels: Some(parse_levels("64:2,32:2").unwrap()),
            ..texts(&["x"])
        };
        let err = merge(&o, ConfigFile::default()).unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, .. } if field == "levels"),
            "{err}"
        );
    }

    #[test]
    fn missing_styles_is_a_config_error() {
        let err = merge(&Overrides::default(), ConfigFile::default()).unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "styles"));
    }

    #[test]
    fn level_and_superres_syntax() {
        assert_eq!(
            parse_levels("32:10:0.5, 64:5").unwrap(),
            vec![LevelConfig::new(32, 10, 0.5), LevelConfig::new(64, 5, 0.1)]
        );
        assert!(parse_levels("32").is_err());
        assert!(parse_levels("a:1").is_err());
        assert!(!parse_superres("off").unwrap().enabled);
        assert_eq!(parse_superres("4").unwrap().factor, 4);
        let s = parse_superres("lanczos:2").unwrap();
        assert_eq!((s.adapter.as_str(), s.factor), ("lanczos", 2));
        assert!(parse_superres("lanczos:x").is_err());
    }

    #[test]
    fn size_expands_to_default_schedule_and_flags_win() {
        let o = Overrides {
            size: Some(256),
            ..texts(&["x"])
        };
        let file = ConfigFile {
            levels: Some(vec![LevelConfig::new(32, 1, 0.1)]),
            ..Default::default()
        };
        assert_eq!(merge(&o, file).unwrap().run.levels, default_levels(256));
    }

    #[test]
    fn weights_follow_texts_then_images() {
        let o = Overrides {
            texts: vec!["a".into(), "b".into()],
            style_weights: vec![1.0, 3.0],
            ..Default::default()
        };
        let s = merge(&o, ConfigFile::default()).unwrap();
        let w: Vec<f64> = s.run.styles.params().iter().map(|p| p.weight).collect();
        assert_eq!(w, vec![1.0, 3.0]);
        let bad = Overrides {
            style_weights: vec![1.0],
            ..o
        };
        assert!(matches!(
            merge(&bad, ConfigFile::default()),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn file_backend_weights_kept_when_flag_names_same_id() {
        let file = ConfigFile {
            encoder: Some(BackendConfig {
                id: "linear-encoder".into(),
                weights_path: Some("w.json".into()),
            }),
            ..Default::default()
        };
        let o = Overrides {
            encoder: Some("linear-encoder".into()),
            ..texts(&["x"])
        };
        assert_eq!(
            merge(&o, file).unwrap().encoder.weights_path,
            Some(PathBuf::from("w.json"))
        );
    }
}
