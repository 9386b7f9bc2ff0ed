//! Persisted records of a run: `manifest.json` and `bench.json`.

use std::path::{Path, PathBuf};

use promptpainter::pipeline::{StageTimings, StepRecord};
use promptpainter::superres::UpscalerHandle;
use promptpainter::{EncoderHandle, GeneratorHandle, LossTrace, RunConfig};
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageStat {
    pub mean_ms: f64,
    pub median_ms: f64,
}

/// Per-iteration statistics for each pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageStats {
    pub decode: StageStat,
    pub augment: StageStat,
    pub embed: StageStat,
    pub backprop: StageStat,
    pub update: StageStat,
}

fn stat(mut xs: Vec<f64>) -> StageStat {
    if xs.is_empty() {
        return StageStat::default();
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let median_ms = if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    };
    StageStat {
        mean_ms: xs.iter().sum::<f64>() / n as f64,
        median_ms,
    }
}

impl StageStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a StepRecord>) -> Self {
        let timings: Vec<StageTimings> = records.into_iter().map(|r| r.timings).collect();
        let column = |k: usize| stat(timings.iter().map(|t| t.as_array()[k]).collect());
        Self {
            decode: column(0),
            augment: column(1),
            embed: column(2),
            backprop: column(3),
            update: column(4),
        }
    }

    pub fn as_array(&self) -> [StageStat; 5] {
        [
            self.decode,
            self.augment,
            self.embed,
            self.backprop,
            self.update,
        ]
    }

    pub fn mean_sum(&self) -> f64 {
        self.as_array().iter().map(|s| s.mean_ms).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub run: u64,
    /// Per-level stream seeds; iteration seeds derive from these.
    pub levels: Vec<u64>,
}

impl Seeds {
    pub fn for_run(cfg: &RunConfig) -> Self {
        Self {
            run: cfg.seed,
            levels: (0..cfg.levels.len())
                .map(|l| promptpainter::seed::derive(cfg.seed, l as u64))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelTrace {
    pub index: usize,
    pub resolution: usize,
    pub learning_rate: f64,
    pub records: Vec<StepRecord>,
    pub timings: StageStats,
}

/// Splits a flat trace into per-level sections.
pub fn level_traces(cfg: &RunConfig, trace: &LossTrace) -> Vec<LevelTrace> {
    cfg.levels
        .iter()
        .enumerate()
        .map(|(index, level)| {
            let records: Vec<StepRecord> = trace.level(index).cloned().collect();
            LevelTrace {
                index,
                resolution: level.resolution,
                learning_rate: level.learning_rate,
                timings: StageStats::from_records(&records),
                records,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub image: Option<PathBuf>,
    /// Final image size as (height, width), after any upscaling.
    pub size: Option<(usize, usize)>,
    pub snapshots: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    pub encoder: EncoderHandle,
    pub generator: GeneratorHandle,
    pub upscaler: Option<UpscalerHandle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub settings: Settings,
    pub seeds: Seeds,
    pub levels: Vec<LevelTrace>,
    /// Statistics over every iteration of the run.
    pub timings: StageStats,
    pub outputs: Outputs,
    pub backends: Backends,
    /// Set when the run aborted; `levels` then holds the steps completed.
    pub error: Option<String>,
}

impl RunManifest {
    /// Flattened loss trace in execution order.
    pub fn trace(&self) -> LossTrace {
        LossTrace {
            records: self
                .levels
                .iter()
                .flat_map(|l| l.records.iter().cloned())
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest fields are always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            CliError::Core(promptpainter::Error::Io {
                path: path.to_path_buf(),
                source,
            })
        })?;
        Self::from_json(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelBench {
    pub index: usize,
    pub resolution: usize,
    pub iterations: usize,
    pub stages: StageStats,
    /// Sum of all stage times in this level.
    pub stage_total_ms: f64,
}

pub const BENCH_NOTE: &str =
    "Per-iteration stage timings on this machine with the configured backends. \
Absolute runtimes depend on hardware and model size and are not comparable across setups; \
no output quality is measured.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchReport {
    pub schema_version: u32,
    pub encoder: String,
    pub generator: String,
    pub iterations: usize,
    pub stages: StageStats,
    pub levels: Vec<LevelBench>,
    /// Wall clock of the whole command, including loading and output.
    pub total_ms: f64,
    pub note: String,
}

impl BenchReport {
    pub fn new(manifest: &RunManifest, total_ms: f64) -> Self {
        let levels = manifest
            .levels
            .iter()
            .map(|l| LevelBench {
                index: l.index,
                resolution: l.resolution,
                iterations: l.records.len(),
                stages: l.timings,
                stage_total_ms: l.records.iter().map(|r| r.timings.sum()).sum(),
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            encoder: manifest.backends.encoder.identity.clone(),
            generator: manifest.backends.generator.identity.clone(),
            iterations: manifest.levels.iter().map(|l| l.records.len()).sum(),
            stages: manifest.timings,
            levels,
            total_ms,
            note: BENCH_NOTE.to_string(),
        }
    }
}
