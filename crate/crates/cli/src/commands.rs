//! The `run` and `bench` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use promptpainter::adapters::{load_encoder, load_generator, AdapterSpec};
use promptpainter::pipeline::{run_hierarchy_with, MonotonicClock, RunError, StepEvent};
use promptpainter::superres::{apply_stage, upscaler_from_config};
use promptpainter::{ImageEncoder, LatentGenerator, LossTrace, Result, StyleProjector};

use crate::config::Settings;
use crate::manifest::{
    level_traces, Backends, BenchReport, Outputs, RunManifest, Seeds, StageStats, SCHEMA_VERSION,
};
use crate::CliError;

pub const OUTPUT_FILE: &str = "output.png";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BENCH_FILE: &str = "bench.json";
pub const SNAPSHOT_DIR: &str = "snapshots";

type EncoderLoader = dyn Fn(&AdapterSpec) -> Result<Box<dyn ImageEncoder>>;
type GeneratorLoader = dyn Fn(&AdapterSpec) -> Result<Box<dyn LatentGenerator>>;

/// Turns adapter specs into backends. Tests swap in faulty loaders.
pub struct Registry {
    pub encoder: Box<EncoderLoader>,
    pub generator: Box<GeneratorLoader>,
}

impl Default for Registry {
    fn default() -> Self {
        Self {
            encoder: Box::new(load_encoder),
            generator: Box::new(load_generator),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub bench: Option<(BenchReport, PathBuf)>,
}

pub fn snapshot_name(level: usize, iteration: usize) -> String {
    format!("level{level}_iter{iteration}.png")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs the full pipeline, writes `output.png` and `manifest.json` (plus
/// snapshots and `bench.json` when requested). A failed run still leaves a
/// manifest with the steps completed and the error message.
pub fn run_command(settings: &Settings, registry: &Registry) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let encoder = (registry.encoder)(&settings.encoder)?;
    let generator = (registry.generator)(&settings.generator)?;
    // Fail on schedule problems before anything is written.
    settings.run.resolve(encoder.as_ref(), generator.as_ref())?;
    let upscaler = match settings.run.superres.enabled {
        true => Some(
            upscaler_from_config(&settings.run.superres)?
                .handle()
                .clone(),
        ),
        false => None,
    };

    let dir = &settings.output_dir;
    create_dir(dir)?;
    if settings.save_intermediates {
        create_dir(&dir.join(SNAPSHOT_DIR))?;
    }

    let mut snapshots = Vec::new();
    let mut snapshot_error = None;
    let mut observer = |ev: &StepEvent<'_>| {
        if !settings.save_intermediates || snapshot_error.is_some() {
            return;
        }
        let rel = Path::new(SNAPSHOT_DIR).join(snapshot_name(ev.level, ev.iteration));
        match ev.image.save_png(&dir.join(&rel)) {
            Ok(()) => snapshots.push(rel),
            Err(e) => snapshot_error = Some(e),
        }
    };
    let result = run_hierarchy_with(
        &settings.run,
        encoder.as_ref(),
        generator.as_ref(),
        &StyleProjector::new(),
        &MonotonicClock::new(),
        &mut observer,
    );

    let mut manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        settings: settings.clone(),
        seeds: Seeds::for_run(&settings.run),
        levels: Vec::new(),
        timings: StageStats::default(),
        outputs: Outputs {
            image: None,
            size: None,
            snapshots,
        },
        backends: Backends {
            encoder: encoder.handle().clone(),
            generator: generator.handle().clone(),
            upscaler,
        },
        error: None,
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    let fill_trace = |m: &mut RunManifest, trace: &LossTrace| {
        m.levels = level_traces(&settings.run, trace);
        m.timings = StageStats::from_records(&trace.records);
    };

    let out = match (result, snapshot_error) {
        (Ok(out), None) => out,
        (Ok(out), Some(error)) => {
            fill_trace(&mut manifest, &out.trace);
            manifest.error = Some(error.to_string());
            write_file(&manifest_path, manifest.to_json().as_bytes())?;
            return Err(error.into());
        }
        (Err(RunError { error, trace }), _) => {
            fill_trace(&mut manifest, &trace);
            manifest.error = Some(error.to_string());
            write_file(&manifest_path, manifest.to_json().as_bytes())?;
            return Err(error.into());
        }
    };

    fill_trace(&mut manifest, &out.trace);
    let image = apply_stage(&settings.run.superres, &out.image)?;
    image.save_png(&dir.join(OUTPUT_FILE))?;
    manifest.outputs.image = Some(PathBuf::from(OUTPUT_FILE));
    manifest.outputs.size = Some((image.height(), image.width()));
    write_file(&manifest_path, manifest.to_json().as_bytes())?;

    let bench = if settings.bench {
        let report = BenchReport::new(&manifest, started.elapsed().as_secs_f64() * 1e3);
        let path = dir.join(BENCH_FILE);
        let json =
            serde_json::to_string_pretty(&report).expect("bench fields are always serializable");
        write_file(&path, json.as_bytes())?;
        Some((report, path))
    } else {
        None
    };
    Ok(RunSummary {
        manifest,
        manifest_path,
        bench,
    })
}

/// [`run_command`] with timing output forced on.
pub fn bench_command(settings: &Settings, registry: &Registry) -> Result<RunSummary, CliError> {
    let settings = Settings {
        bench: true,
        ..settings.clone()
    };
    run_command(&settings, registry)
}
