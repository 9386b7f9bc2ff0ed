use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use promptpainter_cli::args::{Cli, Command};
use promptpainter_cli::config::{resolve, Overrides};
use promptpainter_cli::{bench_command, exit, run_command, CliError, Registry};

fn run(cli: Cli) -> anyhow::Result<()> {
    let (args, bench) = match cli.command {
        Command::Run(a) => (a, false),
        Command::Bench(a) => (a, true),
    };
    let overrides = Overrides::from(args);
    let settings = resolve(&overrides)?;
    let registry = Registry::default();
    let summary = match bench {
        true => bench_command(&settings, &registry),
        false => run_command(&settings, &registry),
    }
    .context("run failed")?;

    let trace = summary.manifest.trace();
    if let Some(last) = trace.records.last() {
        eprintln!("{} steps, final loss {:.6}", trace.len(), last.total);
    }
    eprintln!("wrote {}", summary.manifest_path.display());
    if let Some((report, path)) = &summary.bench {
        eprintln!("wrote {} ({:.1} ms total)", path.display(), report.total_ms);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<CliError>()
                .map_or(exit::BACKEND, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
