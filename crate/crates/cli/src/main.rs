use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use uds_cli::commands::{cmd_bounds, cmd_generate, cmd_validate};
use uds_cli::config::CatalogSection;
use uds_cli::{run_sweep, write_outputs, ConfigFile, ExperimentSpec};
use uds_core::resources::DEFAULT_BASE_MIPS;
use uds_core::VmCatalog;

#[derive(Parser)]
#[command(name = "uds", version, about = "Workflow scheduling on reliable and revocable VMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and write summary.csv.
    Run(Experiment),
    /// Print the makespan and cost lower bounds of each workflow.
    Bounds(Experiment),
    /// Check DAX files and report their structure.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        catalog: CatalogSection,
    },
    /// Write synthetic workflows as DAX (to --out, or stdout).
    Generate(Experiment),
}

#[derive(Args)]
struct Experiment {
    /// TOML file with [workflow], [catalog], [uds], [sim] and [sweep] sections.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFile,
}

impl Experiment {
    fn resolve(self) -> anyhow::Result<ExperimentSpec> {
        let base = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        ExperimentSpec::from_config(base.overlay(self.flags))
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let stdout = &mut std::io::stdout().lock();
    match cli.command {
        Command::Run(exp) => {
            let spec = exp.resolve()?;
            let records = run_sweep(&spec);
            let written = write_outputs(&spec, &records)?;
            for r in records.iter() {
                if let Err(e) = &r.outcome {
                    eprintln!("run {} ({}) failed: {e}", r.key.id(), r.workflow);
                }
            }
            eprintln!("{} of {} runs written to {}", written.rows, records.len(), written.summary.display());
            if written.failures > 0 {
                eprintln!("{} runs failed, see failures.csv", written.failures);
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bounds(exp) => {
            cmd_bounds(&exp.resolve()?, stdout)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { paths, catalog } => {
            let base = catalog.base_mips.unwrap_or(DEFAULT_BASE_MIPS);
            let cat = match &catalog.catalog {
                Some(p) => VmCatalog::from_csv_path(p, base).context("loading catalog")?,
                None => VmCatalog::with_base_mips(base),
            };
            let ok = cmd_validate(&paths, &cat, stdout, &mut std::io::stderr())?;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Generate(exp) => {
            let target = exp.flags.sweep.out.clone();
            cmd_generate(&exp.resolve()?, target.as_deref(), stdout)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
