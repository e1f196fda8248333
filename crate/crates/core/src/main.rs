use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use pilot_relax::checks::{Acceptance, CRITERIA};
use pilot_relax::error::Error;
use pilot_relax::parallel::with_workers;
use pilot_relax::runner::{
    resolve_workers, run, table_render, RunConfig, RunManifest, MANIFEST_FILE, PRESETS,
};

/// Pilot-wave relaxation runs in a 2D box.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute a run config (a TOML file or a preset name).
    Run {
        config: String,
        /// Use the R = 256 lattice instead of the configured one.
        #[arg(long)]
        reduced: bool,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render the tables of a finished run (manifest file or output directory).
    Tables { manifest: PathBuf },
    /// Run the acceptance criteria on the reduced lattice.
    Check {
        /// Comma-separated criterion numbers.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Integrator(_)
        | Error::Geometry(_)
        | Error::InvalidMode { .. }
        | Error::InvalidAmplitude(_)
        | Error::EmptyState
        | Error::NotNormalized(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn load_config(arg: &str) -> Result<RunConfig, Error> {
    let path = Path::new(arg);
    if path.exists() {
        return RunConfig::load(path);
    }
    RunConfig::preset(arg).ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        Error::Config(format!(
            "{arg:?} is neither a file nor a preset ({})",
            names.join(", ")
        ))
    })
}

fn run_command(config: &str, reduced: bool, output: Option<PathBuf>) -> Result<(), Error> {
    let mut cfg = load_config(config)?;
    if reduced {
        cfg = cfg.reduced();
    }
    if let Some(dir) = output {
        cfg.output = dir;
    }
    let manifest = run(&cfg)?;
    print!("{}", table_render(&manifest));
    println!(
        "wrote {} files under {}",
        manifest.files.len() + 1,
        cfg.output.display()
    );
    Ok(())
}

fn tables_command(path: &Path) -> Result<(), Error> {
    let path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_owned()
    };
    print!("{}", table_render(&RunManifest::load(&path)?));
    Ok(())
}

fn check_command(only: Vec<u8>) -> Result<bool, Error> {
    let ids = if only.is_empty() {
        CRITERIA.to_vec()
    } else {
        only
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.contains(id)) {
        return Err(Error::Config(format!("no criterion {bad}")));
    }
    let workers = resolve_workers(None)?;
    Ok(with_workers(workers, || {
        let suite = Acceptance::default();
        let mut all = true;
        for id in ids {
            let outcome = suite.evaluate(id);
            println!("{outcome}");
            all &= outcome.passed;
        }
        all
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            reduced,
            output,
        } => run_command(&config, reduced, output),
        Command::Tables { manifest } => tables_command(&manifest),
        Command::Check { only } => match check_command(only) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_FAILURE),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
