//! `tcqsim`: batch front end for the tunable-coupling qubit simulator.

mod commands;
mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad config, arguments or input data; exit code 2.
    Config(String),
    /// Numerical failure or unconverged fit; exit code 1.
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn numeric(msg: impl fmt::Display) -> Self {
        Self::Numeric(msg.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(_) | Self::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numeric(m) => write!(f, "numeric failure: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tcqsim",
    version,
    about = "Tunable-coupling qubit dispersive-readout and dephasing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: config `out`, else ./tcqsim-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for synthetic noise; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// χ₋ (perturbative and diagonalized) against g₋, with the zero crossing.
    ChiSweep(Common),
    /// Shot-noise dephasing rate and T₂ model curves against n_th.
    GammaPhi(Common),
    /// Run one simulated measurement.
    Experiment {
        #[arg(value_enum)]
        which: Experiment,
        #[command(flatten)]
        common: Common,
    },
    /// Fit measured or synthetic T₂ data.
    Fit {
        #[arg(value_enum)]
        mode: FitMode,
        #[command(flatten)]
        common: Common,
    },
    /// Write the seeded synthetic datasets and matching fit configs.
    GenerateFixtures(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Experiment {
    Spectroscopy,
    Rabi,
    T1,
    Echo,
    NoiseSweep,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FitMode {
    NoiseCalibration,
    Chi,
}

/// Files produced by a command, written only once everything has been computed.
#[derive(Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub headline: String,
    /// Set when outputs are still written but the run must exit 1.
    pub failure: Option<String>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }
}

fn out_dir(common: &Common, loaded: &config::Loaded) -> PathBuf {
    if let Some(out) = &common.out {
        return out.clone();
    }
    match &loaded.config.out {
        Some(out) => loaded.resolve_path(out),
        None => PathBuf::from("tcqsim-out"),
    }
}

fn write_outputs(dir: &Path, outputs: &Outputs) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in &outputs.files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, task): (&Common, Box<dyn Fn(&config::Loaded) -> Result<Outputs, CliError>>) = match &cli.command {
        Command::ChiSweep(c) => (c, Box::new(commands::chi_sweep)),
        Command::GammaPhi(c) => (c, Box::new(commands::gamma_phi)),
        Command::Experiment { which, common } => {
            let which = *which;
            (common, Box::new(move |l| commands::experiment(l, which)))
        }
        Command::Fit { mode, common } => {
            let mode = *mode;
            (common, Box::new(move |l| commands::fit(l, mode)))
        }
        Command::GenerateFixtures(c) => (c, Box::new(commands::generate_fixtures)),
    };
    let loaded = config::load(&common.config, common.seed)?;
    let outputs = task(&loaded)?;
    write_outputs(&out_dir(common, &loaded), &outputs)?;
    if !outputs.headline.is_empty() {
        println!("{}", outputs.headline);
    }
    match outputs.failure {
        Some(msg) => Err(CliError::Numeric(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => err.exit(),
        Err(err) => {
            let _ = err.print();
            let mut cmd = Cli::command();
            cmd.build();
            let name = std::env::args().nth(1).unwrap_or_default();
            let usage = match cmd.find_subcommand_mut(&name) {
                Some(sub) => sub.render_usage(),
                None => cmd.render_usage(),
            };
            eprintln!("\n{usage}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("tcqsim: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
