//! Command-line experiment runner for the vcluster simulator.

pub mod commands;
pub mod config;

use std::io;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;
use vcluster::cluster::SimError;
use vcluster::experiment::ExperimentError;
use vcluster::isa::AsmError;
use vcluster::metrics::{MetricsError, ReportFormat};
use vcluster::workloads::{KernelKind, WorkloadError};

pub use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("simulation timed out {0}")]
    Timeout(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{failed} of {total} sweep cells failed")]
    Sweep { failed: usize, total: usize, code: u8 },
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 1,
            CliError::Asm(_) => 2,
            CliError::Sim(_) | CliError::Timeout(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::Sweep { code, .. } => *code,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Workload(WorkloadError::Asm(a)) => CliError::Asm(a),
            ExperimentError::Workload(w) => CliError::Config(w.to_string()),
            ExperimentError::Sim(s) => CliError::Sim(s),
            e @ ExperimentError::Mismatch { .. } => CliError::Mismatch(e.to_string()),
            ExperimentError::Metrics(m) => m.into(),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Timeout => CliError::Timeout("before the comparison".into()),
            e @ MetricsError::Divergence { .. } => CliError::Mismatch(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vcluster", version, about = "Split/merge vector cluster simulator")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// split (two cores, two halves), split-single, or merge.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
    /// Print one line per issued instruction to stderr.
    #[arg(long, global = true)]
    pub trace: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub max_cycles: Option<u64>,
    /// Report file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one kernel or assembly program.
    Run {
        /// Assembly file; overrides the configured kernel.
        file: Option<PathBuf>,
        #[arg(long)]
        kernel: Option<KernelKind>,
        #[arg(long)]
        n: Option<u32>,
    },
    /// Run every kernel in every mode and compare modes.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        kernels: Vec<KernelKind>,
        #[arg(long, value_delimiter = ',')]
        modes: Vec<String>,
    },
    /// Compare a kernel plus scalar task in the split and merge layouts.
    Mixed {
        #[arg(long)]
        kernel: Option<KernelKind>,
        #[arg(long)]
        n: Option<u32>,
        /// Fixed scalar iteration count; disables balancing.
        #[arg(long)]
        iterations: Option<u32>,
    },
    /// Assemble a file without running it.
    AsmCheck {
        file: PathBuf,
        /// Print the disassembly.
        #[arg(long)]
        disassemble: bool,
    },
}

/// Loads the configuration and applies command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let e = &mut config.experiment;
    if let Some(m) = &cli.mode {
        e.mode = Some(m.clone());
        e.modes = vec![m.clone()];
    }
    if let Some(s) = cli.seed {
        e.seed = s;
    }
    if let Some(m) = cli.max_cycles {
        e.max_cycles = m;
    }
    if let Some(f) = cli.format {
        config.output.format = f.into();
    }
    if cli.trace {
        config.output.trace = true;
    }
    if let Some(o) = &cli.out {
        config.output.path = Some(o.clone());
    }
    Ok(config)
}

/// Runs the parsed command. Reports go to the configured path or `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn io::Write) -> Result<(), CliError> {
    let mut config = effective_config(cli)?;
    match &cli.command {
        Command::Run { file, kernel, n } => {
            if file.is_some() {
                config.experiment.asm.clone_from(file);
            }
            if kernel.is_some() {
                config.experiment.kernel = *kernel;
                if file.is_none() {
                    config.experiment.asm = None;
                }
            }
            if n.is_some() {
                config.experiment.n = *n;
            }
            commands::run(&config, stdout)
        }
        Command::Sweep { kernels, modes } => {
            if !kernels.is_empty() {
                config.experiment.kernels.clone_from(kernels);
            }
            if !modes.is_empty() {
                config.experiment.modes.clone_from(modes);
            }
            commands::sweep(&config, stdout)
        }
        Command::Mixed { kernel, n, iterations } => {
            if kernel.is_some() {
                config.experiment.kernel = *kernel;
            }
            if n.is_some() {
                config.experiment.n = *n;
            }
            if let Some(i) = iterations {
                config.experiment.scalar.iterations = *i;
                config.experiment.balance = false;
            }
            commands::mixed(&config, stdout)
        }
        Command::AsmCheck { file, disassemble } => commands::asm_check(file, *disassemble, stdout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vcluster::isa::assemble;
    use vcluster::workloads::Mismatch;

    #[test]
    fn each_failure_class_has_one_exit_code() {
        let asm = assemble("bogus").unwrap_err();
        assert_eq!(CliError::Asm(asm).exit_code(), 2);
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::io(Path::new("x"), io::ErrorKind::NotFound.into()).exit_code(), 1);
        assert_eq!(CliError::Timeout(String::new()).exit_code(), 3);
        let mismatch = ExperimentError::Mismatch { what: "axpy".into(), mismatch: Mismatch { index: 0, got: "1".into(), want: "2".into() } };
        assert_eq!(CliError::from(mismatch).exit_code(), 4);
        assert_eq!(CliError::from(MetricsError::Divergence { split: 1, merge: 2 }).exit_code(), 4);
        assert_eq!(CliError::from(ExperimentError::Workload(WorkloadError::Invalid("n".into()))).exit_code(), 1);
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from(["vcluster", "--seed", "9", "--mode", "merge", "--format", "csv", "run"]);
        let c = effective_config(&cli).unwrap();
        assert_eq!(c.experiment.seed, 9);
        assert_eq!(c.experiment.modes, ["merge"]);
        assert_eq!(c.output.format, ReportFormat::Csv);
    }
}
