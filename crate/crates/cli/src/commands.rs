//! Subcommand implementations.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;
use vcluster::experiment::{balance_iterations, run_kernel, run_mixed_layout, run_program, run_scalar, RunOptions};
use vcluster::isa::{assemble, disassemble};
use vcluster::metrics::{compare_modes, to_csv, to_json, ComparisonReport, CsvRow, ReportFormat, RunStats, SCHEMA_VERSION};
use vcluster::workloads::{KernelKind, MixedLayout, Region, Variant};

use crate::{CliError, Config};

fn options(config: &Config) -> Result<RunOptions, CliError> {
    Ok(RunOptions {
        cluster: config.cluster.to_cluster()?,
        energy: config.energy_model()?,
        max_cycles: config.experiment.max_cycles,
    })
}

fn variant(mode: &str) -> Result<Variant, CliError> {
    mode.parse().map_err(|e: vcluster::workloads::WorkloadError| CliError::Config(e.to_string()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn emit(config: &Config, stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match &config.output.path {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn trace_sink(config: &Config) -> Option<Box<dyn Write + Send>> {
    config.output.trace.then(|| Box::new(BufWriter::new(io::stderr())) as Box<dyn Write + Send>)
}

fn kernel(config: &Config) -> KernelKind {
    config.experiment.kernel.unwrap_or(KernelKind::Axpy)
}

fn timed_out(stats: &RunStats) -> Result<(), CliError> {
    if stats.timeout {
        return Err(CliError::Timeout(format!("after {} cycles ({}, {})", stats.cycles, stats.config.workload, stats.config.mode)));
    }
    Ok(())
}

/// One simulation of the configured kernel or assembly program.
pub fn run(config: &Config, stdout: &mut dyn Write) -> Result<(), CliError> {
    let opts = options(config)?;
    let e = &config.experiment;
    let stats = match &e.asm {
        Some(path) => {
            let program = assemble(&read(path)?)?;
            if e.mode.is_some() {
                warn!("mode is ignored for assembly programs; they start split and switch with modeswitch");
            }
            let name = path.file_name().map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned());
            let whole = Region { addr: 0, words: opts.cluster.scratchpad_bytes / 4 };
            let echo = opts.echo(name, "asm", e.seed);
            run_program(program, &[whole], echo, &opts, trace_sink(config))?.stats
        }
        None => {
            let v = variant(e.mode.as_deref().unwrap_or("split"))?;
            let spec = e.kernel_spec(kernel(config)).with_variant(v);
            run_kernel(&spec, &opts, trace_sink(config))?.stats
        }
    };
    emit(config, stdout, &stats.emit(config.output.format))?;
    timed_out(&stats)
}

#[derive(Debug, Clone, Serialize)]
pub struct CellFailure {
    pub workload: String,
    pub mode: String,
    pub exit_code: u8,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub runs: Vec<RunStats>,
    /// Each later mode against the first, per kernel.
    pub comparisons: Vec<ComparisonReport>,
    pub failures: Vec<CellFailure>,
}

impl SweepReport {
    pub fn emit(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => to_json(self),
            ReportFormat::Csv => {
                let mut s = to_csv(&self.runs);
                if !self.comparisons.is_empty() {
                    s.push('\n');
                    s.push_str(&to_csv(&self.comparisons));
                }
                s
            }
        }
    }
}

/// Every configured kernel in every configured mode, run in parallel.
pub fn sweep(config: &Config, stdout: &mut dyn Write) -> Result<(), CliError> {
    let opts = options(config)?;
    let e = &config.experiment;
    let kinds = match (&e.kernels[..], e.kernel) {
        ([], Some(k)) => vec![k],
        ([], None) => KernelKind::ALL.to_vec(),
        (ks, _) => ks.to_vec(),
    };
    let modes = if e.modes.is_empty() {
        vec![Variant::SplitDual, Variant::Merge]
    } else {
        e.modes.iter().map(|m| variant(m)).collect::<Result<Vec<_>, _>>()?
    };
    if config.output.trace {
        warn!("tracing is not available for sweeps");
    }

    let cells: Vec<(KernelKind, Variant)> = kinds.iter().flat_map(|&k| modes.iter().map(move |&v| (k, v))).collect();
    let results: Vec<Result<RunStats, CliError>> = cells
        .par_iter()
        .map(|&(k, v)| {
            let stats = run_kernel(&e.kernel_spec(k).with_variant(v), &opts, None)?.stats;
            timed_out(&stats)?;
            Ok(stats)
        })
        .collect();

    let mut report = SweepReport { schema_version: SCHEMA_VERSION, runs: Vec::new(), comparisons: Vec::new(), failures: Vec::new() };
    let mut codes = Vec::new();
    let mut fail = |report: &mut SweepReport, k: KernelKind, v: Variant, err: &CliError| {
        codes.push(err.exit_code());
        report.failures.push(CellFailure {
            workload: e.kernel_spec(k).label(),
            mode: v.name().to_string(),
            exit_code: err.exit_code(),
            error: err.to_string(),
        });
    };
    for (row, &k) in results.chunks(modes.len()).zip(&kinds) {
        for (r, &v) in row.iter().zip(&modes) {
            match r {
                Ok(stats) => report.runs.push(stats.clone()),
                Err(err) => fail(&mut report, k, v, err),
            }
        }
        let Ok(base) = &row[0] else { continue };
        for (r, &v) in row.iter().zip(&modes).skip(1) {
            if let Ok(cand) = r {
                match compare_modes(base, cand) {
                    Ok(c) => report.comparisons.push(c),
                    Err(err) => fail(&mut report, k, v, &err.into()),
                }
            }
        }
    }
    for f in &report.failures {
        eprintln!("cell failed: {} [{}]: {}", f.workload, f.mode, f.error);
    }
    emit(config, stdout, &report.emit(config.output.format))?;
    match codes.first() {
        Some(&code) => Err(CliError::Sweep { failed: report.failures.len(), total: cells.len(), code }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MixedReport {
    pub schema_version: u32,
    pub kernel: String,
    pub scalar_iterations: u32,
    pub balanced: bool,
    /// Split-dual kernel time the scalar task was sized against.
    pub balance_target_cycles: Option<u64>,
    /// Scalar task alone.
    pub scalar_cycles: u64,
    pub split_cycles: u64,
    pub merge_cycles: u64,
    /// `split_cycles / merge_cycles`.
    pub speedup: f64,
    pub core0_utilization_split: f64,
    pub core1_utilization_split: f64,
    pub core0_utilization_merge: f64,
    pub core1_utilization_merge: f64,
    pub split: RunStats,
    pub merge: RunStats,
}

impl CsvRow for MixedReport {
    fn csv_header() -> Vec<String> {
        [
            "schema_version",
            "kernel",
            "scalar_iterations",
            "balanced",
            "scalar_cycles",
            "split_cycles",
            "merge_cycles",
            "speedup",
            "core1_utilization_split",
            "core1_utilization_merge",
            "split_checksum",
            "merge_checksum",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.schema_version.to_string(),
            self.kernel.clone(),
            self.scalar_iterations.to_string(),
            self.balanced.to_string(),
            self.scalar_cycles.to_string(),
            self.split_cycles.to_string(),
            self.merge_cycles.to_string(),
            self.speedup.to_string(),
            self.core1_utilization_split.to_string(),
            self.core1_utilization_merge.to_string(),
            format!("{:#018x}", self.split.checksum),
            format!("{:#018x}", self.merge.checksum),
        ]
    }
}

/// Builds the mixed comparison without writing it.
pub fn mixed_report(config: &Config) -> Result<MixedReport, CliError> {
    let opts = options(config)?;
    let e = &config.experiment;
    let spec = e.kernel_spec(kernel(config));
    let mut scalar = e.scalar.clone();
    let target = if e.balance {
        let dual = run_kernel(&spec.clone().with_variant(Variant::SplitDual), &opts, None)?.stats;
        timed_out(&dual)?;
        scalar.iterations = balance_iterations(&scalar, dual.cycles, &opts)?;
        Some(dual.cycles)
    } else {
        None
    };
    let alone = run_scalar(&scalar, &opts)?.stats;
    timed_out(&alone)?;
    if config.output.trace {
        warn!("tracing is not available for mixed runs");
    }
    let split = run_mixed_layout(&spec, &scalar, MixedLayout::Split, &opts, None)?.stats;
    let merge = run_mixed_layout(&spec, &scalar, MixedLayout::Merge, &opts, None)?.stats;
    Ok(MixedReport {
        schema_version: SCHEMA_VERSION,
        kernel: spec.label(),
        scalar_iterations: scalar.iterations,
        balanced: e.balance,
        balance_target_cycles: target,
        scalar_cycles: alone.cycles,
        split_cycles: split.cycles,
        merge_cycles: merge.cycles,
        speedup: split.cycles as f64 / merge.cycles.max(1) as f64,
        core0_utilization_split: split.utilization(0),
        core1_utilization_split: split.utilization(1),
        core0_utilization_merge: merge.utilization(0),
        core1_utilization_merge: merge.utilization(1),
        split,
        merge,
    })
}

pub fn mixed(config: &Config, stdout: &mut dyn Write) -> Result<(), CliError> {
    let report = mixed_report(config)?;
    let text = match config.output.format {
        ReportFormat::Json => to_json(&report),
        ReportFormat::Csv => to_csv(std::slice::from_ref(&report)),
    };
    emit(config, stdout, &text)?;
    timed_out(&report.split)?;
    timed_out(&report.merge)
}

pub fn asm_check(path: &Path, disasm: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let program = assemble(&read(path)?)?;
    let text = if disasm {
        disassemble(&program)
    } else {
        let words: usize = program.data.iter().map(|d| d.words.len()).sum();
        format!("{}: {} instructions, {} data words\n", path.display(), program.instrs.len(), words)
    };
    stdout.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}
