//! Running generated workloads and turning the results into reports.

use std::io::Write;

use thiserror::Error;

use crate::cluster::{Cluster, ClusterConfig, SimError};
use crate::isa::Program;
use crate::metrics::{fnv1a64, ConfigEcho, EnergyModel, EnergyReport, MetricsError, RunStats, SCHEMA_VERSION};
use crate::workloads::{
    generate_kernel, generate_mixed, generate_scalar_workload, verify_region, Expected, KernelSpec, Mismatch,
    MixedLayout, Region, ScalarWorkloadSpec, WorkloadError,
};

pub const DEFAULT_MAX_CYCLES: u64 = 50_000_000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{what}: {mismatch}")]
    Mismatch { what: String, mismatch: Mismatch },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Settings shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub cluster: ClusterConfig,
    pub energy: EnergyModel,
    pub max_cycles: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { cluster: ClusterConfig::default(), energy: EnergyModel::default(), max_cycles: DEFAULT_MAX_CYCLES }
    }
}

impl RunOptions {
    pub fn echo(&self, workload: String, mode: &str, seed: u64) -> ConfigEcho {
        let c = &self.cluster;
        ConfigEcho {
            workload,
            mode: mode.to_string(),
            seed,
            vlen: c.vector.vlen,
            nlanes: c.vector.nlanes,
            nports: c.vector.nports,
            n_banks: c.n_banks,
            scratchpad_bytes: c.scratchpad_bytes,
            offload_depth: c.vector.queue_depth,
            modeswitch_latency: c.modeswitch_latency,
            max_cycles: self.max_cycles,
        }
    }
}

/// Bytes of `regions`, concatenated.
fn region_bytes(cluster: &Cluster, regions: &[Region]) -> Vec<u8> {
    regions.iter().flat_map(|r| cluster.mem.bytes(r.addr, r.bytes())).collect()
}

/// A finished simulation and its report.
#[derive(Debug)]
pub struct Finished {
    pub stats: RunStats,
    pub cluster: Cluster,
}

/// Runs `program` to completion; the checksum covers `outputs` in order.
pub fn run_program(
    program: Program,
    outputs: &[Region],
    echo: ConfigEcho,
    opts: &RunOptions,
    trace: Option<Box<dyn Write + Send>>,
) -> Result<Finished, SimError> {
    let mut cluster = Cluster::new(opts.cluster, program)?;
    if let Some(t) = trace {
        cluster.set_trace(t);
    }
    let end = cluster.run_to_halt(opts.max_cycles)?;
    let stats = RunStats {
        schema_version: SCHEMA_VERSION,
        cycles: end.cycles,
        timeout: end.timeout,
        checksum: fnv1a64(&region_bytes(&cluster, outputs)),
        energy: EnergyReport::new(&cluster.counters, &opts.energy),
        counters: cluster.counters,
        config: echo,
    };
    Ok(Finished { stats, cluster })
}

fn check(cluster: &Cluster, region: Region, expected: &Expected, what: &str) -> Result<(), ExperimentError> {
    verify_region(&cluster.mem, region, expected)
        .map_err(|mismatch| ExperimentError::Mismatch { what: what.to_string(), mismatch })
}

/// Generates, runs and verifies one kernel. A timeout is reported in the
/// stats, not as an error, and skips verification.
pub fn run_kernel(
    spec: &KernelSpec,
    opts: &RunOptions,
    trace: Option<Box<dyn Write + Send>>,
) -> Result<Finished, ExperimentError> {
    let generated = generate_kernel(spec, &opts.cluster)?;
    let echo = opts.echo(spec.label(), spec.variant.name(), spec.seed);
    let done = run_program(generated.program.clone(), &[generated.output], echo, opts, trace)?;
    if !done.stats.timeout {
        check(&done.cluster, generated.output, &generated.expected, &spec.label())?;
    }
    Ok(done)
}

/// Runs the scalar workload alone on core 0.
pub fn run_scalar(spec: &ScalarWorkloadSpec, opts: &RunOptions) -> Result<Finished, ExperimentError> {
    let w = generate_scalar_workload(spec, &opts.cluster)?;
    let echo = opts.echo(format!("scalar iterations={}", spec.iterations), "split", spec.seed);
    let done = run_program(w.program.clone(), &[w.output], echo, opts, None)?;
    if !done.stats.timeout {
        check(&done.cluster, w.output, &w.expected, "scalar workload")?;
    }
    Ok(done)
}

/// Runs one layout of a mixed workload, verifying both results.
pub fn run_mixed_layout(
    kernel: &KernelSpec,
    scalar: &ScalarWorkloadSpec,
    layout: MixedLayout,
    opts: &RunOptions,
    trace: Option<Box<dyn Write + Send>>,
) -> Result<Finished, ExperimentError> {
    let mixed = generate_mixed(kernel, scalar, layout, &opts.cluster)?;
    let label = format!("{} + scalar iterations={}", kernel.label(), scalar.iterations);
    let echo = opts.echo(label, layout.name(), kernel.seed);
    let outputs = [mixed.kernel_output, mixed.scalar_output];
    let done = run_program(mixed.program, &outputs, echo, opts, trace)?;
    if !done.stats.timeout {
        check(&done.cluster, mixed.kernel_output, &mixed.kernel_expected, &kernel.label())?;
        check(&done.cluster, mixed.scalar_output, &mixed.scalar_expected, "scalar workload")?;
    }
    Ok(done)
}

/// Iteration count whose standalone scalar time is closest to `target` cycles.
///
/// Scalar time is affine in the iteration count, so two calibration runs
/// determine it exactly.
pub fn balance_iterations(
    scalar: &ScalarWorkloadSpec,
    target: u64,
    opts: &RunOptions,
) -> Result<u32, ExperimentError> {
    let t1 = run_scalar(&scalar.clone().with_iterations(1), opts)?.stats.cycles;
    let t2 = run_scalar(&scalar.clone().with_iterations(2), opts)?.stats.cycles;
    let per_iter = t2.saturating_sub(t1).max(1);
    let fixed = t1.saturating_sub(per_iter);
    let iters = (target.saturating_sub(fixed) as f64 / per_iter as f64).round();
    Ok(iters.clamp(0.0, f64::from(u32::MAX)) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{KernelKind, Variant};

    #[test]
    fn axpy_split_checksum_matches_oracle() {
        let spec = KernelSpec::new(KernelKind::Axpy).with_n(64);
        let opts = RunOptions::default();
        let done = run_kernel(&spec, &opts, None).unwrap();
        let g = generate_kernel(&spec, &opts.cluster).unwrap();
        assert_eq!(done.stats.checksum, g.expected.checksum());
        assert!(!done.stats.timeout);
    }

    #[test]
    fn timeout_skips_verification() {
        let spec = KernelSpec::new(KernelKind::Axpy).with_n(64);
        let opts = RunOptions { max_cycles: 10, ..RunOptions::default() };
        let done = run_kernel(&spec, &opts, None).unwrap();
        assert!(done.stats.timeout);
        assert_eq!(done.stats.cycles, 10);
    }

    #[test]
    fn scalar_time_is_affine_in_iterations() {
        let opts = RunOptions::default();
        let spec = ScalarWorkloadSpec::default();
        let t: Vec<u64> = (0..4).map(|i| run_scalar(&spec.clone().with_iterations(i), &opts).unwrap().stats.cycles).collect();
        assert_eq!(t[2] - t[1], t[1] - t[0]);
        assert_eq!(t[3] - t[2], t[1] - t[0]);
        let iters = balance_iterations(&spec, t[3], &opts).unwrap();
        assert_eq!(iters, 3);
    }

    #[test]
    fn mixed_layouts_agree_functionally() {
        let opts = RunOptions::default();
        let kernel = KernelSpec::new(KernelKind::Axpy).with_n(2048).with_variant(Variant::SplitDual);
        let scalar = ScalarWorkloadSpec::default().with_iterations(0);
        let split = run_mixed_layout(&kernel, &scalar, MixedLayout::Split, &opts, None).unwrap();
        let merge = run_mixed_layout(&kernel, &scalar, MixedLayout::Merge, &opts, None).unwrap();
        assert_eq!(split.stats.checksum, merge.stats.checksum);
        assert!(merge.stats.cycles < split.stats.cycles);
    }
}
