//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use vcluster::cluster::ClusterConfig;
use vcluster::experiment::DEFAULT_MAX_CYCLES;
use vcluster::metrics::{EnergyModel, EnergyWeights, ReportFormat};
use vcluster::vector::VectorConfig;
use vcluster::workloads::{DType, KernelKind, KernelSpec, ScalarWorkloadSpec};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub cluster: ClusterSection,
    pub energy: EnergyWeights,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub vlen: u32,
    pub nlanes: u32,
    pub nports: u32,
    pub n_banks: u32,
    pub scratchpad_bytes: u32,
    pub offload_depth: usize,
    pub modeswitch_latency: u64,
    /// Poison unit 1's registers when it changes owner.
    pub debug_vrf: bool,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let c = ClusterConfig::default();
        ClusterSection {
            vlen: c.vector.vlen,
            nlanes: c.vector.nlanes,
            nports: c.vector.nports,
            n_banks: c.n_banks,
            scratchpad_bytes: c.scratchpad_bytes,
            offload_depth: c.vector.queue_depth,
            modeswitch_latency: c.modeswitch_latency,
            debug_vrf: c.debug_vrf,
        }
    }
}

impl ClusterSection {
    pub fn to_cluster(&self) -> Result<ClusterConfig, CliError> {
        let c = ClusterConfig {
            vector: VectorConfig {
                vlen: self.vlen,
                nlanes: self.nlanes,
                nports: self.nports,
                queue_depth: self.offload_depth,
            },
            n_banks: self.n_banks,
            scratchpad_bytes: self.scratchpad_bytes,
            modeswitch_latency: self.modeswitch_latency,
            debug_vrf: self.debug_vrf,
        };
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Kernel for `run` and `mixed`.
    pub kernel: Option<KernelKind>,
    /// Kernels for `sweep`; all six when empty.
    pub kernels: Vec<KernelKind>,
    /// Assembly program for `run`, relative to the config file.
    pub asm: Option<PathBuf>,
    pub n: Option<u32>,
    pub m: Option<u32>,
    pub k: Option<u32>,
    pub taps: Option<u32>,
    pub dtype: Option<DType>,
    pub mode: Option<String>,
    pub modes: Vec<String>,
    pub seed: u64,
    pub max_cycles: u64,
    /// Scalar task for `mixed`.
    pub scalar: ScalarWorkloadSpec,
    /// Pick the scalar iteration count so its time matches the split-dual kernel time.
    pub balance: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            kernel: None,
            kernels: Vec::new(),
            asm: None,
            n: None,
            m: None,
            k: None,
            taps: None,
            dtype: None,
            mode: None,
            modes: Vec::new(),
            seed: 1,
            max_cycles: DEFAULT_MAX_CYCLES,
            scalar: ScalarWorkloadSpec::default(),
            balance: true,
        }
    }
}

impl ExperimentSection {
    /// Kernel spec for `kind` with this section's size overrides.
    pub fn kernel_spec(&self, kind: KernelKind) -> KernelSpec {
        let mut s = KernelSpec::new(kind).with_seed(self.seed);
        if let Some(n) = self.n {
            s.n = n;
        }
        if let Some(m) = self.m {
            s.m = m;
        }
        if let Some(k) = self.k {
            s.k = k;
        }
        if let Some(t) = self.taps {
            s.taps = t;
        }
        if let Some(d) = self.dtype {
            s.dtype = d;
        }
        s
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub format: ReportFormat,
    pub path: Option<PathBuf>,
    pub trace: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { format: ReportFormat::Json, path: None, trace: false }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Loads `path`; relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = Config::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let (Some(asm), Some(dir)) = (&config.experiment.asm, path.parent()) {
            config.experiment.asm = Some(dir.join(asm));
        }
        Ok(config)
    }

    pub fn energy_model(&self) -> Result<EnergyModel, CliError> {
        EnergyModel::new(self.energy).map_err(|e| CliError::Config(e.to_string()))
    }
}
