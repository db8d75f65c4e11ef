//! Benchmark programs and their host-side reference results.
//!
//! Every kernel is strip-mined with `vsetvli` and emitted as assembly text,
//! then assembled; input data is attached to the program image directly.
//! All vector instructions sit inside strip loops, so the merge-mode vector
//! fetch count is exactly half the single-core split-mode count.

mod kernels;
mod mixed;
pub mod oracle;
mod scalar;

pub use mixed::{generate_mixed, MixedLayout, MixedProgram};
pub use scalar::{generate_scalar_workload, ScalarComponents, ScalarWorkload, ScalarWorkloadSpec};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{ClusterConfig, Scratchpad};
use crate::isa::{AsmError, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Axpy,
    Dotp,
    Matmul,
    Fir,
    Relu,
    Fft,
}

impl KernelKind {
    pub const ALL: [KernelKind; 6] =
        [KernelKind::Axpy, KernelKind::Dotp, KernelKind::Matmul, KernelKind::Fir, KernelKind::Relu, KernelKind::Fft];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Axpy => "axpy",
            KernelKind::Dotp => "dotp",
            KernelKind::Matmul => "matmul",
            KernelKind::Fir => "fir",
            KernelKind::Relu => "relu",
            KernelKind::Fft => "fft",
        }
    }

    /// Data type used when none is given.
    pub fn default_dtype(self) -> DType {
        match self {
            KernelKind::Axpy | KernelKind::Matmul | KernelKind::Fft => DType::F32,
            KernelKind::Dotp | KernelKind::Fir | KernelKind::Relu => DType::I32,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| WorkloadError::Invalid(format!("unknown kernel '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    #[serde(rename = "int32", alias = "i32")]
    I32,
    #[serde(rename = "fp32", alias = "f32")]
    F32,
}

impl DType {
    pub fn name(self) -> &'static str {
        match self {
            DType::I32 => "int32",
            DType::F32 => "fp32",
        }
    }
}

/// How a kernel is laid out over the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Core 0 runs the whole kernel on its own unit; core 1 halts.
    SplitSingle,
    /// Each core processes half of the data on its own unit, with barriers.
    SplitDual,
    /// Core 0 drives both units; core 1 halts.
    Merge,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SplitSingle, Variant::SplitDual, Variant::Merge];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SplitSingle => "split-single",
            Variant::SplitDual => "split-dual",
            Variant::Merge => "merge",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = WorkloadError;

    /// `split` is accepted as shorthand for `split-dual`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "split" | "split-dual" => Ok(Variant::SplitDual),
            "split-single" => Ok(Variant::SplitSingle),
            "merge" => Ok(Variant::Merge),
            _ => Err(WorkloadError::Invalid(format!("unknown mode '{s}' (split, split-single, merge)"))),
        }
    }
}

/// Problem description of one kernel run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Element count; output columns for matmul.
    pub n: u32,
    /// Matmul inner dimension.
    pub k: u32,
    /// Matmul output rows.
    pub m: u32,
    pub taps: u32,
    pub dtype: DType,
    pub variant: Variant,
    pub seed: u64,
}

impl KernelSpec {
    /// Default problem size for `kind`.
    pub fn new(kind: KernelKind) -> Self {
        let n = match kind {
            KernelKind::Matmul => 64,
            KernelKind::Fft => 1024,
            _ => 4096,
        };
        KernelSpec { kind, n, k: 64, m: 64, taps: 16, dtype: kind.default_dtype(), variant: Variant::SplitSingle, seed: 1 }
    }

    pub fn with_n(mut self, n: u32) -> Self {
        self.n = n;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dtype(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::Invalid(m));
        match self.kind {
            KernelKind::Fft => {
                if self.dtype != DType::F32 {
                    return bad("fft requires fp32".into());
                }
                if !self.n.is_power_of_two() || self.n < 2 {
                    return bad(format!("fft size {} must be a power of two >= 2", self.n));
                }
            }
            KernelKind::Fir if self.taps == 0 => return bad("fir needs at least one tap".into()),
            _ => {}
        }
        Ok(())
    }

    /// Short human-readable label, e.g. `axpy n=4096 fp32`.
    pub fn label(&self) -> String {
        match self.kind {
            KernelKind::Matmul => format!("matmul m={} k={} n={} {}", self.m, self.k, self.n, self.dtype.name()),
            KernelKind::Fir => format!("fir n={} taps={} {}", self.n, self.taps, self.dtype.name()),
            _ => format!("{} n={} {}", self.kind, self.n, self.dtype.name()),
        }
    }
}

/// A byte range `[addr, addr + 4 * words)` of the scratchpad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub addr: u32,
    pub words: u32,
}

impl Region {
    pub fn bytes(&self) -> u32 {
        4 * self.words
    }

    pub fn end(&self) -> u32 {
        self.addr + self.bytes()
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.words > 0 && other.words > 0 && self.addr < other.end() && other.addr < self.end()
    }
}

/// Reference contents of an output region.
#[derive(Debug, Clone, PartialEq)]
pub enum Expected {
    /// Must match bit for bit.
    Exact(Vec<u32>),
    /// Elementwise `|got - want| <= rel_tol * |want|`.
    Approx { values: Vec<f32>, rel_tol: f32 },
}

impl Expected {
    pub fn len(&self) -> usize {
        match self {
            Expected::Exact(v) => v.len(),
            Expected::Approx { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checksum the output region would have if it matched exactly.
    pub fn checksum(&self) -> u64 {
        let words: Vec<u32> = match self {
            Expected::Exact(v) => v.clone(),
            Expected::Approx { values, .. } => values.iter().map(|f| f.to_bits()).collect(),
        };
        crate::metrics::fnv1a64(&words.iter().flat_map(|w| w.to_le_bytes()).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("output mismatch at element {index}: got {got}, expected {want}")]
pub struct Mismatch {
    pub index: usize,
    pub got: String,
    pub want: String,
}

/// Relative tolerance for fp32 outputs.
pub const FP_REL_TOL: f32 = 1e-5;

/// A generated program with the location and oracle of its result.
#[derive(Debug, Clone)]
pub struct Generated {
    pub program: Program,
    pub output: Region,
    pub expected: Expected,
    /// Highest byte address used by the image, code data included.
    pub footprint: u32,
}

impl Generated {
    /// Compares the output region of `mem` with the oracle.
    pub fn verify(&self, mem: &Scratchpad) -> Result<(), Mismatch> {
        verify_region(mem, self.output, &self.expected)
    }
}

pub fn verify_region(mem: &Scratchpad, region: Region, expected: &Expected) -> Result<(), Mismatch> {
    let start = region.addr as usize / 4;
    let got = &mem.words()[start..start + region.words as usize];
    match expected {
        Expected::Exact(want) => match got.iter().zip(want).position(|(g, w)| g != w) {
            Some(i) => Err(Mismatch { index: i, got: format!("{:#x}", got[i]), want: format!("{:#x}", want[i]) }),
            None => Ok(()),
        },
        Expected::Approx { values, rel_tol } => {
            for (i, (&g, &w)) in got.iter().zip(values).enumerate() {
                let g = f32::from_bits(g);
                let ok = g == w || (g - w).abs() <= rel_tol * w.abs();
                if !ok {
                    return Err(Mismatch { index: i, got: g.to_string(), want: w.to_string() });
                }
            }
            Ok(())
        }
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("workload needs {required} bytes of scratchpad, only {available} available")]
    TooLarge { required: u64, available: u32 },
    #[error("kernel region [{kernel_start:#x}, {kernel_end:#x}) overlaps scalar region [{scalar_start:#x}, {scalar_end:#x})")]
    Overlap { kernel_start: u32, kernel_end: u32, scalar_start: u32, scalar_end: u32 },
    #[error("generated assembly failed to assemble: {0}")]
    Asm(#[from] AsmError),
}

/// Bump allocator for scratchpad regions, aligned to whole bank rows.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    next: u64,
    limit: u32,
}

impl Layout {
    const ALIGN: u64 = 64;

    pub(crate) fn new(base: u32, limit: u32) -> Self {
        Layout { next: u64::from(base), limit }
    }

    pub(crate) fn alloc(&mut self, words: u32) -> Region {
        let addr = self.next.next_multiple_of(Self::ALIGN);
        self.next = addr + 4 * u64::from(words);
        // Out-of-range addresses are caught by `finish`.
        Region { addr: addr.min(u64::from(u32::MAX)) as u32, words }
    }

    pub(crate) fn finish(&self) -> Result<u32, WorkloadError> {
        if self.next > u64::from(self.limit) {
            return Err(WorkloadError::TooLarge { required: self.next, available: self.limit });
        }
        Ok(self.next as u32)
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generates the program, input image and oracle of `spec`.
pub fn generate_kernel(spec: &KernelSpec, config: &ClusterConfig) -> Result<Generated, WorkloadError> {
    spec.validate()?;
    kernels::generate(spec, config)
}
