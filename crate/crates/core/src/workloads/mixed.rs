//! Kernel plus scalar workload sharing the cluster.
//!
//! In the split layout core 0 runs the kernel on its own vector unit while
//! core 1 runs the scalar workload and leaves its unit idle. In the merge
//! layout core 0 first takes over both units.

use serde::{Deserialize, Serialize};

use super::kernels::{build, wrap};
use super::scalar::scalar_parts;
use super::{Expected, KernelSpec, Layout, Region, ScalarWorkloadSpec, Variant, WorkloadError};
use crate::cluster::ClusterConfig;
use crate::isa::{assemble, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixedLayout {
    Split,
    Merge,
}

impl MixedLayout {
    pub fn name(self) -> &'static str {
        match self {
            MixedLayout::Split => "split",
            MixedLayout::Merge => "merge",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixedProgram {
    pub program: Program,
    pub kernel_output: Region,
    pub kernel_expected: Expected,
    pub scalar_output: Region,
    pub scalar_expected: Expected,
    /// Bytes used by the kernel, from address 0.
    pub kernel_region: Region,
    pub scalar_region: Region,
}

/// Builds the two-core program for `layout`. The kernel variant in `kernel`
/// is ignored; the layout decides it. An empty kernel skips the mode switch,
/// so both layouts then run the same program.
pub fn generate_mixed(
    kernel: &KernelSpec,
    scalar: &ScalarWorkloadSpec,
    layout: MixedLayout,
    config: &ClusterConfig,
) -> Result<MixedProgram, WorkloadError> {
    let variant = match layout {
        MixedLayout::Split => Variant::SplitSingle,
        MixedLayout::Merge => Variant::Merge,
    };
    let spec = KernelSpec { variant, ..kernel.clone() };
    spec.validate()?;
    let mut lay = Layout::new(0, config.scratchpad_bytes);
    let (image, bodies) = build(&spec, config, &mut lay);
    let kernel_end = lay.finish()?;
    let kernel_region = Region { addr: 0, words: kernel_end.div_ceil(4) };

    let base = scalar.base.unwrap_or(kernel_end);
    let sp = scalar_parts(scalar, base, config.scratchpad_bytes)?;
    if kernel_region.overlaps(&sp.region) {
        return Err(WorkloadError::Overlap {
            kernel_start: kernel_region.addr,
            kernel_end: kernel_region.end(),
            scalar_start: sp.region.addr,
            scalar_end: sp.region.end(),
        });
    }

    let empty = spec.n == 0 || spec.m == 0 && spec.kind == super::KernelKind::Matmul;
    let merge = layout == MixedLayout::Merge && !empty;
    let core0 = bodies.into_iter().next().unwrap_or_default();
    let mut program = assemble(&wrap(merge, &[core0, sp.code]))?;
    for (region, words) in image.chunks.into_iter().chain(sp.chunks) {
        program.push_data(region.addr, words);
    }
    Ok(MixedProgram {
        program,
        kernel_output: image.output,
        kernel_expected: image.expected,
        scalar_output: sp.output,
        scalar_expected: Expected::Exact(sp.expected),
        kernel_region,
        scalar_region: sp.region,
    })
}
