//! Scalar control workload: linked-list walk, bitwise CRC-16 and a
//! table-driven 16-state machine, repeated for a number of iterations.
//!
//! The output region holds `[chk, crc, count, sum, state]`. `chk` starts at
//! the machine's initial state and is updated once per iteration as
//! `chk = (chk * 33) ^ (sum + count + crc + state)`.

use std::fmt::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{oracle, Expected, Layout, Region, WorkloadError};
use crate::cluster::ClusterConfig;
use crate::isa::{assemble, Program};

/// Initial state of the state machine, also the initial checksum.
pub const FSM_INITIAL_STATE: u32 = 3;

const FSM_STATES: u32 = 16;
const FSM_SYMBOLS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalarComponents {
    pub list: bool,
    pub crc: bool,
    pub fsm: bool,
}

impl Default for ScalarComponents {
    fn default() -> Self {
        ScalarComponents { list: true, crc: true, fsm: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalarWorkloadSpec {
    pub iterations: u32,
    pub components: ScalarComponents,
    pub list_len: u32,
    /// CRC input; random bytes of `crc_len` when absent.
    pub crc_message: Option<Vec<u8>>,
    pub crc_len: u32,
    pub fsm_inputs: u32,
    pub seed: u64,
    /// Byte address of the workload's data; placed after the kernel when absent.
    pub base: Option<u32>,
}

impl Default for ScalarWorkloadSpec {
    fn default() -> Self {
        ScalarWorkloadSpec {
            iterations: 1,
            components: ScalarComponents::default(),
            list_len: 16,
            crc_message: None,
            crc_len: 16,
            fsm_inputs: 32,
            seed: 1,
            base: None,
        }
    }
}

impl ScalarWorkloadSpec {
    pub fn with_iterations(mut self, iterations: u32) -> Self {
        self.iterations = iterations;
        self
    }
}

/// Generated scalar workload.
#[derive(Debug, Clone)]
pub struct ScalarWorkload {
    pub program: Program,
    pub output: Region,
    pub expected: Expected,
    /// Every byte the workload reads or writes.
    pub region: Region,
}

impl ScalarWorkload {
    /// Expected final checksum register value.
    pub fn checksum(&self) -> u32 {
        match &self.expected {
            Expected::Exact(w) => w[0],
            Expected::Approx { .. } => unreachable!("scalar results are integers"),
        }
    }
}

/// Code, data and oracle before assembly, so the workload can share a
/// program with a kernel.
pub(crate) struct ScalarParts {
    pub code: String,
    pub chunks: Vec<(Region, Vec<u32>)>,
    pub output: Region,
    pub expected: Vec<u32>,
    pub region: Region,
}

struct Inputs {
    values: Vec<u32>,
    message: Vec<u8>,
    table: Vec<u32>,
    symbols: Vec<u32>,
}

fn inputs(spec: &ScalarWorkloadSpec) -> Inputs {
    let mut rng = super::rng(spec.seed ^ 0x5ca1_ab1e);
    let values = (0..spec.list_len).map(|_| rng.gen_range(0..1000)).collect();
    let message = match &spec.crc_message {
        Some(m) => m.clone(),
        None => (0..spec.crc_len).map(|_| rng.gen()).collect(),
    };
    let table = (0..FSM_STATES * FSM_SYMBOLS).map(|_| rng.gen_range(0..FSM_STATES)).collect();
    let symbols = (0..spec.fsm_inputs).map(|_| rng.gen_range(0..FSM_SYMBOLS)).collect();
    Inputs { values, message, table, symbols }
}

/// Direct evaluation of the workload: `[chk, crc, count, sum, state]`.
fn evaluate(spec: &ScalarWorkloadSpec, inp: &Inputs) -> Vec<u32> {
    let on = spec.components;
    let (mut chk, mut crc, mut count, mut sum, mut state) = (FSM_INITIAL_STATE, 0u32, 0u32, 0u32, FSM_INITIAL_STATE);
    for _ in 0..spec.iterations {
        if on.list {
            sum = inp.values.iter().fold(0u32, |a, &v| a.wrapping_add(v));
            count = inp.values.len() as u32;
        }
        if on.crc {
            crc = u32::from(oracle::crc16(0, &inp.message));
        }
        if on.fsm {
            state = inp.symbols.iter().fold(FSM_INITIAL_STATE, |s, &sym| inp.table[(s * FSM_SYMBOLS + sym) as usize]);
        }
        let mix = sum.wrapping_add(count).wrapping_add(crc).wrapping_add(state);
        chk = chk.wrapping_mul(33) ^ mix;
    }
    vec![chk, crc, count, sum, state]
}

pub(crate) fn scalar_parts(spec: &ScalarWorkloadSpec, base: u32, limit: u32) -> Result<ScalarParts, WorkloadError> {
    let inp = inputs(spec);
    let mut lay = Layout::new(base, limit);
    let start = base.next_multiple_of(64);
    // Output first, so no list node sits at address 0 (the null pointer).
    let output = lay.alloc(5);
    let list = lay.alloc(2 * spec.list_len);
    let msg = lay.alloc(inp.message.len() as u32);
    let table = lay.alloc(FSM_STATES * FSM_SYMBOLS);
    let symbols = lay.alloc(spec.fsm_inputs);
    let end = lay.finish()?;

    // Nodes are `[value, next]`, linked in address order; next = 0 ends the list.
    let nodes: Vec<u32> = (0..spec.list_len)
        .flat_map(|i| {
            let next = if i + 1 < spec.list_len { list.addr + 8 * (i + 1) } else { 0 };
            [inp.values[i as usize], next]
        })
        .collect();
    let head = if spec.list_len == 0 { 0 } else { list.addr };

    let on = spec.components;
    let mut s = String::new();
    let _ = writeln!(s, "li x28, {}\nli x29, {FSM_INITIAL_STATE}", spec.iterations);
    let _ = writeln!(s, "li x20, 0\nli x21, 0\nli x22, 0\nli x30, {FSM_INITIAL_STATE}");
    s.push_str("s_iter:\nbeq x28, x0, s_end\n");
    if on.list {
        let _ = writeln!(s, "li x20, 0\nli x21, 0\nli x11, {head}");
        s.push_str(
            "s_list:\nbeq x11, x0, s_list_done\nlw x12, 0(x11)\nadd x20, x20, x12\naddi x21, x21, 1\n\
             lw x11, 4(x11)\njal x0, s_list\ns_list_done:\n",
        );
    }
    if on.crc {
        let _ = writeln!(s, "li x22, 0\nli x11, {}\nli x13, {}", msg.addr, inp.message.len());
        // Shifting first and testing bit 16 lets one xor with 0x18005 both
        // apply the polynomial and drop the carried-out bit.
        s.push_str(
            "li x14, 0x10000\nli x15, 0x18005\nbeq x13, x0, s_crc_done\n\
             s_crc_byte:\nlw x12, 0(x11)\nslli x12, x12, 8\nxor x22, x22, x12\nli x16, 8\n\
             s_crc_bit:\nslli x22, x22, 1\nand x17, x22, x14\nbeq x17, x0, s_crc_skip\nxor x22, x22, x15\n\
             s_crc_skip:\naddi x16, x16, -1\nbne x16, x0, s_crc_bit\n\
             addi x11, x11, 4\naddi x13, x13, -1\nbne x13, x0, s_crc_byte\ns_crc_done:\n",
        );
    }
    if on.fsm {
        let _ = writeln!(s, "li x30, {FSM_INITIAL_STATE}\nli x11, {}\nli x13, {}", symbols.addr, spec.fsm_inputs);
        let _ = writeln!(s, "li x14, {}", table.addr);
        s.push_str(
            "beq x13, x0, s_fsm_done\n\
             s_fsm:\nlw x12, 0(x11)\nslli x16, x30, 4\nadd x16, x16, x12\nslli x16, x16, 2\nadd x16, x16, x14\n\
             lw x30, 0(x16)\naddi x11, x11, 4\naddi x13, x13, -1\nbne x13, x0, s_fsm\ns_fsm_done:\n",
        );
    }
    s.push_str(
        "li x17, 33\nmul x29, x29, x17\nadd x18, x20, x21\nadd x18, x18, x22\nadd x18, x18, x30\n\
         xor x29, x29, x18\naddi x28, x28, -1\njal x0, s_iter\ns_end:\n",
    );
    let _ = writeln!(s, "li x11, {}", output.addr);
    s.push_str("sw x29, 0(x11)\nsw x22, 4(x11)\nsw x21, 8(x11)\nsw x20, 12(x11)\nsw x30, 16(x11)\n");

    let chunks = vec![
        (list, nodes),
        (msg, inp.message.iter().map(|&b| u32::from(b)).collect()),
        (table, inp.table.clone()),
        (symbols, inp.symbols.clone()),
    ];
    Ok(ScalarParts {
        code: s,
        chunks,
        output,
        expected: evaluate(spec, &inp),
        region: Region { addr: start, words: (end - start) / 4 },
    })
}

/// Generates a standalone scalar workload running on core 0.
pub fn generate_scalar_workload(spec: &ScalarWorkloadSpec, config: &ClusterConfig) -> Result<ScalarWorkload, WorkloadError> {
    let parts = scalar_parts(spec, spec.base.unwrap_or(0), config.scratchpad_bytes)?;
    let mut program = assemble(&format!("{}halt\n", parts.code))?;
    for (region, words) in parts.chunks {
        program.push_data(region.addr, words);
    }
    Ok(ScalarWorkload { program, output: parts.output, expected: Expected::Exact(parts.expected), region: parts.region })
}
