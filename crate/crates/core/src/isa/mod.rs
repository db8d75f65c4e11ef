//! Scalar + vector instruction subset and its textual assembly form.
//!
//! Programs are lists of decoded [`Instr`]s addressed by instruction index;
//! there is no binary encoding. Branch and jump targets are instruction
//! indices, data lives in a word-addressed initial memory image.

mod asm;
mod opcode;

pub use asm::{assemble, assemble_with, disassemble, AsmError, AsmErrorKind, AsmOptions};
pub use opcode::{OpClass, Opcode, Operand};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Number of registers in each architectural register file.
pub const NUM_REGS: usize = 32;

/// Default scratchpad size used when assembling without explicit options.
pub const DEFAULT_SCRATCHPAD_BYTES: u32 = 128 * 1024;

/// Target of a `modeswitch` instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeTarget {
    Split,
    Merge { driver: u8 },
}

impl ModeTarget {
    pub(crate) fn to_imm(self) -> i32 {
        match self {
            ModeTarget::Split => -1,
            ModeTarget::Merge { driver } => i32::from(driver),
        }
    }

    pub(crate) fn from_imm(imm: i32) -> Self {
        if imm < 0 {
            ModeTarget::Split
        } else {
            ModeTarget::Merge { driver: imm as u8 }
        }
    }
}

/// One decoded instruction.
///
/// Register slots are interpreted according to the opcode's operand syntax
/// (see [`Opcode::operands`]); unused slots are zero. `imm` carries the
/// immediate, memory offset, vector stride, resolved branch target index or
/// the `modeswitch` target, depending on the opcode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instr {
    pub op: Opcode,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i32,
}

impl Instr {
    pub fn new(op: Opcode) -> Self {
        Instr { op, rd: 0, rs1: 0, rs2: 0, imm: 0 }
    }

    pub fn is_vector(&self) -> bool {
        self.op.class() == OpClass::Vector
    }

    /// Resolved branch/jump target for control-flow instructions with a label operand.
    pub fn target(&self) -> Option<usize> {
        self.op
            .operands()
            .contains(&Operand::Label)
            .then_some(self.imm as usize)
    }

    pub fn mode_target(&self) -> Option<ModeTarget> {
        (self.op == Opcode::ModeSwitch).then(|| ModeTarget::from_imm(self.imm))
    }
}

/// Contiguous run of initial memory words starting at a byte address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataChunk {
    pub addr: u32,
    pub words: Vec<u32>,
}

impl DataChunk {
    pub fn end(&self) -> u64 {
        u64::from(self.addr) + 4 * self.words.len() as u64
    }
}

/// An assembled program shared by both cores.
///
/// Each core starts at its own entry index; a core without an entry starts
/// halted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub instrs: Vec<Instr>,
    pub data: Vec<DataChunk>,
    pub entries: [Option<usize>; 2],
    pub symbols: BTreeMap<String, usize>,
}

impl Program {
    /// Structural equality ignoring label names.
    pub fn same_code(&self, other: &Program) -> bool {
        self.instrs == other.instrs && self.data == other.data && self.entries == other.entries
    }

    /// Appends a data chunk, extending the previous one when contiguous.
    pub fn push_data(&mut self, addr: u32, words: Vec<u32>) {
        match self.data.last_mut() {
            Some(last) if last.end() == u64::from(addr) => last.words.extend(words),
            _ => self.data.push(DataChunk { addr, words }),
        }
    }

    pub fn data_end(&self) -> u64 {
        self.data.iter().map(DataChunk::end).max().unwrap_or(0)
    }
}
