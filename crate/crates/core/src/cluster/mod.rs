//! The dual-core cluster: two scalar cores, two vector units, a banked
//! scratchpad, the mode controller and the cycle-stepped event loop.
//!
//! Each cycle runs in a fixed order:
//!
//! 1. idle vector units pull their next queued instruction;
//! 2. scalar memory instructions and in-flight vector memory instructions
//!    post bank requests, which the scratchpad arbitrates;
//! 3. core 0 then core 1 fetch and execute at most one instruction;
//! 4. vector units advance;
//! 5. the barrier is released if every running core waits on it.
//!
//! Vector instructions are executed functionally at dispatch, in program
//! order; the units then model only occupancy and memory contention.

mod mode;
mod scratchpad;

pub use mode::{Mode, ModeController};
pub use scratchpad::{BankRequest, Scratchpad};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Instr, Opcode, Program, NUM_REGS};
use crate::metrics::{EventCounts, PerfCounters};
use crate::vector::{self, ScalarOperands, VType, VectorConfig, VectorFault, VectorUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub vector: VectorConfig,
    pub n_banks: u32,
    pub scratchpad_bytes: u32,
    pub modeswitch_latency: u64,
    /// Fault on reads of vector registers invalidated by a mode switch.
    pub debug_vrf: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            vector: VectorConfig::default(),
            n_banks: 8,
            scratchpad_bytes: 128 * 1024,
            modeswitch_latency: 4,
            debug_vrf: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid cluster configuration: {0}")]
pub struct ConfigError(pub String);

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = &self.vector;
        let bad = |m: String| Err(ConfigError(m));
        if !v.vlen.is_power_of_two() || v.vlen < vector::SEW {
            return bad(format!("vlen {} must be a power of two >= {}", v.vlen, vector::SEW));
        }
        if !self.n_banks.is_power_of_two() {
            return bad(format!("n_banks {} must be a power of two", self.n_banks));
        }
        if v.nlanes == 0 || v.nports == 0 || v.queue_depth == 0 {
            return bad("nlanes, nports and offload_depth must be positive".into());
        }
        if self.scratchpad_bytes == 0 || !self.scratchpad_bytes.is_multiple_of(4) {
            return bad(format!("scratchpad_bytes {} must be a positive multiple of 4", self.scratchpad_bytes));
        }
        if self.modeswitch_latency == 0 {
            return bad("modeswitch_latency must be at least 1".into());
        }
        Ok(())
    }

    pub fn vlmax(&self, mode: Mode) -> u32 {
        VType::new(self.vector.vlen, mode.is_merged()).vlmax()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoreStatus {
    Running,
    WaitingBarrier,
    StalledOffload,
    Halted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCore {
    pub id: usize,
    pub x: [u32; NUM_REGS],
    pub f: [f32; NUM_REGS],
    pub pc: usize,
    pub status: CoreStatus,
    /// Frozen by a mode switch until this cycle.
    pub frozen_until: u64,
    /// The instruction at `pc` was already fetched and is being retried.
    retrying: bool,
}

impl ScalarCore {
    fn new(id: usize, entry: Option<usize>) -> Self {
        ScalarCore {
            id,
            x: [0; NUM_REGS],
            f: [0.0; NUM_REGS],
            pc: entry.unwrap_or(0),
            status: if entry.is_some() { CoreStatus::Running } else { CoreStatus::Halted },
            frozen_until: 0,
            retrying: false,
        }
    }

    fn set_x(&mut self, reg: u8, value: u32) {
        if reg != 0 {
            self.x[usize::from(reg)] = value;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultKind {
    #[error("scalar access to {addr:#x} outside scratchpad")]
    MemOutOfRange { addr: i64 },
    #[error("misaligned scalar access to {addr:#x}")]
    Misaligned { addr: i64 },
    #[error("vector instruction on detached core")]
    DetachedVector,
    #[error("modeswitch with busy vector unit")]
    ModeswitchBusy,
    #[error("{0}")]
    Vector(VectorFault),
    #[error("pc out of program range")]
    PcOutOfRange,
    #[error("initial data does not fit the scratchpad: {0}")]
    Load(VectorFault),
}

/// A simulation fault with its location.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fault at cycle {cycle}, core {core}, pc {pc} ({instr}): {kind}")]
pub struct SimError {
    pub cycle: u64,
    pub core: usize,
    pub pc: usize,
    pub instr: String,
    pub kind: FaultKind,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunEnd {
    pub cycles: u64,
    pub timeout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stall {
    Offload,
    Fence,
    Barrier,
    Bank,
    ModeSwitch,
}

impl Stall {
    fn name(self) -> &'static str {
        match self {
            Stall::Offload => "offload",
            Stall::Fence => "fence",
            Stall::Barrier => "barrier",
            Stall::Bank => "bank",
            Stall::ModeSwitch => "modeswitch",
        }
    }
}

/// Complete architectural and microarchitectural state of the cluster.
pub struct Cluster {
    pub config: ClusterConfig,
    pub program: Program,
    pub cores: [ScalarCore; 2],
    pub vus: [VectorUnit; 2],
    pub mem: Scratchpad,
    pub mode_ctrl: ModeController,
    pub cycle: u64,
    pub counters: PerfCounters,
    trace: Option<Box<dyn Write + Send>>,
}

impl std::fmt::Debug for Cluster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cluster")
            .field("cycle", &self.cycle)
            .field("mode", &self.mode_ctrl.mode())
            .field("cores", &self.cores)
            .finish_non_exhaustive()
    }
}

impl Cluster {
    pub fn new(config: ClusterConfig, program: Program) -> Result<Self, SimError> {
        let mut mem = Scratchpad::new(config.scratchpad_bytes, config.n_banks as usize);
        for chunk in &program.data {
            mem.load_image(chunk.addr, &chunk.words).map_err(|e| SimError {
                cycle: 0,
                core: 0,
                pc: 0,
                instr: ".data".into(),
                kind: FaultKind::Load(e),
            })?;
        }
        let entry = |c: usize| program.entries[c].filter(|&e| e < program.instrs.len());
        Ok(Cluster {
            cores: [ScalarCore::new(0, entry(0)), ScalarCore::new(1, entry(1))],
            vus: [VectorUnit::new(0, &config.vector), VectorUnit::new(1, &config.vector)],
            mem,
            mode_ctrl: ModeController::default(),
            cycle: 0,
            counters: PerfCounters::default(),
            trace: None,
            config,
            program,
        })
    }

    /// Emits one trace line per active core per cycle to `out`.
    pub fn set_trace(&mut self, out: Box<dyn Write + Send>) {
        self.trace = Some(out);
    }

    pub fn mode(&self) -> Mode {
        self.mode_ctrl.mode()
    }

    pub fn vlmax(&self) -> u32 {
        self.config.vlmax(self.mode())
    }

    pub fn all_halted(&self) -> bool {
        self.cores.iter().all(|c| c.status == CoreStatus::Halted)
    }

    fn n_requesters(&self) -> usize {
        2 + 2 * self.config.vector.nports as usize
    }

    /// Steps until every core halts or `max_cycles` elapse.
    pub fn run_to_halt(&mut self, max_cycles: u64) -> Result<RunEnd, SimError> {
        while !self.all_halted() {
            if self.cycle >= max_cycles {
                return Ok(RunEnd { cycles: self.cycle, timeout: true });
            }
            self.step()?;
        }
        if let Some(t) = self.trace.as_mut() {
            let _ = t.flush();
        }
        Ok(RunEnd { cycles: self.cycle, timeout: false })
    }

    fn fault(&self, core: usize, kind: FaultKind) -> SimError {
        let pc = self.cores[core].pc;
        SimError {
            cycle: self.cycle,
            core,
            pc,
            instr: self.program.instrs.get(pc).map(|i| i.to_string()).unwrap_or_default(),
            kind,
        }
    }

    /// Core `c` may fetch this cycle.
    fn can_issue(&self, c: usize) -> bool {
        let core = &self.cores[c];
        matches!(core.status, CoreStatus::Running | CoreStatus::StalledOffload) && core.frozen_until <= self.cycle
    }

    fn scalar_addr(&self, c: usize, instr: &Instr) -> Result<u32, SimError> {
        let addr = i64::from(self.cores[c].x[usize::from(instr.rs1)] as i32) + i64::from(instr.imm);
        match self.mem.check(addr) {
            Ok(_) => Ok(addr as u32),
            Err(VectorFault::Misaligned { addr }) => Err(self.fault(c, FaultKind::Misaligned { addr })),
            Err(_) => Err(self.fault(c, FaultKind::MemOutOfRange { addr })),
        }
    }

    /// Advances the cluster by one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let vcfg = self.config.vector;
        for u in &mut self.vus {
            u.start_next(&vcfg);
        }

        // Bank requests: cores use ids 0..2, unit ports 2 + u * nports + k.
        let mut reqs = Vec::new();
        let mut core_req: [Option<usize>; 2] = [None, None];
        for c in 0..2 {
            if !self.can_issue(c) {
                continue;
            }
            let Some(instr) = self.program.instrs.get(self.cores[c].pc).copied() else {
                return Err(self.fault(c, FaultKind::PcOutOfRange));
            };
            if instr.op.is_scalar_mem() {
                let addr = self.scalar_addr(c, &instr)?;
                core_req[c] = Some(reqs.len());
                reqs.push(BankRequest { requester: c, addr });
            }
        }
        let mut unit_reqs: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
        for (u, unit) in self.vus.iter().enumerate() {
            if let Some((_, vector::InFlight::Memory { addrs, .. })) = &unit.current {
                for (k, idx) in unit.pending_accesses(vcfg.nports).into_iter().enumerate() {
                    unit_reqs[u].push((idx, reqs.len()));
                    reqs.push(BankRequest { requester: 2 + u * vcfg.nports as usize + k, addr: addrs[idx] });
                }
            }
        }
        let n_req = self.n_requesters();
        let grants = self.mem.arbitrate(&reqs, n_req);

        for c in 0..2 {
            let granted = core_req[c].map(|i| grants[i]);
            self.exec_core(c, granted)?;
        }

        for u in 0..2 {
            self.advance_unit(u, &unit_reqs[u], &grants);
        }

        self.release_barrier();
        self.cycle += 1;
        Ok(())
    }

    fn advance_unit(&mut self, u: usize, reqs: &[(usize, usize)], grants: &[bool]) {
        let counters = &mut self.counters.units[u];
        let unit = &mut self.vus[u];
        let Some((_, flight)) = unit.current.as_mut() else {
            counters.idle_cycle += 1;
            return;
        };
        counters.active_cycle += 1;
        let finished = match flight {
            vector::InFlight::Compute { remaining } => {
                *remaining -= 1;
                *remaining == 0
            }
            vector::InFlight::Memory { done, next, .. } => {
                let mut denied = false;
                for &(idx, r) in reqs {
                    if grants[r] {
                        done[idx] = true;
                        counters.tcdm_access += 1;
                    } else {
                        denied = true;
                    }
                }
                if denied {
                    counters.bank_conflict_stall += 1;
                }
                while *next < done.len() && done[*next] {
                    *next += 1;
                }
                *next == done.len()
            }
        };
        if finished {
            unit.current = None;
        }
    }

    fn release_barrier(&mut self) {
        let live: Vec<usize> = (0..2).filter(|&c| self.cores[c].status != CoreStatus::Halted).collect();
        if live.is_empty() || !live.iter().all(|&c| self.cores[c].status == CoreStatus::WaitingBarrier) {
            return;
        }
        if live.len() == 1 && self.cores[1 - live[0]].status == CoreStatus::Halted {
            log::warn!("cycle {}: core {} passed a barrier alone (other core halted)", self.cycle, live[0]);
        }
        for c in live {
            self.cores[c].status = CoreStatus::Running;
        }
    }

    fn trace_line(&mut self, c: usize, instr: Option<&Instr>, stall: Option<Stall>) {
        if let Some(out) = self.trace.as_mut() {
            let pc = self.cores[c].pc;
            let mnemonic = instr.map(|i| i.op.mnemonic()).unwrap_or("-");
            let _ = match stall {
                Some(s) => writeln!(out, "cycle={} core={} pc={} {} stall={}", self.cycle, c, pc, mnemonic, s.name()),
                None => writeln!(out, "cycle={} core={} pc={} {}", self.cycle, c, pc, mnemonic),
            };
        }
    }

    fn stall(&mut self, c: usize, instr: Option<&Instr>, why: Stall) {
        let k = &mut self.counters.cores[c];
        match why {
            Stall::Bank => {
                k.bank_conflict_stall += 1;
                k.active_cycle += 1;
            }
            Stall::Barrier => {
                k.barrier_stall_cycle += 1;
                k.idle_cycle += 1;
            }
            Stall::Offload | Stall::Fence => {
                k.offload_stall_cycle += 1;
                k.idle_cycle += 1;
            }
            Stall::ModeSwitch => k.idle_cycle += 1,
        }
        if matches!(why, Stall::Offload | Stall::Fence) {
            self.cores[c].status = CoreStatus::StalledOffload;
        }
        if instr.is_some() && why != Stall::Barrier && why != Stall::ModeSwitch {
            self.cores[c].retrying = true;
        }
        self.trace_line(c, instr, Some(why));
    }

    fn owned_idle(&self, c: usize) -> bool {
        self.mode_ctrl.owned_units(c).iter().all(|&u| self.vus[u].is_idle())
    }

    /// Counts the fetch of the instruction at `pc` once, however many
    /// cycles it stalls.
    fn count_fetch(&mut self, c: usize, instr: &Instr) {
        if !self.cores[c].retrying {
            let k = &mut self.counters.cores[c];
            if instr.is_vector() {
                k.ifetch_vector += 1;
            } else {
                k.ifetch_scalar += 1;
            }
        }
    }

    fn exec_core(&mut self, c: usize, granted: Option<bool>) -> Result<(), SimError> {
        match self.cores[c].status {
            CoreStatus::Halted => {
                self.counters.cores[c].idle_cycle += 1;
                return Ok(());
            }
            CoreStatus::WaitingBarrier => {
                self.stall(c, None, Stall::Barrier);
                return Ok(());
            }
            CoreStatus::Running | CoreStatus::StalledOffload => {}
        }
        if self.cores[c].frozen_until > self.cycle {
            self.stall(c, None, Stall::ModeSwitch);
            return Ok(());
        }
        let pc = self.cores[c].pc;
        let instr = *self.program.instrs.get(pc).ok_or_else(|| self.fault(c, FaultKind::PcOutOfRange))?;
        self.count_fetch(c, &instr);

        if instr.is_vector() {
            return self.exec_vector(c, &instr);
        }

        let mut next = pc + 1;
        let rs1 = self.cores[c].x[usize::from(instr.rs1)];
        let rs2 = self.cores[c].x[usize::from(instr.rs2)];
        let core = &mut self.cores[c];
        let mut alu = true;
        use Opcode::*;
        match instr.op {
            Li => core.set_x(instr.rd, instr.imm as u32),
            Mv => core.set_x(instr.rd, rs1),
            Add => core.set_x(instr.rd, rs1.wrapping_add(rs2)),
            Addi => core.set_x(instr.rd, rs1.wrapping_add(instr.imm as u32)),
            Sub => core.set_x(instr.rd, rs1.wrapping_sub(rs2)),
            Mul => core.set_x(instr.rd, rs1.wrapping_mul(rs2)),
            And => core.set_x(instr.rd, rs1 & rs2),
            Or => core.set_x(instr.rd, rs1 | rs2),
            Xor => core.set_x(instr.rd, rs1 ^ rs2),
            Slli => core.set_x(instr.rd, rs1 << instr.imm),
            Srli => core.set_x(instr.rd, rs1 >> instr.imm),
            Beq | Bne | Blt | Bge => {
                let taken = match instr.op {
                    Beq => rs1 == rs2,
                    Bne => rs1 != rs2,
                    Blt => (rs1 as i32) < (rs2 as i32),
                    _ => (rs1 as i32) >= (rs2 as i32),
                };
                if taken {
                    next = instr.imm as usize;
                }
            }
            Jal => {
                core.set_x(instr.rd, (pc + 1) as u32);
                next = instr.imm as usize;
            }
            Jalr => {
                next = rs1.wrapping_add(instr.imm as u32) as usize;
                core.set_x(instr.rd, (pc + 1) as u32);
            }
            FaddS => core.f[usize::from(instr.rd)] = core.f[usize::from(instr.rs1)] + core.f[usize::from(instr.rs2)],
            FmulS => core.f[usize::from(instr.rd)] = core.f[usize::from(instr.rs1)] * core.f[usize::from(instr.rs2)],
            Nop => alu = false,
            Lw | Sw | Flw | Fsw => {
                if granted != Some(true) {
                    self.stall(c, Some(&instr), Stall::Bank);
                    return Ok(());
                }
                alu = false;
                let addr = self.scalar_addr(c, &instr)?;
                let core = &mut self.cores[c];
                match instr.op {
                    Lw => core.set_x(instr.rd, self.mem.read(addr).unwrap_or(0)),
                    Flw => core.f[usize::from(instr.rd)] = f32::from_bits(self.mem.read(addr).unwrap_or(0)),
                    Sw => {
                        self.mem.write(addr, rs2);
                    }
                    _ => {
                        self.mem.write(addr, core.f[usize::from(instr.rs2)].to_bits());
                    }
                }
                let k = &mut self.counters.cores[c];
                k.scalar_mem_access += 1;
                k.tcdm_access += 1;
            }
            FenceVec | Csrr | Halt => {
                if !self.owned_idle(c) {
                    self.stall(c, Some(&instr), Stall::Fence);
                    return Ok(());
                }
                alu = false;
                match instr.op {
                    Csrr => {
                        let vl = self.mode_ctrl.owned_units(c).first().map_or(0, |&u| self.vus[u].vl);
                        self.cores[c].set_x(instr.rd, vl);
                    }
                    Halt => self.cores[c].status = CoreStatus::Halted,
                    _ => {}
                }
            }
            Barrier => {
                alu = false;
                self.cores[c].status = CoreStatus::WaitingBarrier;
            }
            ModeSwitch => {
                alu = false;
                self.modeswitch(c, &instr)?;
            }
            _ => unreachable!("vector opcode {} handled above", instr.op),
        }
        self.retire(c, &instr, next, alu);
        Ok(())
    }

    fn retire(&mut self, c: usize, instr: &Instr, next: usize, alu: bool) {
        self.trace_line(c, Some(instr), None);
        let k = &mut self.counters.cores[c];
        k.active_cycle += 1;
        if alu {
            k.scalar_alu_op += 1;
        }
        let core = &mut self.cores[c];
        core.pc = next;
        core.retrying = false;
        if core.status == CoreStatus::StalledOffload {
            core.status = CoreStatus::Running;
        }
    }

    fn modeswitch(&mut self, c: usize, instr: &Instr) -> Result<(), SimError> {
        let target: Mode = instr.mode_target().expect("modeswitch carries a target").into();
        if target == self.mode() {
            return Ok(());
        }
        if !self.vus.iter().all(VectorUnit::is_idle) {
            return Err(self.fault(c, FaultKind::ModeswitchBusy));
        }
        self.mode_ctrl.transition(target);
        self.vus[1].vrf.invalidate();
        for u in &mut self.vus {
            u.vl = 0;
        }
        let until = self.cycle + self.config.modeswitch_latency;
        for core in &mut self.cores {
            if core.status != CoreStatus::Halted {
                core.frozen_until = until;
            }
        }
        self.counters.cores[c].modeswitch_count += 1;
        Ok(())
    }

    fn exec_vector(&mut self, c: usize, instr: &Instr) -> Result<(), SimError> {
        let owned = self.mode_ctrl.owned_units(c);
        if owned.is_empty() {
            return Err(self.fault(c, FaultKind::DetachedVector));
        }
        let vcfg = self.config.vector;
        if instr.op == Opcode::Vsetvli {
            let avl = self.cores[c].x[usize::from(instr.rs1)];
            let vl = vector::vsetvl(avl, VType::new(vcfg.vlen, self.mode().is_merged()));
            for &u in owned {
                self.vus[u].vl = vl;
            }
            self.cores[c].set_x(instr.rd, vl);
            self.retire(c, instr, self.cores[c].pc + 1, false);
            return Ok(());
        }
        if owned.iter().any(|&u| self.vus[u].queue.len() >= vcfg.queue_depth) {
            self.stall(c, Some(instr), Stall::Offload);
            return Ok(());
        }

        let core = &self.cores[c];
        let scalar = ScalarOperands { x: core.x[usize::from(instr.rs1)], f: core.f[usize::from(instr.rs1)] };
        let base = scalar.x;
        let vl = self.vus[owned[0]].vl;
        let units: &mut [VectorUnit] = if owned.len() == 2 { &mut self.vus[..] } else { &mut self.vus[owned[0]..=owned[0]] };
        let work = vector::execute(instr, vl, scalar, base, units, &mut self.mem, &vcfg, self.config.debug_vrf)
            .map_err(|e| self.fault(c, FaultKind::Vector(e)))?;
        for (&u, w) in owned.iter().zip(work) {
            let k: &mut EventCounts = &mut self.counters.units[u];
            k.vector_lane_op += u64::from(w.owned);
            k.vrf_access += w.vrf_accesses;
            self.vus[u].queue.push_back(vector::QueuedOp { op: instr.op, owned: w.owned, addrs: w.addrs });
        }
        self.retire(c, instr, self.cores[c].pc + 1, false);
        Ok(())
    }
}

#[cfg(test)]
mod tests;
