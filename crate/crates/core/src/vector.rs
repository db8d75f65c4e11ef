//! One vector unit: register file, `vl` handling, functional semantics of
//! the vector subset and the lane/port occupancy model.
//!
//! Functional execution works on a *logical* register file made of the VRFs
//! of every unit driven by the issuing core. Logical element `i` is stored
//! in unit `i / vlmax_unit` at local index `i % vlmax_unit`, so element
//! placement never depends on the current `vl`. Work, on the other hand, is
//! split by [`element_window`].

use std::collections::VecDeque;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Instr, Opcode, NUM_REGS};

/// Element width in bits. Only 32-bit elements exist.
pub const SEW: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VType {
    pub sew: u32,
    /// VLEN of one unit in split mode, twice that in merge mode.
    pub effective_vlen: u32,
}

impl VType {
    pub fn new(vlen: u32, merged: bool) -> Self {
        VType { sew: SEW, effective_vlen: if merged { 2 * vlen } else { vlen } }
    }

    pub fn vlmax(&self) -> u32 {
        self.effective_vlen / self.sew
    }
}

/// `vl = min(avl, VLMAX)`.
pub fn vsetvl(avl: u32, vtype: VType) -> u32 {
    avl.min(vtype.vlmax())
}

/// Global element indices processed by `unit` out of `n_units` driven units.
pub fn element_window(unit: usize, n_units: usize, vl: u32) -> Range<u32> {
    match (n_units, unit) {
        (1, _) => 0..vl,
        (_, 0) => 0..vl.div_ceil(2),
        _ => vl.div_ceil(2)..vl,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorConfig {
    pub vlen: u32,
    pub nlanes: u32,
    pub nports: u32,
    pub queue_depth: usize,
}

impl Default for VectorConfig {
    fn default() -> Self {
        VectorConfig { vlen: 256, nlanes: 4, nports: 4, queue_depth: 4 }
    }
}

impl VectorConfig {
    /// Elements per register in one unit.
    pub fn vlmax_unit(&self) -> u32 {
        self.vlen / SEW
    }
}

/// Conflict-free occupancy of one instruction on one unit.
///
/// Memory instructions add bank-conflict stalls on top of this at run time.
pub fn occupancy(op: Opcode, owned: u32, cfg: &VectorConfig) -> u64 {
    if owned == 0 {
        return 1;
    }
    let owned = u64::from(owned);
    if op.is_vector_mem() {
        owned.div_ceil(u64::from(cfg.nports))
    } else if op.is_reduction() {
        owned.div_ceil(u64::from(cfg.nlanes)) + u64::from(cfg.nlanes.max(1).ilog2())
    } else {
        owned.div_ceil(u64::from(cfg.nlanes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorFault {
    #[error("vector access to {addr:#x} outside scratchpad")]
    OutOfRange { addr: i64 },
    #[error("misaligned vector access to {addr:#x}")]
    Misaligned { addr: i64 },
    #[error("read of invalidated vector register v{reg}")]
    Invalidated { reg: u8 },
}

/// Vector register file of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Vrf {
    elems: usize,
    words: Vec<u32>,
    valid: [bool; NUM_REGS],
}

impl Vrf {
    pub fn new(elems_per_reg: usize) -> Self {
        Vrf { elems: elems_per_reg, words: vec![0; NUM_REGS * elems_per_reg], valid: [true; NUM_REGS] }
    }

    pub fn get(&self, reg: u8, idx: usize) -> u32 {
        self.words[usize::from(reg) * self.elems + idx]
    }

    pub fn set(&mut self, reg: u8, idx: usize, value: u32) {
        self.words[usize::from(reg) * self.elems + idx] = value;
        self.valid[usize::from(reg)] = true;
    }

    pub fn is_valid(&self, reg: u8) -> bool {
        self.valid[usize::from(reg)]
    }

    pub fn invalidate(&mut self) {
        self.valid = [false; NUM_REGS];
    }
}

/// Timing-side record of one dispatched instruction on one unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueuedOp {
    pub op: Opcode,
    pub owned: u32,
    /// Byte addresses of owned elements, in element order (memory ops only).
    pub addrs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InFlight {
    Compute { remaining: u64 },
    Memory { addrs: Vec<u32>, done: Vec<bool>, next: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorUnit {
    pub id: usize,
    pub vrf: Vrf,
    pub vl: u32,
    pub queue: VecDeque<QueuedOp>,
    pub current: Option<(QueuedOp, InFlight)>,
}

impl VectorUnit {
    pub fn new(id: usize, cfg: &VectorConfig) -> Self {
        VectorUnit {
            id,
            vrf: Vrf::new(cfg.vlmax_unit() as usize),
            vl: 0,
            queue: VecDeque::with_capacity(cfg.queue_depth),
            current: None,
        }
    }

    pub fn is_idle(&self) -> bool {
        self.current.is_none() && self.queue.is_empty()
    }

    pub fn is_busy(&self) -> bool {
        self.current.is_some()
    }

    /// Pulls the next queued instruction if nothing is in flight.
    pub fn start_next(&mut self, cfg: &VectorConfig) {
        if self.current.is_some() {
            return;
        }
        if let Some(op) = self.queue.pop_front() {
            let flight = if op.op.is_vector_mem() && op.owned > 0 {
                InFlight::Memory { addrs: op.addrs.clone(), done: vec![false; op.addrs.len()], next: 0 }
            } else {
                InFlight::Compute { remaining: occupancy(op.op, op.owned, cfg) }
            };
            self.current = Some((op, flight));
        }
    }

    /// Indices (into the in-flight address list) of the accesses attempted this cycle.
    pub fn pending_accesses(&self, nports: u32) -> Vec<usize> {
        match &self.current {
            Some((_, InFlight::Memory { done, next, .. })) => {
                (*next..done.len()).filter(|&i| !done[i]).take(nports as usize).collect()
            }
            _ => Vec::new(),
        }
    }
}

/// Scalar values captured from the issuing core at dispatch.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarOperands {
    pub x: u32,
    pub f: f32,
}

/// Per-unit work produced by functional execution of one instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitWork {
    pub owned: u32,
    pub addrs: Vec<u32>,
    pub vrf_accesses: u64,
}

/// Word-addressed memory seen by vector loads and stores.
pub trait VectorMemory {
    fn load(&self, addr: i64) -> Result<u32, VectorFault>;
    fn store(&mut self, addr: i64, value: u32) -> Result<(), VectorFault>;
}

struct Logical<'a> {
    units: &'a mut [VectorUnit],
    per_unit: usize,
    check_valid: bool,
}

impl Logical<'_> {
    fn locate(&self, i: u32) -> (usize, usize) {
        let i = i as usize;
        (i / self.per_unit, i % self.per_unit)
    }

    fn read(&self, reg: u8, i: u32) -> Result<u32, VectorFault> {
        let (u, local) = self.locate(i);
        let vrf = &self.units[u].vrf;
        if self.check_valid && !vrf.is_valid(reg) {
            return Err(VectorFault::Invalidated { reg });
        }
        Ok(vrf.get(reg, local))
    }

    fn write(&mut self, reg: u8, i: u32, value: u32) {
        let (u, local) = self.locate(i);
        self.units[u].vrf.set(reg, local, value);
    }
}

/// Number of vector-register operands touched per element.
fn vreg_operands(op: Opcode) -> u64 {
    use Opcode::*;
    match op {
        Vle32 | Vlse32 | Vse32 | Vsse32 | VmvVX | VfmvVF => 1,
        VaddVX | VmulVX | VmaxVX | VfmulVF | VredsumVS | VfredsumVS => 2,
        VmaccVV | VfmaccVV => 4,
        _ => 3,
    }
}

/// Pairwise sum over a contiguous slice, split at `ceil(len/2)`.
///
/// Splitting at the ceiling makes the tree over `[0, vl)` identical to the
/// combination of the per-unit trees over the two merge-mode windows.
fn tree_sum_f32(v: &[f32]) -> f32 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => {
            let h = n.div_ceil(2);
            tree_sum_f32(&v[..h]) + tree_sum_f32(&v[h..])
        }
    }
}

/// Executes `instr` over `vl` logical elements spread across `units`.
///
/// Returns the work each unit performs, in unit order. `units` holds one
/// unit in split mode and both units in merge mode.
pub fn execute(
    instr: &Instr,
    vl: u32,
    scalar: ScalarOperands,
    base: u32,
    units: &mut [VectorUnit],
    mem: &mut dyn VectorMemory,
    cfg: &VectorConfig,
    check_valid: bool,
) -> Result<Vec<UnitWork>, VectorFault> {
    use Opcode::*;
    let n_units = units.len();
    let windows: Vec<Range<u32>> = (0..n_units).map(|u| element_window(u, n_units, vl)).collect();
    let mut work: Vec<UnitWork> = windows
        .iter()
        .map(|w| {
            let owned = w.end - w.start;
            UnitWork { owned, addrs: Vec::new(), vrf_accesses: u64::from(owned) * vreg_operands(instr.op) }
        })
        .collect();
    let mut lv = Logical { units, per_unit: cfg.vlmax_unit() as usize, check_valid };
    let (vd, vs1, vs2) = (instr.rd, instr.rs1, instr.rs2);
    let stride: i64 = match instr.op {
        Vlse32 | Vsse32 => i64::from(instr.imm),
        _ => 4,
    };
    let f = f32::from_bits;

    if instr.op.is_reduction() {
        if vl == 0 {
            return Ok(work);
        }
        let mut int_partials = Vec::with_capacity(n_units);
        let mut fp_partials = Vec::with_capacity(n_units);
        for w in &windows {
            let mut ints = 0u32;
            let mut fps = Vec::with_capacity(w.len());
            for i in w.clone() {
                let v = lv.read(vs2, i)?;
                ints = ints.wrapping_add(v);
                fps.push(f(v));
            }
            int_partials.push(ints);
            fp_partials.push(tree_sum_f32(&fps));
        }
        let seed = lv.read(vs1, 0)?;
        let result = if instr.op == VredsumVS {
            int_partials.iter().fold(seed, |a, &p| a.wrapping_add(p))
        } else {
            let total = fp_partials
                .iter()
                .zip(&windows)
                .filter(|(_, w)| !w.is_empty())
                .map(|(p, _)| *p)
                .reduce(|a, b| a + b)
                .unwrap_or(0.0);
            (f(seed) + total).to_bits()
        };
        lv.write(vd, 0, result);
        return Ok(work);
    }

    for (u, w) in windows.iter().enumerate() {
        for i in w.clone() {
            let addr = || i64::from(base) + i64::from(i) * stride;
            match instr.op {
                Vle32 | Vlse32 => {
                    let a = addr();
                    let v = mem.load(a)?;
                    lv.write(vd, i, v);
                    work[u].addrs.push(a as u32);
                }
                Vse32 | Vsse32 => {
                    let a = addr();
                    let v = lv.read(vs2, i)?;
                    mem.store(a, v)?;
                    work[u].addrs.push(a as u32);
                }
                VaddVV => {
                    let r = lv.read(vs2, i)?.wrapping_add(lv.read(vs1, i)?);
                    lv.write(vd, i, r);
                }
                VsubVV => {
                    let r = lv.read(vs2, i)?.wrapping_sub(lv.read(vs1, i)?);
                    lv.write(vd, i, r);
                }
                VmulVV => {
                    let r = lv.read(vs2, i)?.wrapping_mul(lv.read(vs1, i)?);
                    lv.write(vd, i, r);
                }
                VmaccVV => {
                    let p = lv.read(vs1, i)?.wrapping_mul(lv.read(vs2, i)?);
                    let r = lv.read(vd, i)?.wrapping_add(p);
                    lv.write(vd, i, r);
                }
                VaddVX => {
                    let r = lv.read(vs2, i)?.wrapping_add(scalar.x);
                    lv.write(vd, i, r);
                }
                VmulVX => {
                    let r = lv.read(vs2, i)?.wrapping_mul(scalar.x);
                    lv.write(vd, i, r);
                }
                VmaxVX => {
                    let r = (lv.read(vs2, i)? as i32).max(scalar.x as i32);
                    lv.write(vd, i, r as u32);
                }
                VfaddVV => {
                    let r = f(lv.read(vs2, i)?) + f(lv.read(vs1, i)?);
                    lv.write(vd, i, r.to_bits());
                }
                VfsubVV => {
                    let r = f(lv.read(vs2, i)?) - f(lv.read(vs1, i)?);
                    lv.write(vd, i, r.to_bits());
                }
                VfmulVV => {
                    let r = f(lv.read(vs2, i)?) * f(lv.read(vs1, i)?);
                    lv.write(vd, i, r.to_bits());
                }
                VfmaccVV => {
                    // Unfused: the product is rounded before the add.
                    let p = f(lv.read(vs1, i)?) * f(lv.read(vs2, i)?);
                    let r = p + f(lv.read(vd, i)?);
                    lv.write(vd, i, r.to_bits());
                }
                VfmulVF => {
                    let r = f(lv.read(vs2, i)?) * scalar.f;
                    lv.write(vd, i, r.to_bits());
                }
                VmvVX => lv.write(vd, i, scalar.x),
                VfmvVF => lv.write(vd, i, scalar.f.to_bits()),
                _ => unreachable!("{} is not an element-wise vector instruction", instr.op),
            }
        }
    }
    Ok(work)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;
    use proptest::prelude::*;

    struct Flat(Vec<u32>);

    impl VectorMemory for Flat {
        fn load(&self, addr: i64) -> Result<u32, VectorFault> {
            if addr % 4 != 0 {
                return Err(VectorFault::Misaligned { addr });
            }
            self.0.get((addr / 4) as usize).copied().ok_or(VectorFault::OutOfRange { addr })
        }
        fn store(&mut self, addr: i64, value: u32) -> Result<(), VectorFault> {
            let slot = self.0.get_mut((addr / 4) as usize).ok_or(VectorFault::OutOfRange { addr })?;
            *slot = value;
            Ok(())
        }
    }

    fn instr(src: &str) -> Instr {
        assemble(src).unwrap().instrs[0]
    }

    fn units(n: usize, cfg: &VectorConfig) -> Vec<VectorUnit> {
        (0..n).map(|i| VectorUnit::new(i, cfg)).collect()
    }

    fn fill(units: &mut [VectorUnit], reg: u8, vals: &[u32], cfg: &VectorConfig) {
        let per = cfg.vlmax_unit() as usize;
        for (i, &v) in vals.iter().enumerate() {
            units[i / per].vrf.set(reg, i % per, v);
        }
    }

    fn read(units: &[VectorUnit], reg: u8, n: usize, cfg: &VectorConfig) -> Vec<u32> {
        let per = cfg.vlmax_unit() as usize;
        (0..n).map(|i| units[i / per].vrf.get(reg, i % per)).collect()
    }

    #[test]
    fn vsetvl_examples() {
        assert_eq!(vsetvl(16, VType::new(256, false)), 8);
        assert_eq!(vsetvl(5, VType::new(256, false)), 5);
        assert_eq!(vsetvl(16, VType::new(256, true)), 16);
        assert_eq!(vsetvl(0, VType::new(256, true)), 0);
    }

    #[test]
    fn occupancy_examples() {
        let cfg = VectorConfig::default();
        assert_eq!(occupancy(Opcode::VaddVV, 8, &cfg), 2);
        assert_eq!(occupancy(Opcode::Vle32, 16, &cfg), 4);
        assert_eq!(occupancy(Opcode::VredsumVS, 8, &cfg), 4);
        assert_eq!(occupancy(Opcode::VfmulVV, 0, &cfg), 1);
    }

    #[test]
    fn windows() {
        assert_eq!(element_window(0, 1, 8), 0..8);
        assert_eq!(element_window(0, 2, 9), 0..5);
        assert_eq!(element_window(1, 2, 9), 5..9);
        assert_eq!(element_window(1, 2, 0), 0..0);
    }

    #[test]
    fn vfmacc_elementwise() {
        let cfg = VectorConfig::default();
        let mut us = units(1, &cfg);
        let fb = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        fill(&mut us, 1, &fb(&[1.0, 2.0, 3.0, 4.0]), &cfg);
        fill(&mut us, 2, &fb(&[10.0; 4]), &cfg);
        fill(&mut us, 3, &fb(&[5.0; 4]), &cfg);
        let mut mem = Flat(vec![0; 16]);
        execute(&instr("vfmacc.vv v3, v1, v2"), 4, ScalarOperands::default(), 0, &mut us, &mut mem, &cfg, false)
            .unwrap();
        assert_eq!(read(&us, 3, 4, &cfg), fb(&[15.0, 25.0, 35.0, 45.0]));
    }

    #[test]
    fn vredsum_sum_and_cost() {
        let cfg = VectorConfig::default();
        let mut us = units(1, &cfg);
        fill(&mut us, 1, &(1..=8).collect::<Vec<_>>(), &cfg);
        let mut mem = Flat(vec![]);
        let work = execute(
            &instr("vredsum.vs v4, v1, v0"),
            8,
            ScalarOperands::default(),
            0,
            &mut us,
            &mut mem,
            &cfg,
            false,
        )
        .unwrap();
        // Independent sum: 8*9/2.
        assert_eq!(us[0].vrf.get(4, 0), 36);
        assert_eq!(occupancy(Opcode::VredsumVS, work[0].owned, &cfg), 4);
    }

    #[test]
    fn out_of_range_load_faults() {
        let cfg = VectorConfig::default();
        let mut us = units(1, &cfg);
        let mut mem = Flat(vec![0; 4]);
        let e = execute(&instr("vle32.v v1, (x1)"), 8, ScalarOperands::default(), 0, &mut us, &mut mem, &cfg, false)
            .unwrap_err();
        assert_eq!(e, VectorFault::OutOfRange { addr: 16 });
    }

    #[test]
    fn tail_untouched_and_zero_vl_noop() {
        let cfg = VectorConfig::default();
        let mut us = units(1, &cfg);
        fill(&mut us, 2, &[7; 8], &cfg);
        let mut mem = Flat(vec![]);
        let s = ScalarOperands { x: 1, f: 0.0 };
        execute(&instr("vmv.v.x v2, x5"), 3, s, 0, &mut us, &mut mem, &cfg, false).unwrap();
        assert_eq!(read(&us, 2, 8, &cfg), vec![1, 1, 1, 7, 7, 7, 7, 7]);
        let w = execute(&instr("vmv.v.x v2, x5"), 0, ScalarOperands::default(), 0, &mut us, &mut mem, &cfg, false)
            .unwrap();
        assert_eq!(w[0].owned, 0);
        assert_eq!(read(&us, 2, 8, &cfg), vec![1, 1, 1, 7, 7, 7, 7, 7]);
    }

    #[test]
    fn invalidated_read_faults_in_debug() {
        let cfg = VectorConfig::default();
        let mut us = units(2, &cfg);
        us[1].vrf.invalidate();
        let mut mem = Flat(vec![0; 64]);
        let i = instr("vse32.v v3, (x1)");
        assert!(execute(&i, 16, ScalarOperands::default(), 0, &mut us, &mut mem, &cfg, false).is_ok());
        let e = execute(&i, 16, ScalarOperands::default(), 0, &mut us, &mut mem, &cfg, true).unwrap_err();
        assert_eq!(e, VectorFault::Invalidated { reg: 3 });
    }

    fn arb_op() -> impl Strategy<Value = &'static str> {
        prop::sample::select(vec![
            "vadd.vv v3, v1, v2",
            "vsub.vv v3, v1, v2",
            "vmul.vv v3, v1, v2",
            "vmacc.vv v3, v1, v2",
            "vadd.vx v3, v1, x5",
            "vmax.vx v3, v1, x5",
            "vfadd.vv v3, v1, v2",
            "vfsub.vv v3, v1, v2",
            "vfmul.vv v3, v1, v2",
            "vfmacc.vv v3, v1, v2",
            "vfmul.vf v3, v1, f1",
            "vredsum.vs v3, v1, v2",
            "vfredsum.vs v3, v1, v2",
            "vle32.v v3, (x1)",
            "vlse32.v v3, (x1), 12",
            "vse32.v v1, (x1)",
            "vsse32.v v1, (x1), -8",
        ])
    }

    proptest! {
        #[test]
        fn vl_clamp(avl in 0u32..64, merged: bool) {
            let vt = VType::new(256, merged);
            let vl = vsetvl(avl, vt);
            prop_assert!(vl <= vt.vlmax());
            prop_assert_eq!(vl, avl.min(vt.vlmax()));
        }

        #[test]
        fn occupancy_monotone(owned in 0u32..64, op in arb_op()) {
            let cfg = VectorConfig::default();
            let op = instr(op).op;
            prop_assert!(occupancy(op, owned, &cfg) <= occupancy(op, owned + 1, &cfg));
        }

        /// Same instruction, same logical state: one unit over `[0, vl)` and
        /// two units over the split windows give identical results.
        #[test]
        fn mode_independent(
            op in arb_op(),
            vl in 0u32..=8,
            a in prop::collection::vec(any::<u32>(), 16),
            b in prop::collection::vec(-1.0e3f32..1.0e3, 16),
            m in prop::collection::vec(any::<u32>(), 128),
        ) {
            // A wide unit (VLEN=512) stands in for split mode with the same vl
            // as two 256-bit units in merge mode.
            let wide = VectorConfig { vlen: 512, ..VectorConfig::default() };
            let narrow = VectorConfig::default();
            let i = instr(op);
            let bf: Vec<u32> = b.iter().map(|x| x.to_bits()).collect();
            let vl = vl * 2;
            let s = ScalarOperands { x: a[0], f: b[0] };
            let base = 160;

            let mut one = units(1, &wide);
            let mut two = units(2, &narrow);
            for (us, cfg) in [(&mut one, &wide), (&mut two, &narrow)] {
                let fp = op.starts_with("vf");
                fill(us, 1, if fp { &bf } else { &a }, cfg);
                fill(us, 2, if fp { &bf } else { &a }, cfg);
                fill(us, 3, &a, cfg);
            }
            let mut m1 = Flat(m.clone());
            let mut m2 = Flat(m);
            let w1 = execute(&i, vl, s, base, &mut one, &mut m1, &wide, false).unwrap();
            let w2 = execute(&i, vl, s, base, &mut two, &mut m2, &narrow, false).unwrap();
            prop_assert_eq!(m1.0, m2.0);
            prop_assert_eq!(read(&one, 3, 16, &wide), read(&two, 3, 16, &narrow));
            prop_assert_eq!(w1[0].owned, w2[0].owned + w2[1].owned);
        }
    }
}
