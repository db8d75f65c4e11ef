use super::*;
use crate::isa::assemble;

fn cluster(src: &str) -> Cluster {
    Cluster::new(ClusterConfig::default(), assemble(src).unwrap()).unwrap()
}

fn run(src: &str) -> Cluster {
    let mut c = cluster(src);
    let end = c.run_to_halt(100_000).unwrap();
    assert!(!end.timeout);
    c
}

fn nops(n: usize) -> String {
    "nop\n".repeat(n)
}

#[test]
fn one_instruction_per_cycle() {
    let c = run("li x1, 5\nli x2, 7\nadd x3, x1, x2\nhalt");
    assert_eq!(c.cycle, 4);
    assert_eq!(c.cores[0].x[3], 12);
    assert_eq!(c.counters.cores[0].ifetch(), 4);
    assert_eq!(c.counters.cores[0].scalar_alu_op, 3);
}

#[test]
fn halt_on_both_cores_takes_one_cycle() {
    let c = run(".entry 0 h\n.entry 1 h\nh: halt");
    assert_eq!(c.cycle, 1);
    assert_eq!(c.counters.total().ifetch(), 2);
}

#[test]
fn x0_discards_writes() {
    let c = run("li x0, 5\naddi x1, x0, 3\nhalt");
    assert_eq!(c.cores[0].x[0], 0);
    assert_eq!(c.cores[0].x[1], 3);
}

#[test]
fn branches_and_jumps_use_instruction_indices() {
    let src = "li x1, 3\nloop: addi x2, x2, 1\naddi x1, x1, -1\nbne x1, x0, loop\njal x5, end\nli x2, 99\nend: halt";
    let c = run(src);
    assert_eq!(c.cores[0].x[2], 3);
    assert_eq!(c.cores[0].x[5], 5);
}

#[test]
fn same_bank_loads_serialize() {
    // 0 and 32 share bank 0 with 8 banks.
    let src = ".data 0 11\n.data 32 22\n.entry 0 a\n.entry 1 b\na: lw x1, 0(x0)\nhalt\nb: lw x1, 32(x0)\nhalt";
    let c = run(src);
    assert_eq!((c.cores[0].x[1], c.cores[1].x[1]), (11, 22));
    let stalls: u64 = c.counters.cores.iter().map(|k| k.bank_conflict_stall).sum();
    assert_eq!(stalls, 1);
    assert_eq!(c.cycle, 3);
    // The retried load is fetched once.
    assert_eq!(c.counters.total().ifetch(), 4);
}

#[test]
fn different_banks_do_not_conflict() {
    let src = ".entry 0 a\n.entry 1 b\na: sw x0, 0(x0)\nhalt\nb: sw x0, 4(x0)\nhalt";
    let c = run(src);
    assert_eq!(c.counters.total().bank_conflict_stall, 0);
    assert_eq!(c.cycle, 2);
}

#[test]
fn scalar_memory_faults_carry_location() {
    let mut c = cluster("nop\nli x1, 0x20000\nlw x2, 0(x1)\nhalt");
    let e = c.run_to_halt(100).unwrap_err();
    assert_eq!((e.cycle, e.core, e.pc), (2, 0, 2));
    assert_eq!(e.kind, FaultKind::MemOutOfRange { addr: 0x20000 });
    let mut c = cluster("lw x2, 2(x0)\nhalt");
    assert_eq!(c.run_to_halt(100).unwrap_err().kind, FaultKind::Misaligned { addr: 2 });
}

#[test]
fn skewed_barrier() {
    let src = format!(".entry 0 a\n.entry 1 b\na:\n{}barrier\nhalt\nb:\n{}barrier\nhalt", nops(10), nops(14));
    let c = run(&src);
    assert_eq!(c.counters.cores[0].barrier_stall_cycle, 4);
    assert_eq!(c.counters.cores[1].barrier_stall_cycle, 0);
    // Both resume at cycle 15 and halt there.
    assert_eq!(c.cycle, 16);
}

#[test]
fn simultaneous_barrier_has_no_stall() {
    let c = run(".entry 0 a\n.entry 1 a\na: barrier\nhalt");
    assert_eq!(c.counters.total().barrier_stall_cycle, 0);
    assert_eq!(c.cycle, 2);
}

#[test]
fn degenerate_barrier_resumes_next_cycle() {
    let c = run("barrier\nhalt");
    assert_eq!(c.cycle, 2);
    assert_eq!(c.counters.total().barrier_stall_cycle, 0);
}

#[test]
fn barrier_stall_is_sum_of_stage_skews() {
    // Stage 1: core 0 is 5 cycles slower; stage 2: core 1 is 3 cycles slower.
    let src = format!(
        ".entry 0 a\n.entry 1 b\na:\n{}barrier\n{}barrier\nhalt\nb:\n{}barrier\n{}barrier\nhalt",
        nops(8),
        nops(2),
        nops(3),
        nops(5)
    );
    let c = run(&src);
    assert_eq!(c.counters.cores[0].barrier_stall_cycle, 3);
    assert_eq!(c.counters.cores[1].barrier_stall_cycle, 5);
    assert_eq!(c.counters.total().barrier_stall_cycle, 8);
}

#[test]
fn modeswitch_reassigns_units_and_costs_latency() {
    let mut c = cluster("modeswitch merge 0\nhalt");
    assert_eq!(c.vlmax(), 8);
    c.step().unwrap();
    assert_eq!(c.mode(), Mode::Merge { driver: 0 });
    assert_eq!(c.mode_ctrl.owned_units(0), &[0, 1]);
    assert!(c.mode_ctrl.owned_units(1).is_empty());
    assert_eq!(c.vlmax(), 16);
    c.run_to_halt(100).unwrap();
    assert_eq!(c.cycle, 4 + 1);
    assert_eq!(c.counters.cores[0].modeswitch_count, 1);
}

#[test]
fn modeswitch_back_to_split() {
    let c = run("modeswitch merge 0\nmodeswitch split\nhalt");
    assert_eq!(c.mode(), Mode::Split);
    assert_eq!(c.mode_ctrl.owned_units(1), &[1]);
    assert_eq!(c.counters.cores[0].modeswitch_count, 2);
}

#[test]
fn modeswitch_to_current_mode_is_a_nop() {
    let c = run("modeswitch split\nhalt");
    assert_eq!(c.cycle, 2);
    assert_eq!(c.counters.total().modeswitch_count, 0);
}

#[test]
fn modeswitch_with_busy_unit_faults() {
    let mut c = cluster("li x1, 8\nvsetvli x2, x1, e32\nvle32.v v1, (x0)\nmodeswitch merge 0\nhalt");
    let e = c.run_to_halt(100).unwrap_err();
    assert_eq!(e.kind, FaultKind::ModeswitchBusy);
    assert_eq!(e.pc, 3);
}

#[test]
fn modeswitch_after_fence_is_legal() {
    let c = run("li x1, 8\nvsetvli x2, x1, e32\nvle32.v v1, (x0)\nfence.vec\nmodeswitch merge 0\nhalt");
    assert_eq!(c.mode(), Mode::Merge { driver: 0 });
    assert!(c.counters.cores[0].offload_stall_cycle > 0);
    // vl is reset by the switch.
    assert_eq!(c.vus[0].vl, 0);
}

#[test]
fn detached_core_vector_instruction_faults() {
    let src = ".entry 0 a\n.entry 1 b\na: modeswitch merge 0\nhalt\nb: nop\nvsetvli x1, x2, e32\nhalt";
    let mut c = cluster(src);
    let e = c.run_to_halt(100).unwrap_err();
    assert_eq!(e.kind, FaultKind::DetachedVector);
    assert_eq!(e.core, 1);
    assert!(e.to_string().contains("vector instruction on detached core"));
}

#[test]
fn invalidated_registers_fault_in_debug_mode() {
    let src = "li x1, 16\nmodeswitch merge 0\nvsetvli x2, x1, e32\nvse32.v v3, (x0)\nhalt";
    let cfg = ClusterConfig { debug_vrf: true, ..ClusterConfig::default() };
    let mut c = Cluster::new(cfg, assemble(src).unwrap()).unwrap();
    let e = c.run_to_halt(100).unwrap_err();
    assert_eq!(e.kind, FaultKind::Vector(VectorFault::Invalidated { reg: 3 }));
    // Without the debug check the stale data is simply stored.
    run(src);
}

#[test]
fn timeout_is_flagged() {
    let mut c = cluster("l: jal x0, l");
    let end = c.run_to_halt(1000).unwrap();
    assert_eq!(end, RunEnd { cycles: 1000, timeout: true });
}

#[test]
fn csrr_reads_vl_after_drain() {
    let c = run("li x1, 100\nvsetvli x2, x1, e32\ncsrr x3, vl\nhalt");
    assert_eq!((c.cores[0].x[2], c.cores[0].x[3]), (8, 8));
}

#[test]
fn full_offload_queue_stalls_the_core() {
    let src = format!("li x1, 8\nvsetvli x2, x1, e32\n{}halt", "vle32.v v1, (x0)\n".repeat(8));
    let c = run(&src);
    let k = &c.counters.cores[0];
    assert!(k.offload_stall_cycle > 0);
    assert_eq!(k.ifetch_vector, 9);
    assert_eq!(c.counters.units[0].tcdm_access, 64);
}

#[test]
fn vector_occupancy_shows_in_cycle_count() {
    // vle: 8 elements over 4 ports, no conflicts -> 2 cycles of occupancy.
    let c = run("li x1, 8\nvsetvli x2, x1, e32\nvle32.v v1, (x0)\nhalt");
    assert_eq!(c.counters.units[0].active_cycle, 2);
    assert_eq!(c.counters.units[0].bank_conflict_stall, 0);
    assert_eq!(c.counters.units[0].vector_lane_op, 8);
}

#[test]
fn strided_vector_access_conflicts_on_one_bank() {
    // Stride 32 bytes puts every element in bank 0: one grant per cycle.
    let c = run("li x1, 8\nvsetvli x2, x1, e32\nvlse32.v v1, (x0), 32\nhalt");
    assert_eq!(c.counters.units[0].active_cycle, 8);
    assert_eq!(c.counters.units[0].bank_conflict_stall, 7);
}

const VADD: &str = "
.data 0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16
.data 0x100 16 15 14 13 12 11 10 9 8 7 6 5 4 3 2 1
li x10, 16
li x11, 0
li x12, 0x100
li x13, 0x200
loop:
vsetvli x5, x10, e32
vle32.v v1, (x11)
vle32.v v2, (x12)
vadd.vv v3, v1, v2
vse32.v v3, (x13)
slli x6, x5, 2
add x11, x11, x6
add x12, x12, x6
add x13, x13, x6
sub x10, x10, x5
bne x10, x0, loop
fence.vec
halt
";

#[test]
fn merge_mode_halves_vector_fetches() {
    let split = run(VADD);
    let merged = run(&VADD.replace("li x10, 16", "modeswitch merge 0\nli x10, 16"));
    let out = |c: &Cluster| c.mem.words()[0x200 / 4..0x200 / 4 + 16].to_vec();
    assert_eq!(out(&split), vec![17; 16]);
    assert_eq!(out(&split), out(&merged));
    assert_eq!(split.counters.cores[0].ifetch_vector, 10);
    assert_eq!(merged.counters.cores[0].ifetch_vector, 5);
    let lanes = |c: &Cluster| c.counters.units.iter().map(|k| k.vector_lane_op).sum::<u64>();
    assert_eq!(lanes(&split), lanes(&merged));
    assert!(merged.counters.units[1].vector_lane_op > 0);
}

#[test]
fn stepping_is_deterministic() {
    let a = run(VADD);
    let b = run(VADD);
    assert_eq!(a.cycle, b.cycle);
    assert_eq!(a.counters, b.counters);
    assert_eq!(a.mem, b.mem);
}

#[test]
fn trace_lines() {
    use std::sync::{Arc, Mutex};

    #[derive(Clone, Default)]
    struct Sink(Arc<Mutex<Vec<u8>>>);
    impl Write for Sink {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    let sink = Sink::default();
    let mut c = cluster("barrier\nli x1, 1\nhalt");
    c.set_trace(Box::new(sink.clone()));
    c.run_to_halt(100).unwrap();
    let text = String::from_utf8(sink.0.lock().unwrap().clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["cycle=0 core=0 pc=0 barrier", "cycle=1 core=0 pc=1 li", "cycle=2 core=0 pc=2 halt"]);
}

#[test]
fn config_validation() {
    assert!(ClusterConfig::default().validate().is_ok());
    let mut c = ClusterConfig::default();
    c.n_banks = 6;
    assert!(c.validate().is_err());
    let mut c = ClusterConfig::default();
    c.vector.vlen = 100;
    assert!(c.validate().is_err());
}

#[test]
fn data_outside_scratchpad_is_rejected() {
    let cfg = ClusterConfig { scratchpad_bytes: 64, ..ClusterConfig::default() };
    let p = assemble(".data 60 1 2\nhalt").unwrap();
    assert!(matches!(Cluster::new(cfg, p).unwrap_err().kind, FaultKind::Load(_)));
}
