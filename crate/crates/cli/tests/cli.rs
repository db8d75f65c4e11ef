use std::path::Path;
use std::process::{Command, Output};

use vcluster::cluster::ClusterConfig;
use vcluster::experiment::{run_kernel, RunOptions};
use vcluster::metrics::RunStats;
use vcluster::workloads::{generate_kernel, KernelKind, KernelSpec, Variant};

fn vcluster(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcluster")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn run_small_axpy_matches_oracle() {
    let o = vcluster(&["run", "--kernel", "axpy", "--n", "64", "--mode", "split"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stats = RunStats::from_json(std::str::from_utf8(&o.stdout).unwrap()).unwrap();
    let spec = KernelSpec::new(KernelKind::Axpy).with_n(64).with_variant(Variant::SplitDual);
    let want = generate_kernel(&spec, &ClusterConfig::default()).unwrap().expected.checksum();
    assert_eq!(stats.checksum, want);
    assert_eq!(stats.config.mode, "split-dual");
    assert!(!stats.timeout);
}

#[test]
fn unknown_mnemonic_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.s", "li x1, 1\nfrobnicate x1, x2\nhalt\n");
    let o = vcluster(&["run", &f]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("frobnicate"));
    assert!(o.stdout.is_empty());
    assert_eq!(code(&vcluster(&["asm-check", &f])), 2);
}

#[test]
fn infinite_loop_times_out_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "spin.s", "spin:\njal x0, spin\n");
    let o = vcluster(&["run", &f, "--max-cycles", "1000000"]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    assert_eq!(v["timeout"], true);
    assert_eq!(v["cycles"], 1_000_000);
}

#[test]
fn fault_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "oob.s", "li x1, 0x7ffffff0\nlw x2, 0(x1)\nhalt\n");
    let o = vcluster(&["run", &f]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("pc 1"));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[cluster]\nvlen_bits = 256\n");
    assert_eq!(code(&vcluster(&["--config", &bad, "run"])), 1);
    let banks = write(dir.path(), "banks.toml", "[cluster]\nn_banks = 3\n");
    assert_eq!(code(&vcluster(&["--config", &banks, "run"])), 1);
    assert_eq!(code(&vcluster(&["--config", "/nonexistent.toml", "run"])), 1);
    assert_eq!(code(&vcluster(&["run", "/nonexistent.s"])), 1);
    assert_eq!(code(&vcluster(&["run", "--mode", "sideways"])), 1);
    let huge = vcluster(&["run", "--kernel", "axpy", "--n", "100000"]);
    assert_eq!(code(&huge), 1);
    assert!(String::from_utf8_lossy(&huge.stderr).contains("bytes"));
}

#[test]
fn asm_program_from_config_resolves_relative_path() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "p.s", "li x1, 5\nli x2, 7\nadd x3, x1, x2\nli x4, 256\nsw x3, 0(x4)\nhalt\n");
    let cfg = write(dir.path(), "c.toml", "[experiment]\nasm = \"p.s\"\n[output]\nformat = \"csv\"\n");
    let o = vcluster(&["--config", &cfg, "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("schema_version,workload,mode"));
    assert!(lines[1].contains(",p.s,asm,"));
}

#[test]
fn trace_lines_go_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "t.s", "li x1, 1\nhalt\n");
    let o = vcluster(&["run", &f, "--trace"]);
    assert_eq!(code(&o), 0);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.lines().any(|l| l.starts_with("cycle=0 core=0 pc=0 li")), "{err}");
}

#[test]
fn asm_check_reports_size() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "ok.s", ".data 0x100 1 2 3\nli x1, 1\nhalt\n");
    let o = vcluster(&["asm-check", &f]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("2 instructions, 3 data words"));
    let d = vcluster(&["asm-check", &f, "--disassemble"]);
    assert!(String::from_utf8(d.stdout).unwrap().contains("halt"));
}

#[test]
fn sweep_runs_every_cell() {
    let o = vcluster(&["sweep", "--n", "256"]);
    // --n is not a sweep flag; sizes come from the config file.
    assert_ne!(code(&o), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "[experiment]\nn = 256\nm = 8\nk = 8\n");
    let o = vcluster(&["--config", &cfg, "sweep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["runs"].as_array().unwrap().len(), 12);
    assert_eq!(v["comparisons"].as_array().unwrap().len(), 6);
    assert!(v["failures"].as_array().unwrap().is_empty());
    let order: Vec<String> = v["runs"].as_array().unwrap().iter().map(|r| r["config"]["mode"].as_str().unwrap().to_string()).collect();
    assert_eq!(order[..2], ["split-dual".to_string(), "merge".to_string()]);
    for c in v["comparisons"].as_array().unwrap() {
        assert!(c["fetch_ratio"].as_f64().unwrap() < 1.0);
    }
}

#[test]
fn single_cell_sweep_has_no_ratios() {
    let o = vcluster(&["sweep", "--kernels", "relu", "--modes", "merge"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["runs"].as_array().unwrap().len(), 1);
    assert!(v["comparisons"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_failures_mark_cells_and_continue() {
    let o = vcluster(&["sweep", "--kernels", "relu,axpy", "--max-cycles", "2600"]);
    assert_eq!(code(&o), 3);
    let v = json(&o);
    // relu fits in the budget, axpy does not.
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(v["failures"].as_array().unwrap().len(), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cell failed"));
}

#[test]
fn mixed_balanced_axpy_with_crc() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.toml",
        "[experiment]\nkernel = \"axpy\"\n[experiment.scalar]\ncrc_len = 4\ncomponents = { list = false, fsm = false }\n",
    );
    let o = vcluster(&["--config", &cfg, "mixed"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let speedup = v["speedup"].as_f64().unwrap();
    assert!(speedup > 1.0 && speedup <= 2.0, "{speedup}");
    assert!(v["core1_utilization_merge"].as_f64().unwrap() > 0.9);
    assert!(v["scalar_iterations"].as_u64().unwrap() > 0);
}

#[test]
fn mixed_without_scalar_work_is_the_kernel_ratio() {
    let o = vcluster(&["mixed", "--kernel", "relu", "--iterations", "0"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let opts = RunOptions::default();
    let cycles = |variant| run_kernel(&KernelSpec::new(KernelKind::Relu).with_variant(variant), &opts, None).unwrap().stats.cycles;
    let ratio = cycles(Variant::SplitSingle) as f64 / cycles(Variant::Merge) as f64;
    assert!((v["speedup"].as_f64().unwrap() - ratio).abs() < 0.01, "{} vs {ratio}", v["speedup"]);
}

#[test]
fn mixed_with_empty_kernel_has_unit_speedup() {
    let o = vcluster(&["mixed", "--kernel", "axpy", "--n", "0", "--iterations", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["speedup"].as_f64().unwrap(), 1.0);
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = vcluster(&["run", "--kernel", "fir", "--n", "128", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        assert!(o.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
