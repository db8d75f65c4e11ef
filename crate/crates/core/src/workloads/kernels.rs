//! Assembly generators for the vector kernel suite.
//!
//! Register use: `x5` holds `vl`, `x6`/`x9` the 4- and 8-byte pointer bumps,
//! `x10` the remaining element count of the current strip loop. Kernel
//! state lives in `x11` and up.

use std::fmt::Write;
use std::ops::Range;

use rand::Rng;

use super::{oracle, DType, Expected, Generated, KernelKind, KernelSpec, Layout, Region, Variant, WorkloadError, FP_REL_TOL};
use crate::cluster::ClusterConfig;
use crate::isa::assemble;
use crate::vector::VType;

/// Data attached to the image and the region holding the result.
pub(super) struct Image {
    pub chunks: Vec<(Region, Vec<u32>)>,
    pub output: Region,
    pub expected: Expected,
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|f| f.to_bits()).collect()
}

fn expected(dtype: DType, words: Vec<u32>) -> Expected {
    match dtype {
        DType::I32 => Expected::Exact(words),
        DType::F32 => Expected::Approx { values: words.into_iter().map(f32::from_bits).collect(), rel_tol: FP_REL_TOL },
    }
}

/// Random inputs: small signed integers, or floats in `[lo, hi)`.
fn inputs(rng: &mut impl Rng, dtype: DType, len: u32, lo: f32, hi: f32) -> Vec<u32> {
    (0..len)
        .map(|_| match dtype {
            DType::I32 => rng.gen_range(-64i32..64) as u32,
            DType::F32 => rng.gen_range(lo..hi).to_bits(),
        })
        .collect()
}

fn f32s(words: &[u32]) -> Vec<f32> {
    words.iter().map(|&w| f32::from_bits(w)).collect()
}

/// Partition of `[0, total)` over the cores that run the kernel.
fn parts(total: u32, variant: Variant) -> Vec<Range<u32>> {
    match variant {
        Variant::SplitDual => {
            let mid = total.div_ceil(2);
            vec![0..mid, mid..total]
        }
        Variant::SplitSingle | Variant::Merge => std::iter::once(0..total).collect(),
    }
}

/// Pointer advanced by `elem_bytes` per element each strip.
#[derive(Clone, Copy)]
struct Ptr {
    reg: u8,
    elem_bytes: u8,
}

fn p4(reg: u8) -> Ptr {
    Ptr { reg, elem_bytes: 4 }
}

fn p8(reg: u8) -> Ptr {
    Ptr { reg, elem_bytes: 8 }
}

/// Strip-mined loop over `x10` elements. Skipped entirely when `x10 == 0`.
fn strip_loop(out: &mut String, label: &str, ptrs: &[Ptr], body: &str) {
    let _ = writeln!(out, "beq x10, x0, {label}_done");
    let _ = writeln!(out, "{label}:");
    out.push_str("vsetvli x5, x10, e32\n");
    out.push_str(body);
    if ptrs.iter().any(|p| p.elem_bytes == 4) {
        out.push_str("slli x6, x5, 2\n");
    }
    if ptrs.iter().any(|p| p.elem_bytes == 8) {
        out.push_str("slli x9, x5, 3\n");
    }
    for p in ptrs {
        let bump = if p.elem_bytes == 4 { 6 } else { 9 };
        let _ = writeln!(out, "add x{0}, x{0}, x{bump}", p.reg);
    }
    out.push_str("sub x10, x10, x5\n");
    let _ = writeln!(out, "bne x10, x0, {label}");
    let _ = writeln!(out, "{label}_done:");
}

/// End-of-kernel synchronization for one core.
fn sync(variant: Variant) -> &'static str {
    match variant {
        Variant::SplitDual => "fence.vec\nbarrier\n",
        _ => "fence.vec\n",
    }
}

/// Wraps per-core bodies with entry points and `halt`; core 0 optionally
/// starts by taking over both vector units.
pub(super) fn wrap(merge: bool, bodies: &[String]) -> String {
    let mut s = String::new();
    for c in 0..bodies.len() {
        let _ = writeln!(s, ".entry {c} core{c}");
    }
    for (c, body) in bodies.iter().enumerate() {
        let _ = writeln!(s, "core{c}:");
        if merge && c == 0 {
            s.push_str("modeswitch merge 0\n");
        }
        s.push_str(body);
        s.push_str("halt\n");
    }
    s
}

fn axpy(spec: &KernelSpec, lay: &mut Layout, rng: &mut impl Rng) -> (Image, Vec<String>) {
    let n = spec.n;
    let (x, y, a) = (lay.alloc(n), lay.alloc(n), lay.alloc(1));
    let xs = inputs(rng, spec.dtype, n, -1.0, 1.0);
    let ys = inputs(rng, spec.dtype, n, -1.0, 1.0);
    let av = match spec.dtype {
        DType::I32 => rng.gen_range(-8i32..8) as u32,
        DType::F32 => rng.gen_range(-2.0f32..2.0).to_bits(),
    };
    let want = match spec.dtype {
        DType::I32 => oracle::axpy_i32(av, &xs, &ys),
        DType::F32 => bits(&oracle::axpy_f32(f32::from_bits(av), &f32s(&xs), &f32s(&ys))),
    };
    let (load_a, mul) = match spec.dtype {
        DType::I32 => ("lw x15, 0(x7)", "vmul.vx v3, v1, x15"),
        DType::F32 => ("flw f1, 0(x7)", "vfmul.vf v3, v1, f1"),
    };
    let add = if spec.dtype == DType::F32 { "vfadd.vv" } else { "vadd.vv" };
    let bodies = parts(n, spec.variant)
        .into_iter()
        .enumerate()
        .map(|(c, r)| {
            let mut s = String::new();
            let _ = writeln!(s, "li x10, {}", r.len());
            let _ = writeln!(s, "li x11, {}", x.addr + 4 * r.start);
            let _ = writeln!(s, "li x12, {}", y.addr + 4 * r.start);
            let _ = writeln!(s, "li x7, {}\n{load_a}", a.addr);
            let body = format!("vle32.v v1, (x11)\nvle32.v v2, (x12)\n{mul}\n{add} v4, v3, v2\nvse32.v v4, (x12)\n");
            strip_loop(&mut s, &format!("c{c}_strip"), &[p4(11), p4(12)], &body);
            s.push_str(sync(spec.variant));
            s
        })
        .collect();
    let image = Image { chunks: vec![(x, xs), (y, ys), (a, vec![av])], output: y, expected: expected(spec.dtype, want) };
    (image, bodies)
}

fn dotp(spec: &KernelSpec, cfg: &ClusterConfig, lay: &mut Layout, rng: &mut impl Rng) -> (Image, Vec<String>) {
    let n = spec.n;
    // Accumulators must cover a whole merge-mode vector.
    let acc_words = VType::new(cfg.vector.vlen, true).vlmax();
    let (x, y) = (lay.alloc(n), lay.alloc(n));
    let ranges = parts(n, spec.variant);
    let accs: Vec<Region> = ranges.iter().map(|_| lay.alloc(acc_words)).collect();
    let result = lay.alloc(1);
    // Non-negative fp inputs keep the sum free of cancellation.
    let xs = inputs(rng, spec.dtype, n, 0.0, 1.0);
    let ys = inputs(rng, spec.dtype, n, 0.0, 1.0);
    let (fp, want) = match spec.dtype {
        DType::I32 => (false, oracle::dotp_i32(&xs, &ys)),
        DType::F32 => (true, oracle::dotp_f32(&f32s(&xs), &f32s(&ys)).to_bits()),
    };
    let (mul, red) = if fp { ("vfmul.vv", "vfredsum.vs") } else { ("vmul.vv", "vredsum.vs") };
    let (ld, st, add) = if fp { ("flw f", "fsw f", "fadd.s f1, f1, f2") } else { ("lw x", "sw x", "add x15, x15, x16") };
    let (r1, r2) = if fp { ("1", "2") } else { ("15", "16") };
    let bodies = ranges
        .iter()
        .enumerate()
        .map(|(c, r)| {
            let mut s = String::new();
            let _ = writeln!(s, "li x10, {}", r.len());
            let _ = writeln!(s, "li x11, {}", x.addr + 4 * r.start);
            let _ = writeln!(s, "li x12, {}", y.addr + 4 * r.start);
            let _ = writeln!(s, "li x13, {}", accs[c].addr);
            let body = format!(
                "vle32.v v1, (x11)\nvle32.v v2, (x12)\n{mul} v3, v1, v2\nvle32.v v4, (x13)\n{red} v4, v3, v4\nvse32.v v4, (x13)\n"
            );
            strip_loop(&mut s, &format!("c{c}_strip"), &[p4(11), p4(12)], &body);
            s.push_str(sync(spec.variant));
            if c == 0 {
                let _ = writeln!(s, "{ld}{r1}, 0(x13)");
                if let Some(other) = accs.get(1) {
                    let _ = writeln!(s, "li x14, {}\n{ld}{r2}, 0(x14)\n{add}", other.addr);
                }
                let _ = writeln!(s, "li x14, {}\n{st}{r1}, 0(x14)", result.addr);
            }
            s
        })
        .collect();
    let image = Image { chunks: vec![(x, xs), (y, ys)], output: result, expected: expected(spec.dtype, vec![want]) };
    (image, bodies)
}

fn matmul(spec: &KernelSpec, lay: &mut Layout, rng: &mut impl Rng) -> (Image, Vec<String>) {
    let (m, k, n) = (spec.m, spec.k, spec.n);
    let (a, b, cm) = (lay.alloc(m * k), lay.alloc(k * n), lay.alloc(m * n));
    let av = inputs(rng, spec.dtype, m * k, -1.0, 1.0);
    let bv = inputs(rng, spec.dtype, k * n, -1.0, 1.0);
    let (mu, ku, nu) = (m as usize, k as usize, n as usize);
    let want = match spec.dtype {
        DType::I32 => oracle::matmul_i32(&av, &bv, mu, ku, nu),
        DType::F32 => bits(&oracle::matmul_f32(&f32s(&av), &f32s(&bv), mu, ku, nu)),
    };
    let (zero, load, mul, add) = match spec.dtype {
        DType::I32 => ("vmv.v.x v1, x0", "lw x17, 0(x14)", "vmul.vx v3, v2, x17", "vadd.vv v1, v1, v3"),
        DType::F32 => ("vfmv.v.f v1, f0", "flw f1, 0(x14)", "vfmul.vf v3, v2, f1", "vfadd.vv v1, v1, v3"),
    };
    let bodies = parts(m, spec.variant)
        .into_iter()
        .enumerate()
        .map(|(c, rows)| {
            let p = format!("c{c}");
            let mut s = String::new();
            let _ = writeln!(s, "li x20, {}", rows.len());
            let _ = writeln!(s, "li x21, {}", a.addr + 4 * k * rows.start);
            let _ = writeln!(s, "li x22, {}", cm.addr + 4 * n * rows.start);
            let _ = writeln!(s, "li x23, {}\nli x24, {}", 4 * k, 4 * n);
            let _ = writeln!(s, "{p}_row:\nbeq x20, x0, {p}_rows_done");
            let _ = writeln!(s, "li x10, {n}\nli x11, {}\nmv x12, x22", b.addr);
            let body = format!(
                "{zero}\nmv x14, x21\nmv x15, x11\nli x16, {k}\nbeq x16, x0, {p}_k_done\n{p}_k:\n{load}\n\
                 vle32.v v2, (x15)\n{mul}\n{add}\naddi x14, x14, 4\nadd x15, x15, x24\naddi x16, x16, -1\n\
                 bne x16, x0, {p}_k\n{p}_k_done:\nvse32.v v1, (x12)\n"
            );
            strip_loop(&mut s, &format!("{p}_strip"), &[p4(11), p4(12)], &body);
            let _ = writeln!(s, "add x21, x21, x23\nadd x22, x22, x24\naddi x20, x20, -1\njal x0, {p}_row");
            let _ = writeln!(s, "{p}_rows_done:");
            s.push_str(sync(spec.variant));
            s
        })
        .collect();
    let image = Image { chunks: vec![(a, av), (b, bv)], output: cm, expected: expected(spec.dtype, want) };
    (image, bodies)
}

fn fir(spec: &KernelSpec, lay: &mut Layout, rng: &mut impl Rng) -> (Image, Vec<String>) {
    let (n, taps) = (spec.n, spec.taps);
    let (x, h, y) = (lay.alloc(n + taps - 1), lay.alloc(taps), lay.alloc(n));
    let xs = inputs(rng, spec.dtype, n + taps - 1, -1.0, 1.0);
    let hs = inputs(rng, spec.dtype, taps, -1.0, 1.0);
    let want = match spec.dtype {
        DType::I32 => oracle::fir_i32(&xs, &hs, n as usize),
        DType::F32 => bits(&oracle::fir_f32(&f32s(&xs), &f32s(&hs), n as usize)),
    };
    let (zero, load, mul, add) = match spec.dtype {
        DType::I32 => ("vmv.v.x v1, x0", "lw x17, 0(x15)", "vmul.vx v3, v2, x17", "vadd.vv v1, v1, v3"),
        DType::F32 => ("vfmv.v.f v1, f0", "flw f1, 0(x15)", "vfmul.vf v3, v2, f1", "vfadd.vv v1, v1, v3"),
    };
    let bodies = parts(n, spec.variant)
        .into_iter()
        .enumerate()
        .map(|(c, r)| {
            let p = format!("c{c}");
            let mut s = String::new();
            let _ = writeln!(s, "li x10, {}", r.len());
            let _ = writeln!(s, "li x11, {}", x.addr + 4 * r.start);
            let _ = writeln!(s, "li x12, {}", y.addr + 4 * r.start);
            let body = format!(
                "{zero}\nmv x14, x11\nli x15, {}\nli x16, {taps}\n{p}_tap:\n{load}\nvle32.v v2, (x14)\n{mul}\n{add}\n\
                 addi x14, x14, 4\naddi x15, x15, 4\naddi x16, x16, -1\nbne x16, x0, {p}_tap\nvse32.v v1, (x12)\n",
                h.addr
            );
            strip_loop(&mut s, &format!("{p}_strip"), &[p4(11), p4(12)], &body);
            s.push_str(sync(spec.variant));
            s
        })
        .collect();
    let image = Image { chunks: vec![(x, xs), (h, hs)], output: y, expected: expected(spec.dtype, want) };
    (image, bodies)
}

fn relu(spec: &KernelSpec, lay: &mut Layout, rng: &mut impl Rng) -> (Image, Vec<String>) {
    let n = spec.n;
    let (x, y) = (lay.alloc(n), lay.alloc(n));
    let xs = inputs(rng, spec.dtype, n, -1.0, 1.0);
    let want = oracle::relu(&xs);
    let bodies = parts(n, spec.variant)
        .into_iter()
        .enumerate()
        .map(|(c, r)| {
            let mut s = String::new();
            let _ = writeln!(s, "li x10, {}", r.len());
            let _ = writeln!(s, "li x11, {}", x.addr + 4 * r.start);
            let _ = writeln!(s, "li x12, {}", y.addr + 4 * r.start);
            let body = "vle32.v v1, (x11)\nvmax.vx v2, v1, x0\nvse32.v v2, (x12)\n";
            strip_loop(&mut s, &format!("c{c}_strip"), &[p4(11), p4(12)], body);
            s.push_str(sync(spec.variant));
            s
        })
        .collect();
    // The signed-max trick is exact for fp32 too, so compare bit for bit.
    let image = Image { chunks: vec![(x, xs)], output: y, expected: Expected::Exact(want) };
    (image, bodies)
}

/// Constant-geometry radix-2 FFT over bit-reversed input.
///
/// Stage `s`, butterfly `b` reads `X[2b]` and `X[2b+1]` (stride-2 loads) and
/// writes `Y[b]` and `Y[b + n/2]` (unit-stride stores), ping-ponging between
/// two buffers. Each buffer holds `n` real parts followed by `n` imaginary
/// parts. Twiddles are tabulated per stage and butterfly.
fn fft(spec: &KernelSpec, lay: &mut Layout, rng: &mut impl Rng) -> (Image, Vec<String>) {
    let n = spec.n;
    let half = n / 2;
    let stages = n.trailing_zeros();
    let bufs = [lay.alloc(2 * n), lay.alloc(2 * n)];
    let tw: Vec<(Region, Region)> = (0..stages).map(|_| (lay.alloc(half), lay.alloc(half))).collect();

    let re: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let im: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let (want_re, want_im) = oracle::fft_f32(&re, &im);

    let mut chunks = Vec::new();
    let rev = |v: &[f32]| -> Vec<u32> { (0..n as usize).map(|i| v[oracle::bit_reverse(i, stages)].to_bits()).collect() };
    let mut input = rev(&re);
    input.extend(rev(&im));
    chunks.push((bufs[0], input));
    for (s, (twr, twi)) in tw.iter().enumerate() {
        let shift = stages - 1 - s as u32;
        let (wr, wi): (Vec<u32>, Vec<u32>) = (0..half as usize)
            .map(|b| {
                let (r, i) = oracle::twiddle((b >> shift) << shift, n as usize);
                (r.to_bits(), i.to_bits())
            })
            .unzip();
        chunks.push((*twr, wr));
        chunks.push((*twi, wi));
    }

    let body = "vlse32.v v1, (x11), 8\nvlse32.v v2, (x12), 8\nvlse32.v v3, (x13), 8\nvlse32.v v4, (x14), 8\n\
                vle32.v v5, (x19)\nvle32.v v6, (x20)\n\
                vfmul.vv v7, v5, v3\nvfmul.vv v8, v6, v4\nvfsub.vv v9, v7, v8\n\
                vfmul.vv v10, v5, v4\nvfmul.vv v11, v6, v3\nvfadd.vv v12, v10, v11\n\
                vfadd.vv v13, v1, v9\nvfadd.vv v14, v2, v12\nvfsub.vv v15, v1, v9\nvfsub.vv v16, v2, v12\n\
                vse32.v v13, (x15)\nvse32.v v14, (x16)\nvse32.v v15, (x17)\nvse32.v v16, (x18)\n";
    let ptrs = [p8(11), p8(12), p8(13), p8(14), p4(15), p4(16), p4(17), p4(18), p4(19), p4(20)];
    let bodies = parts(half, spec.variant)
        .into_iter()
        .enumerate()
        .map(|(c, r)| {
            let mut s = String::new();
            for st in 0..stages as usize {
                let (src, dst) = (bufs[st % 2].addr, bufs[(st + 1) % 2].addr);
                let (twr, twi) = (tw[st].0.addr, tw[st].1.addr);
                let (src_im, dst_im) = (src + 4 * n, dst + 4 * n);
                let b0 = r.start;
                let _ = writeln!(s, "li x10, {}", r.len());
                let _ = writeln!(s, "li x11, {}\nli x12, {}", src + 8 * b0, src_im + 8 * b0);
                let _ = writeln!(s, "li x13, {}\nli x14, {}", src + 8 * b0 + 4, src_im + 8 * b0 + 4);
                let _ = writeln!(s, "li x15, {}\nli x16, {}", dst + 4 * b0, dst_im + 4 * b0);
                let _ = writeln!(s, "li x17, {}\nli x18, {}", dst + 4 * (b0 + half), dst_im + 4 * (b0 + half));
                let _ = writeln!(s, "li x19, {}\nli x20, {}", twr + 4 * b0, twi + 4 * b0);
                strip_loop(&mut s, &format!("c{c}_s{st}"), &ptrs, body);
                // Stages exchange data across cores only in the dual layout.
                if spec.variant == Variant::SplitDual {
                    s.push_str("fence.vec\nbarrier\n");
                }
            }
            if spec.variant != Variant::SplitDual {
                s.push_str("fence.vec\n");
            }
            s
        })
        .collect();

    let mut want = want_re;
    want.extend(want_im);
    let output = bufs[stages as usize % 2];
    let image = Image { chunks, output, expected: expected(DType::F32, bits(&want)) };
    (image, bodies)
}

/// Per-core code and data of `spec`, allocated from `lay`.
pub(super) fn build(spec: &KernelSpec, cfg: &ClusterConfig, lay: &mut Layout) -> (Image, Vec<String>) {
    let mut rng = super::rng(spec.seed);
    match spec.kind {
        KernelKind::Axpy => axpy(spec, lay, &mut rng),
        KernelKind::Dotp => dotp(spec, cfg, lay, &mut rng),
        KernelKind::Matmul => matmul(spec, lay, &mut rng),
        KernelKind::Fir => fir(spec, lay, &mut rng),
        KernelKind::Relu => relu(spec, lay, &mut rng),
        KernelKind::Fft => fft(spec, lay, &mut rng),
    }
}

pub(super) fn generate(spec: &KernelSpec, cfg: &ClusterConfig) -> Result<Generated, WorkloadError> {
    let mut lay = Layout::new(0, cfg.scratchpad_bytes);
    let (image, bodies) = build(spec, cfg, &mut lay);
    let footprint = lay.finish()?;
    let mut program = assemble(&wrap(spec.variant == Variant::Merge, &bodies))?;
    for (region, words) in image.chunks {
        program.push_data(region.addr, words);
    }
    Ok(Generated { program, output: image.output, expected: image.expected, footprint })
}
