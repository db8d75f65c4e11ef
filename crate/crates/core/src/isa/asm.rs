use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use super::{DataChunk, Instr, ModeTarget, Opcode, Operand, Program, DEFAULT_SCRATCHPAD_BYTES, NUM_REGS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmErrorKind {
    UnknownMnemonic(String),
    UndefinedLabel(String),
    DuplicateLabel(String),
    OperandOutOfRange(String),
    Syntax(String),
    Directive(String),
}

impl fmt::Display for AsmErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsmErrorKind::UnknownMnemonic(m) => write!(f, "unknown mnemonic '{m}'"),
            AsmErrorKind::UndefinedLabel(l) => write!(f, "undefined label '{l}'"),
            AsmErrorKind::DuplicateLabel(l) => write!(f, "duplicate label '{l}'"),
            AsmErrorKind::OperandOutOfRange(msg) => write!(f, "operand out of range: {msg}"),
            AsmErrorKind::Syntax(msg) => write!(f, "syntax error: {msg}"),
            AsmErrorKind::Directive(msg) => write!(f, "bad directive: {msg}"),
        }
    }
}

/// Positioned assembly error. Lines and columns are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at line {line}, column {col}")]
pub struct AsmError {
    pub kind: AsmErrorKind,
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AsmOptions {
    pub scratchpad_bytes: u32,
}

impl Default for AsmOptions {
    fn default() -> Self {
        AsmOptions { scratchpad_bytes: DEFAULT_SCRATCHPAD_BYTES }
    }
}

/// Assembles `source` with the default scratchpad size.
pub fn assemble(source: &str) -> Result<Program, AsmError> {
    assemble_with(source, AsmOptions::default())
}

struct Pending {
    instr: Instr,
    label_ref: Option<(String, usize, usize)>,
}

pub fn assemble_with(source: &str, opts: AsmOptions) -> Result<Program, AsmError> {
    let mut pending: Vec<Pending> = Vec::new();
    let mut symbols: BTreeMap<String, usize> = BTreeMap::new();
    let mut program = Program::default();
    let mut entry_refs: Vec<(usize, String, usize, usize)> = Vec::new();

    for (lineno, raw) in source.lines().enumerate() {
        let line_no = lineno + 1;
        let code = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        let mut rest = code;
        let mut offset = 0usize;

        // Leading `label:` definitions, possibly several on one line.
        loop {
            let trimmed = rest.trim_start();
            offset += rest.len() - trimmed.len();
            rest = trimmed;
            let Some(colon) = rest.find(':') else { break };
            let name = &rest[..colon];
            if !is_label_name(name) {
                break;
            }
            if symbols.insert(name.to_string(), pending.len()).is_some() {
                return Err(err(AsmErrorKind::DuplicateLabel(name.into()), line_no, offset));
            }
            rest = &rest[colon + 1..];
            offset += colon + 1;
        }

        let rest_trim = rest.trim_end();
        if rest_trim.is_empty() {
            continue;
        }
        let (head, args_str, args_off) = split_head(rest_trim);

        if head.starts_with('.') {
            let args = split_ws(args_str, offset + args_off);
            match head {
                ".data" => {
                    let chunk = parse_data(&args, line_no, offset, opts)?;
                    program.push_data(chunk.addr, chunk.words);
                }
                ".entry" => {
                    if args.len() != 2 {
                        return Err(err(
                            AsmErrorKind::Directive(".entry expects <core> <label>".into()),
                            line_no,
                            offset,
                        ));
                    }
                    let core = match parse_int(args[0].0) {
                        Some(c @ 0..=1) => c as usize,
                        _ => {
                            return Err(err(
                                AsmErrorKind::OperandOutOfRange(format!("core '{}'", args[0].0)),
                                line_no,
                                args[0].1,
                            ))
                        }
                    };
                    entry_refs.push((core, args[1].0.to_string(), line_no, args[1].1));
                }
                other => {
                    return Err(err(AsmErrorKind::Directive(format!("unknown directive '{other}'")), line_no, offset))
                }
            }
            continue;
        }

        let Some(op) = Opcode::from_mnemonic(head) else {
            return Err(err(AsmErrorKind::UnknownMnemonic(head.into()), line_no, offset));
        };
        pending.push(parse_instr(op, args_str, line_no, offset + args_off)?);
    }

    let len = pending.len();
    let resolve = |name: &str, line: usize, col: usize| -> Result<usize, AsmError> {
        match symbols.get(name) {
            Some(&idx) if idx < len => Ok(idx),
            Some(_) => Err(err(
                AsmErrorKind::OperandOutOfRange(format!("label '{name}' does not precede an instruction")),
                line,
                col,
            )),
            None => Err(err(AsmErrorKind::UndefinedLabel(name.into()), line, col)),
        }
    };

    let mut instrs = Vec::with_capacity(len);
    for p in pending {
        let mut instr = p.instr;
        if let Some((name, line, col)) = p.label_ref {
            instr.imm = resolve(&name, line, col)? as i32;
        }
        instrs.push(instr);
    }

    let mut entries = [None, None];
    if entry_refs.is_empty() {
        if !instrs.is_empty() {
            entries[0] = Some(0);
        }
    } else {
        for (core, name, line, col) in entry_refs {
            entries[core] = Some(resolve(&name, line, col)?);
        }
    }

    Ok(Program { instrs, entries, symbols, ..program })
}

fn err(kind: AsmErrorKind, line: usize, offset: usize) -> AsmError {
    AsmError { kind, line, col: offset + 1 }
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// Splits `mnemonic rest` and returns the byte offset of `rest`.
fn split_head(s: &str) -> (&str, &str, usize) {
    match s.find(char::is_whitespace) {
        Some(i) => {
            let tail = &s[i..];
            let trimmed = tail.trim_start();
            (&s[..i], trimmed, i + (tail.len() - trimmed.len()))
        }
        None => (s, "", s.len()),
    }
}

fn split_ws(s: &str, base: usize) -> Vec<(&str, usize)> {
    let mut out = Vec::new();
    let mut pos = 0;
    for tok in s.split_whitespace() {
        let at = s[pos..].find(tok).map(|i| i + pos).unwrap_or(pos);
        out.push((tok, base + at));
        pos = at + tok.len();
    }
    out
}

fn split_commas(s: &str, base: usize) -> Vec<(&str, usize)> {
    if s.trim().is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0;
    for part in s.split(',') {
        let lead = part.len() - part.trim_start().len();
        out.push((part.trim(), base + start + lead));
        start += part.len() + 1;
    }
    out
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

/// Parses an immediate; accepts the signed 32-bit range and unsigned
/// 32-bit hex/decimal patterns, which wrap to i32.
fn parse_imm(tok: &str, line: usize, col: usize) -> Result<i32, AsmError> {
    let v = parse_int(tok)
        .ok_or_else(|| err(AsmErrorKind::Syntax(format!("expected immediate, found '{tok}'")), line, col))?;
    if v < i64::from(i32::MIN) || v > i64::from(u32::MAX) {
        return Err(err(AsmErrorKind::OperandOutOfRange(format!("immediate {tok}")), line, col));
    }
    Ok(v as u32 as i32)
}

fn parse_reg(tok: &str, prefix: char, line: usize, col: usize) -> Result<u8, AsmError> {
    let body = tok
        .strip_prefix(prefix)
        .filter(|b| !b.is_empty() && b.bytes().all(|c| c.is_ascii_digit()))
        .ok_or_else(|| err(AsmErrorKind::Syntax(format!("expected {prefix}-register, found '{tok}'")), line, col))?;
    match body.parse::<usize>() {
        Ok(n) if n < NUM_REGS => Ok(n as u8),
        _ => Err(err(AsmErrorKind::OperandOutOfRange(format!("register {tok}")), line, col)),
    }
}

fn parse_instr(op: Opcode, args: &str, line: usize, base: usize) -> Result<Pending, AsmError> {
    let spec = op.operands();
    let toks = split_commas(args, base);
    // `modeswitch merge 1` uses a space-separated operand.
    if toks.len() != spec.len() {
        return Err(err(
            AsmErrorKind::Syntax(format!("'{}' expects {} operand(s), found {}", op, spec.len(), toks.len())),
            line,
            base,
        ));
    }
    let mut instr = Instr::new(op);
    let mut label_ref = None;
    for (&kind, &(tok, col)) in spec.iter().zip(&toks) {
        match kind {
            Operand::Xd => instr.rd = parse_reg(tok, 'x', line, col)?,
            Operand::Xs1 => instr.rs1 = parse_reg(tok, 'x', line, col)?,
            Operand::Xs2 => instr.rs2 = parse_reg(tok, 'x', line, col)?,
            Operand::Fd => instr.rd = parse_reg(tok, 'f', line, col)?,
            Operand::Fs1 => instr.rs1 = parse_reg(tok, 'f', line, col)?,
            Operand::Fs2 => instr.rs2 = parse_reg(tok, 'f', line, col)?,
            Operand::Vd => instr.rd = parse_reg(tok, 'v', line, col)?,
            Operand::Vs1 => instr.rs1 = parse_reg(tok, 'v', line, col)?,
            Operand::Vs2 => instr.rs2 = parse_reg(tok, 'v', line, col)?,
            Operand::Imm => instr.imm = parse_imm(tok, line, col)?,
            Operand::Shamt => {
                let v = parse_imm(tok, line, col)?;
                if !(0..32).contains(&v) {
                    return Err(err(AsmErrorKind::OperandOutOfRange(format!("shift amount {tok}")), line, col));
                }
                instr.imm = v;
            }
            Operand::Mem => {
                let open = tok.find('(');
                let (off, reg) = match (open, tok.strip_suffix(')')) {
                    (Some(i), Some(inner)) => (&tok[..i], &inner[i + 1..]),
                    _ => {
                        return Err(err(
                            AsmErrorKind::Syntax(format!("expected offset(xN), found '{tok}'")),
                            line,
                            col,
                        ))
                    }
                };
                instr.imm = if off.trim().is_empty() { 0 } else { parse_imm(off.trim(), line, col)? };
                instr.rs1 = parse_reg(reg.trim(), 'x', line, col + open.unwrap_or(0) + 1)?;
            }
            Operand::VBase => {
                let inner = tok.strip_prefix('(').and_then(|t| t.strip_suffix(')')).ok_or_else(|| {
                    err(AsmErrorKind::Syntax(format!("expected (xN), found '{tok}'")), line, col)
                })?;
                instr.rs1 = parse_reg(inner.trim(), 'x', line, col + 1)?;
            }
            Operand::Label => {
                if !is_label_name(tok) {
                    return Err(err(AsmErrorKind::Syntax(format!("expected label, found '{tok}'")), line, col));
                }
                label_ref = Some((tok.to_string(), line, col));
            }
            Operand::Ew => {
                if tok != "e32" {
                    return Err(err(
                        AsmErrorKind::OperandOutOfRange(format!("element width '{tok}' (only e32)")),
                        line,
                        col,
                    ));
                }
            }
            Operand::CsrVl => {
                if tok != "vl" {
                    return Err(err(AsmErrorKind::OperandOutOfRange(format!("csr '{tok}' (only vl)")), line, col));
                }
            }
            Operand::Mode => {
                let words: Vec<&str> = tok.split_whitespace().collect();
                let target = match words.as_slice() {
                    ["split"] => ModeTarget::Split,
                    ["merge", core] => match parse_int(core) {
                        Some(c @ 0..=1) => ModeTarget::Merge { driver: c as u8 },
                        _ => {
                            return Err(err(
                                AsmErrorKind::OperandOutOfRange(format!("driver core '{core}'")),
                                line,
                                col,
                            ))
                        }
                    },
                    _ => {
                        return Err(err(
                            AsmErrorKind::Syntax(format!("expected 'split' or 'merge <core>', found '{tok}'")),
                            line,
                            col,
                        ))
                    }
                };
                instr.imm = target.to_imm();
            }
        }
    }
    Ok(Pending { instr, label_ref })
}

fn parse_data(args: &[(&str, usize)], line: usize, offset: usize, opts: AsmOptions) -> Result<DataChunk, AsmError> {
    let Some(&(addr_tok, addr_col)) = args.first() else {
        return Err(err(AsmErrorKind::Directive(".data expects <addr> <word>*".into()), line, offset));
    };
    let addr = match parse_int(addr_tok) {
        Some(a) if (0..i64::from(u32::MAX)).contains(&a) && a % 4 == 0 => a as u32,
        Some(_) => {
            return Err(err(
                AsmErrorKind::OperandOutOfRange(format!("data address {addr_tok} (must be word aligned)")),
                line,
                addr_col,
            ))
        }
        None => {
            return Err(err(AsmErrorKind::Syntax(format!("expected address, found '{addr_tok}'")), line, addr_col))
        }
    };
    let mut words = Vec::with_capacity(args.len() - 1);
    for &(tok, col) in &args[1..] {
        words.push(parse_imm(tok, line, col)? as u32);
    }
    let chunk = DataChunk { addr, words };
    if chunk.end() > u64::from(opts.scratchpad_bytes) {
        return Err(err(
            AsmErrorKind::OperandOutOfRange(format!(
                "data [{:#x}, {:#x}) exceeds scratchpad of {} bytes",
                chunk.addr,
                chunk.end(),
                opts.scratchpad_bytes
            )),
            line,
            addr_col,
        ));
    }
    Ok(chunk)
}

const DATA_WORDS_PER_LINE: usize = 8;

/// Renders a program as assembly text. Branch targets get canonical
/// `L<index>` labels.
pub fn disassemble(program: &Program) -> String {
    let mut targets: BTreeSet<usize> = program.instrs.iter().filter_map(Instr::target).collect();
    let default_entries = [(!program.instrs.is_empty()).then_some(0), None];
    let explicit_entries = program.entries != default_entries;
    if explicit_entries {
        targets.extend(program.entries.iter().flatten().copied());
    }

    let mut out = String::new();
    for chunk in &program.data {
        if chunk.words.is_empty() {
            let _ = writeln!(out, ".data {:#x}", chunk.addr);
        }
        for (i, words) in chunk.words.chunks(DATA_WORDS_PER_LINE).enumerate() {
            let _ = write!(out, ".data {:#x}", chunk.addr as usize + 4 * DATA_WORDS_PER_LINE * i);
            for w in words {
                let _ = write!(out, " {w:#x}");
            }
            out.push('\n');
        }
    }
    if explicit_entries {
        for (core, entry) in program.entries.iter().enumerate() {
            if let Some(idx) = entry {
                let _ = writeln!(out, ".entry {core} L{idx}");
            }
        }
    }
    for (idx, instr) in program.instrs.iter().enumerate() {
        if targets.contains(&idx) {
            let _ = writeln!(out, "L{idx}:");
        }
        out.push_str(&format_instr(instr));
        out.push('\n');
    }
    out
}

/// Formats one instruction; label operands print as `L<index>`.
pub(crate) fn format_instr(instr: &Instr) -> String {
    let spec = instr.op.operands();
    let mut s = String::from(instr.op.mnemonic());
    for (i, kind) in spec.iter().enumerate() {
        s.push_str(if i == 0 { " " } else { ", " });
        let _ = match kind {
            Operand::Xd => write!(s, "x{}", instr.rd),
            Operand::Xs1 => write!(s, "x{}", instr.rs1),
            Operand::Xs2 => write!(s, "x{}", instr.rs2),
            Operand::Fd => write!(s, "f{}", instr.rd),
            Operand::Fs1 => write!(s, "f{}", instr.rs1),
            Operand::Fs2 => write!(s, "f{}", instr.rs2),
            Operand::Vd => write!(s, "v{}", instr.rd),
            Operand::Vs1 => write!(s, "v{}", instr.rs1),
            Operand::Vs2 => write!(s, "v{}", instr.rs2),
            Operand::Imm | Operand::Shamt => write!(s, "{}", instr.imm),
            Operand::Mem => write!(s, "{}(x{})", instr.imm, instr.rs1),
            Operand::VBase => write!(s, "(x{})", instr.rs1),
            Operand::Label => write!(s, "L{}", instr.imm),
            Operand::Ew => write!(s, "e32"),
            Operand::CsrVl => write!(s, "vl"),
            Operand::Mode => match ModeTarget::from_imm(instr.imm) {
                ModeTarget::Split => write!(s, "split"),
                ModeTarget::Merge { driver } => write!(s, "merge {driver}"),
            },
        };
    }
    s
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_instr(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_program() {
        let p = assemble("li x1, 5\nhalt").unwrap();
        assert_eq!(p.instrs.len(), 2);
        assert_eq!(p.entries, [Some(0), None]);
        assert_eq!(p.instrs[0].op, Opcode::Li);
        assert_eq!(p.instrs[0].rd, 1);
        assert_eq!(p.instrs[0].imm, 5);
    }

    #[test]
    fn vsetvli_fields() {
        let p = assemble("vsetvli x1, x2, e32").unwrap();
        let i = p.instrs[0];
        assert_eq!((i.op, i.rd, i.rs1), (Opcode::Vsetvli, 1, 2));
        assert!(assemble("vsetvli x1, x2, e16").is_err());
    }

    #[test]
    fn unknown_mnemonic() {
        let e = assemble("frobnicate x1").unwrap_err();
        assert!(e.to_string().starts_with("unknown mnemonic 'frobnicate' at line 1"), "{e}");
        assert_eq!((e.line, e.col), (1, 1));
        let e = assemble("nop\n  frob x1").unwrap_err();
        assert_eq!((e.line, e.col), (2, 3));
    }

    #[test]
    fn label_errors() {
        let e = assemble("beq x1, x2, nowhere\nhalt").unwrap_err();
        assert_eq!(e.kind, AsmErrorKind::UndefinedLabel("nowhere".into()));
        assert_eq!((e.line, e.col), (1, 13));
        let e = assemble("a: nop\na: halt").unwrap_err();
        assert_eq!(e.kind, AsmErrorKind::DuplicateLabel("a".into()));
        assert_eq!(e.line, 2);
    }

    #[test]
    fn operand_range_errors() {
        assert!(matches!(assemble("add x32, x1, x2").unwrap_err().kind, AsmErrorKind::OperandOutOfRange(_)));
        assert!(matches!(assemble("slli x1, x1, 32").unwrap_err().kind, AsmErrorKind::OperandOutOfRange(_)));
        assert!(matches!(assemble("li x1, 0x100000000").unwrap_err().kind, AsmErrorKind::OperandOutOfRange(_)));
        assert!(matches!(assemble("modeswitch merge 2").unwrap_err().kind, AsmErrorKind::OperandOutOfRange(_)));
        assert!(matches!(assemble("csrr x1, mstatus").unwrap_err().kind, AsmErrorKind::OperandOutOfRange(_)));
        assert!(matches!(assemble(".data 0x1fffc 1 2").unwrap_err().kind, AsmErrorKind::OperandOutOfRange(_)));
        assert!(matches!(assemble("add x1, x2").unwrap_err().kind, AsmErrorKind::Syntax(_)));
    }

    #[test]
    fn hex_immediates_wrap() {
        let p = assemble("li x1, 0xffffffff\nli x2, -0x10").unwrap();
        assert_eq!(p.instrs[0].imm, -1);
        assert_eq!(p.instrs[1].imm, -16);
    }

    #[test]
    fn directives_labels_and_comments() {
        let src = "\
# header comment
.data 0x100 1 2 0x3
.entry 0 main
.entry 1 other
main: li x1, 3   # trailing
loop: addi x1, x1, -1
  bne x1, x0, loop
  halt
other:
  modeswitch merge 1
  lw x2, 8(x3)
  vlse32.v v1, (x4), -8
  halt
";
        let p = assemble(src).unwrap();
        assert_eq!(p.instrs.len(), 8);
        assert_eq!(p.entries, [Some(0), Some(4)]);
        assert_eq!(p.data, vec![DataChunk { addr: 0x100, words: vec![1, 2, 3] }]);
        assert_eq!(p.instrs[2].target(), Some(1));
        assert_eq!(p.instrs[4].mode_target(), Some(ModeTarget::Merge { driver: 1 }));
        assert_eq!((p.instrs[5].rd, p.instrs[5].rs1, p.instrs[5].imm), (2, 3, 8));
        assert_eq!((p.instrs[6].rd, p.instrs[6].rs1, p.instrs[6].imm), (1, 4, -8));
    }

    #[test]
    fn disassemble_simple() {
        let p = assemble("li x1, 5\nhalt").unwrap();
        assert_eq!(disassemble(&p), "li x1, 5\nhalt\n");
        assert_eq!(disassemble(&Program::default()), "");
    }

    #[test]
    fn round_trip_with_labels_and_entries() {
        let src = ".data 0 7 8 9 10 11 12 13 14 15 16\n.entry 1 b\na: vsetvli x1, x2, e32\nb: bne x1, x0, a\nmodeswitch split\nhalt";
        let p = assemble(src).unwrap();
        let text = disassemble(&p);
        let q = assemble(&text).unwrap();
        assert!(p.same_code(&q), "{text}");
    }
}
