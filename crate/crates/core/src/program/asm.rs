//! A small two-pass RV32I assembler for test fixtures and kernels.
//!
//! Registers are written `x0`..`x31`. CSRs may be named or numeric. Branch
//! and jump targets are labels or numeric byte offsets. Comments start with
//! `#`, `;` or `//`.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{LoadedImage, Segment};
use crate::arch::csr;
use crate::isa::{Instruction, Mnemonic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct AsmError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmProgram {
    /// Contiguous runs of bytes keyed by start address.
    pub chunks: Vec<Segment>,
    pub symbols: BTreeMap<String, u32>,
    /// `_start` if defined, otherwise the base address.
    pub entry: u32,
}

impl AsmProgram {
    pub fn to_image(&self) -> LoadedImage {
        LoadedImage {
            segments: self.chunks.iter().filter(|c| !c.data.is_empty()).cloned().collect(),
            entry: self.entry,
            symbols: self.symbols.clone(),
        }
    }

    /// Number of instruction or data words emitted.
    pub fn size(&self) -> usize {
        self.chunks.iter().map(|c| c.data.len()).sum()
    }
}

enum Item<'a> {
    Op { mnemonic: &'a str, args: Vec<&'a str> },
    Word(Vec<&'a str>),
    Bytes(Vec<u8>),
    Org(u32),
    Align(u32),
}

struct Line<'a> {
    number: usize,
    addr: u32,
    item: Item<'a>,
}

fn err(line: usize, message: impl Into<String>) -> AsmError {
    AsmError {
        line,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    let mut end = line.len();
    let mut in_string = false;
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'"' => in_string = !in_string,
            b'#' | b';' if !in_string => {
                end = i;
                break;
            }
            b'/' if !in_string && bytes.get(i + 1) == Some(&b'/') => {
                end = i;
                break;
            }
            _ => {}
        }
    }
    &line[..end]
}

fn split_args(text: &str) -> Vec<&str> {
    if text.trim().is_empty() {
        return Vec::new();
    }
    text.split(',').map(str::trim).collect()
}

fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&hex.replace('_', ""), 16).ok()?
    } else if let Some(bin) = body.strip_prefix("0b") {
        i64::from_str_radix(&bin.replace('_', ""), 2).ok()?
    } else {
        body.replace('_', "").parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_string(s: &str) -> Option<Vec<u8>> {
    let inner = s.trim().strip_prefix('"')?.strip_suffix('"')?;
    let mut out = Vec::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(match chars.next()? {
                'n' => b'\n',
                't' => b'\t',
                '0' => 0,
                '\\' => b'\\',
                '"' => b'"',
                _ => return None,
            });
        } else {
            let mut buf = [0u8; 4];
            out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
        }
    }
    Some(out)
}

/// Instruction words a source line expands to; fixed in the first pass.
fn op_words(mnemonic: &str, args: &[&str]) -> u32 {
    match mnemonic {
        "la" => 2,
        "li" => match args.get(1).and_then(|a| parse_int(a)) {
            Some(v) if (-2048..2048).contains(&(v as u32 as i32)) => 1,
            _ => 2,
        },
        _ => 1,
    }
}

struct Ctx<'a> {
    symbols: &'a BTreeMap<String, u32>,
    line: usize,
}

impl Ctx<'_> {
    fn err(&self, message: impl Into<String>) -> AsmError {
        err(self.line, message)
    }

    fn reg(&self, s: &str) -> Result<u8, AsmError> {
        s.trim()
            .strip_prefix('x')
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|&n| n < 32)
            .ok_or_else(|| self.err(format!("bad register `{s}`")))
    }

    /// Integer, label, or `label+n` / `label-n`.
    fn value(&self, s: &str) -> Result<i64, AsmError> {
        let s = s.trim();
        if let Some(v) = parse_int(s) {
            return Ok(v);
        }
        let (name, offset) = match s.find(['+', '-']) {
            Some(pos) if pos > 0 => {
                let off = parse_int(&s[pos..]).ok_or_else(|| self.err(format!("bad offset in `{s}`")))?;
                (s[..pos].trim(), off)
            }
            _ => (s, 0),
        };
        self.symbols
            .get(name)
            .map(|&a| a as i64 + offset)
            .ok_or_else(|| self.err(format!("unknown symbol `{name}`")))
    }

    fn csr(&self, s: &str) -> Result<u16, AsmError> {
        let s = s.trim();
        if let Some(addr) = csr::from_name(s) {
            return Ok(addr);
        }
        parse_int(s)
            .filter(|v| (0..4096).contains(v))
            .map(|v| v as u16)
            .ok_or_else(|| self.err(format!("bad CSR `{s}`")))
    }

    /// `imm(reg)` memory operand.
    fn mem(&self, s: &str) -> Result<(i64, u8), AsmError> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| self.err(format!("expected offset(reg), got `{s}`")))?;
        let close = s.rfind(')').ok_or_else(|| self.err(format!("missing `)` in `{s}`")))?;
        let imm = if s[..open].trim().is_empty() {
            0
        } else {
            self.value(&s[..open])?
        };
        Ok((imm, self.reg(&s[open + 1..close])?))
    }

    /// Branch or jump target relative to `pc`.
    fn target(&self, s: &str, pc: u32) -> Result<i64, AsmError> {
        let s = s.trim();
        match parse_int(s) {
            Some(offset) => Ok(offset),
            None => Ok(self.value(s)? - pc as i64),
        }
    }

    fn build(&self, m: Mnemonic, rd: u8, rs1: u8, rs2: u8, imm: i64, addr: u16) -> Result<Instruction, AsmError> {
        let imm = i32::try_from(imm)
            .or_else(|_| u32::try_from(imm).map(|v| v as i32))
            .map_err(|_| self.err(format!("immediate {imm} out of range")))?;
        Instruction::new(m, rd, rs1, rs2, imm, addr).map_err(|e| self.err(e.to_string()))
    }
}

fn expect_args(ctx: &Ctx, args: &[&str], n: usize, mnemonic: &str) -> Result<(), AsmError> {
    if args.len() != n {
        return Err(ctx.err(format!("`{mnemonic}` takes {n} operands, got {}", args.len())));
    }
    Ok(())
}

/// Split a 32-bit constant into `lui` and `addi` parts.
fn hi_lo(value: u32) -> (i64, i64) {
    let lo = ((value << 20) as i32 >> 20) as i64;
    let hi = value.wrapping_sub(lo as u32) as i64;
    (hi & 0xFFFF_F000, lo)
}

fn encode_op(ctx: &Ctx, pc: u32, mnemonic: &str, args: &[&str]) -> Result<Vec<Instruction>, AsmError> {
    use Mnemonic::*;
    let one = |i: Instruction| Ok(vec![i]);
    // Pseudo-instructions first.
    match mnemonic {
        "nop" => {
            expect_args(ctx, args, 0, mnemonic)?;
            return one(ctx.build(Addi, 0, 0, 0, 0, 0)?);
        }
        "li" | "la" => {
            expect_args(ctx, args, 2, mnemonic)?;
            let rd = ctx.reg(args[0])?;
            let value = ctx.value(args[1])?;
            if !(-(1i64 << 31)..(1i64 << 32)).contains(&value) {
                return Err(ctx.err(format!("constant {value} does not fit in 32 bits")));
            }
            if op_words(mnemonic, args) == 1 {
                return one(ctx.build(Addi, rd, 0, 0, value as u32 as i32 as i64, 0)?);
            }
            let (hi, lo) = hi_lo(value as u32);
            return Ok(vec![ctx.build(Lui, rd, 0, 0, hi, 0)?, ctx.build(Addi, rd, rd, 0, lo, 0)?]);
        }
        "mv" => {
            expect_args(ctx, args, 2, mnemonic)?;
            return one(ctx.build(Addi, ctx.reg(args[0])?, ctx.reg(args[1])?, 0, 0, 0)?);
        }
        "not" => {
            expect_args(ctx, args, 2, mnemonic)?;
            return one(ctx.build(Xori, ctx.reg(args[0])?, ctx.reg(args[1])?, 0, -1, 0)?);
        }
        "j" => {
            expect_args(ctx, args, 1, mnemonic)?;
            return one(ctx.build(Jal, 0, 0, 0, ctx.target(args[0], pc)?, 0)?);
        }
        "jr" => {
            expect_args(ctx, args, 1, mnemonic)?;
            return one(ctx.build(Jalr, 0, ctx.reg(args[0])?, 0, 0, 0)?);
        }
        "ret" => {
            expect_args(ctx, args, 0, mnemonic)?;
            return one(ctx.build(Jalr, 0, 1, 0, 0, 0)?);
        }
        "beqz" | "bnez" => {
            expect_args(ctx, args, 2, mnemonic)?;
            let m = if mnemonic == "beqz" { Beq } else { Bne };
            return one(ctx.build(m, 0, ctx.reg(args[0])?, 0, ctx.target(args[1], pc)?, 0)?);
        }
        "csrr" => {
            expect_args(ctx, args, 2, mnemonic)?;
            return one(ctx.build(Csrrs, ctx.reg(args[0])?, 0, 0, 0, ctx.csr(args[1])?)?);
        }
        "csrw" | "csrs" | "csrc" => {
            expect_args(ctx, args, 2, mnemonic)?;
            let m = match mnemonic {
                "csrw" => Csrrw,
                "csrs" => Csrrs,
                _ => Csrrc,
            };
            return one(ctx.build(m, 0, ctx.reg(args[1])?, 0, 0, ctx.csr(args[0])?)?);
        }
        "csrwi" | "csrsi" | "csrci" => {
            expect_args(ctx, args, 2, mnemonic)?;
            let m = match mnemonic {
                "csrwi" => Csrrwi,
                "csrsi" => Csrrsi,
                _ => Csrrci,
            };
            return one(ctx.build(m, 0, 0, 0, ctx.value(args[1])?, ctx.csr(args[0])?)?);
        }
        _ => {}
    }

    let m = Mnemonic::from_name(mnemonic).ok_or_else(|| ctx.err(format!("unknown instruction `{mnemonic}`")))?;
    let inst = match m {
        Lui | Auipc => {
            expect_args(ctx, args, 2, mnemonic)?;
            let v = ctx.value(args[1])?;
            if !(0..1 << 20).contains(&v) && !(-(1 << 19)..0).contains(&v) {
                return Err(ctx.err(format!("upper immediate {v} out of range")));
            }
            ctx.build(m, ctx.reg(args[0])?, 0, 0, (v << 12) as i32 as i64, 0)?
        }
        Jal => match args.len() {
            1 => ctx.build(m, 1, 0, 0, ctx.target(args[0], pc)?, 0)?,
            _ => {
                expect_args(ctx, args, 2, mnemonic)?;
                ctx.build(m, ctx.reg(args[0])?, 0, 0, ctx.target(args[1], pc)?, 0)?
            }
        },
        Jalr => match args.len() {
            1 => ctx.build(m, 1, ctx.reg(args[0])?, 0, 0, 0)?,
            2 => {
                let (imm, rs1) = ctx.mem(args[1])?;
                ctx.build(m, ctx.reg(args[0])?, rs1, 0, imm, 0)?
            }
            _ => {
                expect_args(ctx, args, 3, mnemonic)?;
                ctx.build(m, ctx.reg(args[0])?, ctx.reg(args[1])?, 0, ctx.value(args[2])?, 0)?
            }
        },
        Beq | Bne | Blt | Bge | Bltu | Bgeu => {
            expect_args(ctx, args, 3, mnemonic)?;
            ctx.build(m, 0, ctx.reg(args[0])?, ctx.reg(args[1])?, ctx.target(args[2], pc)?, 0)?
        }
        Lb | Lh | Lw | Lbu | Lhu => {
            expect_args(ctx, args, 2, mnemonic)?;
            let (imm, rs1) = ctx.mem(args[1])?;
            ctx.build(m, ctx.reg(args[0])?, rs1, 0, imm, 0)?
        }
        Sb | Sh | Sw => {
            expect_args(ctx, args, 2, mnemonic)?;
            let (imm, rs1) = ctx.mem(args[1])?;
            ctx.build(m, 0, rs1, ctx.reg(args[0])?, imm, 0)?
        }
        Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => {
            expect_args(ctx, args, 3, mnemonic)?;
            ctx.build(m, ctx.reg(args[0])?, ctx.reg(args[1])?, 0, ctx.value(args[2])?, 0)?
        }
        Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And => {
            expect_args(ctx, args, 3, mnemonic)?;
            ctx.build(m, ctx.reg(args[0])?, ctx.reg(args[1])?, ctx.reg(args[2])?, 0, 0)?
        }
        // Ordering operands of fence are accepted and ignored.
        Fence => ctx.build(m, 0, 0, 0, 0, 0)?,
        FenceI | Ecall | Ebreak | Mret | Wfi => {
            expect_args(ctx, args, 0, mnemonic)?;
            ctx.build(m, 0, 0, 0, 0, 0)?
        }
        Csrrw | Csrrs | Csrrc => {
            expect_args(ctx, args, 3, mnemonic)?;
            ctx.build(m, ctx.reg(args[0])?, ctx.reg(args[2])?, 0, 0, ctx.csr(args[1])?)?
        }
        Csrrwi | Csrrsi | Csrrci => {
            expect_args(ctx, args, 3, mnemonic)?;
            ctx.build(m, ctx.reg(args[0])?, 0, 0, ctx.value(args[2])?, ctx.csr(args[1])?)?
        }
    };
    one(inst)
}

/// Assemble `source` with the first instruction at `base`.
pub fn assemble(source: &str, base: u32) -> Result<AsmProgram, AsmError> {
    // Pass 1: lay out addresses and collect labels.
    let mut symbols = BTreeMap::new();
    let mut lines = Vec::new();
    let mut addr = base as u64;
    for (idx, raw_line) in source.lines().enumerate() {
        let number = idx + 1;
        let mut text = strip_comment(raw_line).trim();
        while let Some(colon) = text.find(':') {
            let label = text[..colon].trim();
            if label.is_empty() || !label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                break;
            }
            if symbols.insert(label.to_string(), addr as u32).is_some() {
                return Err(err(number, format!("duplicate label `{label}`")));
            }
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }
        let (head, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let head = head.to_ascii_lowercase();
        let item = match head.as_str() {
            ".org" => {
                let v = parse_int(rest).filter(|v| (0..=u32::MAX as i64).contains(v));
                let v = v.ok_or_else(|| err(number, format!("bad .org address `{rest}`")))?;
                Item::Org(v as u32)
            }
            ".align" => {
                let v = parse_int(rest).filter(|v| (0..=12).contains(v));
                Item::Align(1 << v.ok_or_else(|| err(number, "bad .align"))?)
            }
            ".word" => Item::Word(split_args(rest)),
            ".byte" => Item::Bytes(
                split_args(rest)
                    .into_iter()
                    .map(|a| parse_int(a).filter(|v| (-128..256).contains(v)).map(|v| v as u8))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| err(number, "bad .byte value"))?,
            ),
            ".ascii" | ".asciz" => {
                let mut bytes = parse_string(rest).ok_or_else(|| err(number, "bad string literal"))?;
                if head == ".asciz" {
                    bytes.push(0);
                }
                Item::Bytes(bytes)
            }
            ".text" | ".data" | ".globl" | ".global" | ".section" => continue,
            d if d.starts_with('.') => return Err(err(number, format!("unknown directive `{d}`"))),
            _ => Item::Op {
                mnemonic: text.split_whitespace().next().unwrap_or(""),
                args: split_args(rest),
            },
        };
        let size = match &item {
            Item::Org(target) => {
                if (*target as u64) < addr {
                    return Err(err(number, format!(".org {target:#x} moves backwards")));
                }
                addr = *target as u64;
                0
            }
            Item::Align(n) => (addr.next_multiple_of(*n as u64) - addr) as u32,
            Item::Word(words) => 4 * words.len() as u32,
            Item::Bytes(b) => b.len() as u32,
            Item::Op { mnemonic, args } => {
                if !addr.is_multiple_of(4) {
                    return Err(err(number, "instruction is not word aligned"));
                }
                4 * op_words(&mnemonic.to_ascii_lowercase(), args)
            }
        };
        lines.push(Line {
            number,
            addr: addr as u32,
            item,
        });
        addr += size as u64;
        if addr > u32::MAX as u64 + 1 {
            return Err(err(number, "program runs past the end of the address space"));
        }
    }

    // Pass 2: encode.
    let mut chunks: Vec<Segment> = vec![Segment {
        addr: base,
        data: Vec::new(),
    }];
    for line in &lines {
        let ctx = Ctx {
            symbols: &symbols,
            line: line.number,
        };
        let bytes: Vec<u8> = match &line.item {
            Item::Org(target) => {
                chunks.push(Segment {
                    addr: *target,
                    data: Vec::new(),
                });
                continue;
            }
            Item::Align(n) => {
                let pad = (line.addr as u64).next_multiple_of(*n as u64) - line.addr as u64;
                vec![0; pad as usize]
            }
            Item::Word(words) => {
                let mut out = Vec::new();
                for w in words {
                    let v = ctx.value(w)?;
                    if !(-(1i64 << 31)..(1i64 << 32)).contains(&v) {
                        return Err(ctx.err(format!(".word value {v} out of range")));
                    }
                    out.extend_from_slice(&(v as u32).to_le_bytes());
                }
                out
            }
            Item::Bytes(b) => b.clone(),
            Item::Op { mnemonic, args } => {
                let insts = encode_op(&ctx, line.addr, &mnemonic.to_ascii_lowercase(), args)?;
                insts.iter().flat_map(|i| i.raw.to_le_bytes()).collect()
            }
        };
        chunks.last_mut().expect("chunk").data.extend(bytes);
    }

    let mut sorted: Vec<&Segment> = chunks.iter().filter(|c| !c.data.is_empty()).collect();
    sorted.sort_by_key(|c| c.addr);
    for pair in sorted.windows(2) {
        if pair[0].addr as u64 + pair[0].data.len() as u64 > pair[1].addr as u64 {
            return Err(err(0, format!("sections overlap at {:#010x}", pair[1].addr)));
        }
    }
    let entry = symbols.get("_start").copied().unwrap_or(base);
    Ok(AsmProgram {
        chunks,
        symbols,
        entry,
    })
}
