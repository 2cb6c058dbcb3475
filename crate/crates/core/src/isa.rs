//! RV32I + Zicsr + machine-mode instruction decoding, encoding and disassembly.
//!
//! Decoding is strict: reserved `funct3`/`funct7` patterns and RV64 shift
//! amounts are reported as [`IllegalEncoding`] rather than aliased onto a
//! legal instruction, so the illegal-instruction trap is deterministic.

use std::fmt;

use thiserror::Error;

/// Every instruction the core understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mnemonic {
    Lui,
    Auipc,
    Jal,
    Jalr,
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
    Sb,
    Sh,
    Sw,
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Fence,
    Ecall,
    Ebreak,
    Csrrw,
    Csrrs,
    Csrrc,
    Csrrwi,
    Csrrsi,
    Csrrci,
    Mret,
    Wfi,
    FenceI,
}

use Mnemonic::*;

/// The RV32I base set: 37 computational/control operations plus FENCE,
/// ECALL and EBREAK.
pub const BASE_MNEMONICS: [Mnemonic; 40] = [
    Lui, Auipc, Jal, Jalr, Beq, Bne, Blt, Bge, Bltu, Bgeu, Lb, Lh, Lw, Lbu, Lhu, Sb, Sh, Sw, Addi,
    Slti, Sltiu, Xori, Ori, Andi, Slli, Srli, Srai, Add, Sub, Sll, Slt, Sltu, Xor, Srl, Sra, Or,
    And, Fence, Ecall, Ebreak,
];

/// The six Zicsr read-modify-write instructions.
pub const CSR_MNEMONICS: [Mnemonic; 6] = [Csrrw, Csrrs, Csrrc, Csrrwi, Csrrsi, Csrrci];

/// Machine-mode and instruction-fetch-fence instructions outside the two sets above.
pub const SYSTEM_MNEMONICS: [Mnemonic; 3] = [Mret, Wfi, FenceI];

pub const ALL_MNEMONICS: [Mnemonic; 49] = [
    Lui, Auipc, Jal, Jalr, Beq, Bne, Blt, Bge, Bltu, Bgeu, Lb, Lh, Lw, Lbu, Lhu, Sb, Sh, Sw, Addi,
    Slti, Sltiu, Xori, Ori, Andi, Slli, Srli, Srai, Add, Sub, Sll, Slt, Sltu, Xor, Srl, Sra, Or,
    And, Fence, Ecall, Ebreak, Csrrw, Csrrs, Csrrc, Csrrwi, Csrrsi, Csrrci, Mret, Wfi, FenceI,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    R,
    I,
    S,
    B,
    U,
    J,
    System,
}

impl Mnemonic {
    pub fn format(self) -> Format {
        match self {
            Lui | Auipc => Format::U,
            Jal => Format::J,
            Beq | Bne | Blt | Bge | Bltu | Bgeu => Format::B,
            Sb | Sh | Sw => Format::S,
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And => Format::R,
            Jalr | Lb | Lh | Lw | Lbu | Lhu | Addi | Slti | Sltiu | Xori | Ori | Andi | Slli
            | Srli | Srai | Fence | FenceI => Format::I,
            Ecall | Ebreak | Mret | Wfi | Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
                Format::System
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Lui => "lui",
            Auipc => "auipc",
            Jal => "jal",
            Jalr => "jalr",
            Beq => "beq",
            Bne => "bne",
            Blt => "blt",
            Bge => "bge",
            Bltu => "bltu",
            Bgeu => "bgeu",
            Lb => "lb",
            Lh => "lh",
            Lw => "lw",
            Lbu => "lbu",
            Lhu => "lhu",
            Sb => "sb",
            Sh => "sh",
            Sw => "sw",
            Addi => "addi",
            Slti => "slti",
            Sltiu => "sltiu",
            Xori => "xori",
            Ori => "ori",
            Andi => "andi",
            Slli => "slli",
            Srli => "srli",
            Srai => "srai",
            Add => "add",
            Sub => "sub",
            Sll => "sll",
            Slt => "slt",
            Sltu => "sltu",
            Xor => "xor",
            Srl => "srl",
            Sra => "sra",
            Or => "or",
            And => "and",
            Fence => "fence",
            Ecall => "ecall",
            Ebreak => "ebreak",
            Csrrw => "csrrw",
            Csrrs => "csrrs",
            Csrrc => "csrrc",
            Csrrwi => "csrrwi",
            Csrrsi => "csrrsi",
            Csrrci => "csrrci",
            Mret => "mret",
            Wfi => "wfi",
            FenceI => "fence.i",
        }
    }

    pub fn from_name(name: &str) -> Option<Mnemonic> {
        ALL_MNEMONICS.iter().copied().find(|m| m.name() == name)
    }

    pub fn is_load(self) -> bool {
        matches!(self, Lb | Lh | Lw | Lbu | Lhu)
    }

    pub fn is_store(self) -> bool {
        matches!(self, Sb | Sh | Sw)
    }

    pub fn is_branch(self) -> bool {
        self.format() == Format::B
    }

    pub fn is_csr(self) -> bool {
        CSR_MNEMONICS.contains(&self)
    }

    /// CSR variants whose source operand is the 5-bit immediate in the rs1 field.
    pub fn is_csr_immediate(self) -> bool {
        matches!(self, Csrrwi | Csrrsi | Csrrci)
    }

    /// Access width in bytes for loads and stores.
    pub fn access_size(self) -> Option<u32> {
        match self {
            Lb | Lbu | Sb => Some(1),
            Lh | Lhu | Sh => Some(2),
            Lw | Sw => Some(4),
            _ => None,
        }
    }

    /// Whether the instruction writes `rd` when it completes without a trap.
    pub fn writes_rd(self) -> bool {
        match self.format() {
            Format::R | Format::U | Format::J => true,
            Format::I => !matches!(self, Fence | FenceI),
            Format::S | Format::B => false,
            Format::System => self.is_csr(),
        }
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A decoded 32-bit instruction word. Fields the format does not use are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub mnemonic: Mnemonic,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    /// Sign-extended immediate. Shift-immediates hold the shift amount and
    /// CSR immediate variants hold the zero-extended 5-bit value.
    pub imm: i32,
    pub csr: u16,
    pub raw: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IllegalReason {
    UnknownOpcode,
    ReservedFunct,
    BadShamt,
}

impl fmt::Display for IllegalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IllegalReason::UnknownOpcode => "unknown-opcode",
            IllegalReason::ReservedFunct => "reserved-funct",
            IllegalReason::BadShamt => "bad-shamt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
#[error("illegal instruction {raw:#010x}: {reason}")]
pub struct IllegalEncoding {
    pub raw: u32,
    pub reason: IllegalReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("register index {0} out of range")]
    Register(u8),
    #[error("immediate {imm} out of range for {mnemonic}")]
    Immediate { mnemonic: Mnemonic, imm: i32 },
    #[error("CSR address {0:#x} out of range")]
    CsrAddress(u16),
    #[error("{mnemonic} does not use field {field}")]
    UnusedField {
        mnemonic: Mnemonic,
        field: &'static str,
    },
}

const OP_LUI: u32 = 0b0110111;
const OP_AUIPC: u32 = 0b0010111;
const OP_JAL: u32 = 0b1101111;
const OP_JALR: u32 = 0b1100111;
const OP_BRANCH: u32 = 0b1100011;
const OP_LOAD: u32 = 0b0000011;
const OP_STORE: u32 = 0b0100011;
const OP_IMM: u32 = 0b0010011;
const OP_REG: u32 = 0b0110011;
const OP_MISC_MEM: u32 = 0b0001111;
const OP_SYSTEM: u32 = 0b1110011;

const WORD_ECALL: u32 = 0x0000_0073;
const WORD_EBREAK: u32 = 0x0010_0073;
const WORD_MRET: u32 = 0x3020_0073;
const WORD_WFI: u32 = 0x1050_0073;

fn bits(word: u32, hi: u32, lo: u32) -> u32 {
    (word >> lo) & ((1u32 << (hi - lo + 1)) - 1)
}

fn imm_i(word: u32) -> i32 {
    (word as i32) >> 20
}

fn imm_s(word: u32) -> i32 {
    (((word as i32) >> 25) << 5) | bits(word, 11, 7) as i32
}

fn imm_b(word: u32) -> i32 {
    (((word as i32) >> 31) << 12)
        | (bits(word, 7, 7) << 11) as i32
        | (bits(word, 30, 25) << 5) as i32
        | (bits(word, 11, 8) << 1) as i32
}

fn imm_j(word: u32) -> i32 {
    (((word as i32) >> 31) << 20)
        | (bits(word, 19, 12) << 12) as i32
        | (bits(word, 20, 20) << 11) as i32
        | (bits(word, 30, 21) << 1) as i32
}

/// (opcode, funct3, funct7) for every mnemonic; funct fields are `None`
/// where the format does not constrain them.
fn opcode_fields(m: Mnemonic) -> (u32, u32, u32) {
    match m {
        Lui => (OP_LUI, 0, 0),
        Auipc => (OP_AUIPC, 0, 0),
        Jal => (OP_JAL, 0, 0),
        Jalr => (OP_JALR, 0, 0),
        Beq => (OP_BRANCH, 0, 0),
        Bne => (OP_BRANCH, 1, 0),
        Blt => (OP_BRANCH, 4, 0),
        Bge => (OP_BRANCH, 5, 0),
        Bltu => (OP_BRANCH, 6, 0),
        Bgeu => (OP_BRANCH, 7, 0),
        Lb => (OP_LOAD, 0, 0),
        Lh => (OP_LOAD, 1, 0),
        Lw => (OP_LOAD, 2, 0),
        Lbu => (OP_LOAD, 4, 0),
        Lhu => (OP_LOAD, 5, 0),
        Sb => (OP_STORE, 0, 0),
        Sh => (OP_STORE, 1, 0),
        Sw => (OP_STORE, 2, 0),
        Addi => (OP_IMM, 0, 0),
        Slti => (OP_IMM, 2, 0),
        Sltiu => (OP_IMM, 3, 0),
        Xori => (OP_IMM, 4, 0),
        Ori => (OP_IMM, 6, 0),
        Andi => (OP_IMM, 7, 0),
        Slli => (OP_IMM, 1, 0),
        Srli => (OP_IMM, 5, 0),
        Srai => (OP_IMM, 5, 0b0100000),
        Add => (OP_REG, 0, 0),
        Sub => (OP_REG, 0, 0b0100000),
        Sll => (OP_REG, 1, 0),
        Slt => (OP_REG, 2, 0),
        Sltu => (OP_REG, 3, 0),
        Xor => (OP_REG, 4, 0),
        Srl => (OP_REG, 5, 0),
        Sra => (OP_REG, 5, 0b0100000),
        Or => (OP_REG, 6, 0),
        And => (OP_REG, 7, 0),
        Fence => (OP_MISC_MEM, 0, 0),
        FenceI => (OP_MISC_MEM, 1, 0),
        Ecall | Ebreak | Mret | Wfi => (OP_SYSTEM, 0, 0),
        Csrrw => (OP_SYSTEM, 1, 0),
        Csrrs => (OP_SYSTEM, 2, 0),
        Csrrc => (OP_SYSTEM, 3, 0),
        Csrrwi => (OP_SYSTEM, 5, 0),
        Csrrsi => (OP_SYSTEM, 6, 0),
        Csrrci => (OP_SYSTEM, 7, 0),
    }
}

/// Decode a 32-bit instruction word.
pub fn decode(word: u32) -> Result<Instruction, IllegalEncoding> {
    let illegal = |reason| IllegalEncoding { raw: word, reason };
    let opcode = bits(word, 6, 0);
    let rd = bits(word, 11, 7) as u8;
    let funct3 = bits(word, 14, 12);
    let rs1 = bits(word, 19, 15) as u8;
    let rs2 = bits(word, 24, 20) as u8;
    let funct7 = bits(word, 31, 25);

    let mut inst = Instruction {
        mnemonic: Addi,
        rd: 0,
        rs1: 0,
        rs2: 0,
        imm: 0,
        csr: 0,
        raw: word,
    };
    if opcode & 0b11 != 0b11 {
        return Err(illegal(IllegalReason::UnknownOpcode));
    }
    match opcode {
        OP_LUI | OP_AUIPC => {
            inst.mnemonic = if opcode == OP_LUI { Lui } else { Auipc };
            inst.rd = rd;
            inst.imm = (word & 0xFFFF_F000) as i32;
        }
        OP_JAL => {
            inst.mnemonic = Jal;
            inst.rd = rd;
            inst.imm = imm_j(word);
        }
        OP_JALR => {
            if funct3 != 0 {
                return Err(illegal(IllegalReason::ReservedFunct));
            }
            inst.mnemonic = Jalr;
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.imm = imm_i(word);
        }
        OP_BRANCH => {
            inst.mnemonic = match funct3 {
                0 => Beq,
                1 => Bne,
                4 => Blt,
                5 => Bge,
                6 => Bltu,
                7 => Bgeu,
                _ => return Err(illegal(IllegalReason::ReservedFunct)),
            };
            inst.rs1 = rs1;
            inst.rs2 = rs2;
            inst.imm = imm_b(word);
        }
        OP_LOAD => {
            inst.mnemonic = match funct3 {
                0 => Lb,
                1 => Lh,
                2 => Lw,
                4 => Lbu,
                5 => Lhu,
                _ => return Err(illegal(IllegalReason::ReservedFunct)),
            };
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.imm = imm_i(word);
        }
        OP_STORE => {
            inst.mnemonic = match funct3 {
                0 => Sb,
                1 => Sh,
                2 => Sw,
                _ => return Err(illegal(IllegalReason::ReservedFunct)),
            };
            inst.rs1 = rs1;
            inst.rs2 = rs2;
            inst.imm = imm_s(word);
        }
        OP_IMM => {
            inst.rd = rd;
            inst.rs1 = rs1;
            match funct3 {
                1 | 5 => {
                    if funct7 & 1 != 0 {
                        return Err(illegal(IllegalReason::BadShamt));
                    }
                    inst.mnemonic = match (funct3, funct7) {
                        (1, 0) => Slli,
                        (5, 0) => Srli,
                        (5, 0b0100000) => Srai,
                        _ => return Err(illegal(IllegalReason::ReservedFunct)),
                    };
                    inst.imm = rs2 as i32;
                }
                _ => {
                    inst.mnemonic = match funct3 {
                        0 => Addi,
                        2 => Slti,
                        3 => Sltiu,
                        4 => Xori,
                        6 => Ori,
                        _ => Andi,
                    };
                    inst.imm = imm_i(word);
                }
            }
        }
        OP_REG => {
            inst.mnemonic = match (funct3, funct7) {
                (0, 0) => Add,
                (0, 0b0100000) => Sub,
                (1, 0) => Sll,
                (2, 0) => Slt,
                (3, 0) => Sltu,
                (4, 0) => Xor,
                (5, 0) => Srl,
                (5, 0b0100000) => Sra,
                (6, 0) => Or,
                (7, 0) => And,
                _ => return Err(illegal(IllegalReason::ReservedFunct)),
            };
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.rs2 = rs2;
        }
        OP_MISC_MEM => {
            inst.mnemonic = match funct3 {
                0 => Fence,
                1 => FenceI,
                _ => return Err(illegal(IllegalReason::ReservedFunct)),
            };
            inst.rd = rd;
            inst.rs1 = rs1;
            inst.imm = imm_i(word);
        }
        OP_SYSTEM => match funct3 {
            0 => {
                inst.mnemonic = match word {
                    WORD_ECALL => Ecall,
                    WORD_EBREAK => Ebreak,
                    WORD_MRET => Mret,
                    WORD_WFI => Wfi,
                    _ => return Err(illegal(IllegalReason::ReservedFunct)),
                };
            }
            4 => return Err(illegal(IllegalReason::ReservedFunct)),
            _ => {
                inst.mnemonic = match funct3 {
                    1 => Csrrw,
                    2 => Csrrs,
                    3 => Csrrc,
                    5 => Csrrwi,
                    6 => Csrrsi,
                    _ => Csrrci,
                };
                inst.rd = rd;
                inst.csr = bits(word, 31, 20) as u16;
                if inst.mnemonic.is_csr_immediate() {
                    inst.imm = rs1 as i32;
                } else {
                    inst.rs1 = rs1;
                }
            }
        },
        _ => return Err(illegal(IllegalReason::UnknownOpcode)),
    }
    Ok(inst)
}

fn check_reg(r: u8) -> Result<u32, EncodeError> {
    if r < 32 {
        Ok(r as u32)
    } else {
        Err(EncodeError::Register(r))
    }
}

/// Encode an instruction back to its 32-bit word. `raw` is ignored.
pub fn encode(inst: &Instruction) -> Result<u32, EncodeError> {
    let m = inst.mnemonic;
    let (opcode, funct3, funct7) = opcode_fields(m);
    let rd = check_reg(inst.rd)?;
    let rs1 = check_reg(inst.rs1)?;
    let rs2 = check_reg(inst.rs2)?;
    let imm = inst.imm;
    let bad_imm = || EncodeError::Immediate { mnemonic: m, imm };
    let unused = |field| EncodeError::UnusedField { mnemonic: m, field };
    let fmt = m.format();

    if inst.csr != 0 && !m.is_csr() {
        return Err(unused("csr"));
    }
    if inst.rs2 != 0 && !matches!(fmt, Format::R | Format::S | Format::B) {
        return Err(unused("rs2"));
    }
    if inst.rd != 0 && matches!(fmt, Format::S | Format::B) {
        return Err(unused("rd"));
    }
    if inst.rs1 != 0 && matches!(fmt, Format::U | Format::J) {
        return Err(unused("rs1"));
    }

    let word = match fmt {
        Format::R => {
            if imm != 0 {
                return Err(unused("imm"));
            }
            (funct7 << 25) | (rs2 << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | opcode
        }
        Format::I => {
            let field = if matches!(m, Slli | Srli | Srai) {
                if !(0..32).contains(&imm) {
                    return Err(bad_imm());
                }
                (funct7 << 5) | imm as u32
            } else {
                if !(-2048..=2047).contains(&imm) {
                    return Err(bad_imm());
                }
                (imm as u32) & 0xFFF
            };
            (field << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | opcode
        }
        Format::S => {
            if !(-2048..=2047).contains(&imm) {
                return Err(bad_imm());
            }
            let v = imm as u32;
            (bits(v, 11, 5) << 25)
                | (rs2 << 20)
                | (rs1 << 15)
                | (funct3 << 12)
                | (bits(v, 4, 0) << 7)
                | opcode
        }
        Format::B => {
            if !(-4096..=4094).contains(&imm) || imm & 1 != 0 {
                return Err(bad_imm());
            }
            let v = imm as u32;
            (bits(v, 12, 12) << 31)
                | (bits(v, 10, 5) << 25)
                | (rs2 << 20)
                | (rs1 << 15)
                | (funct3 << 12)
                | (bits(v, 4, 1) << 8)
                | (bits(v, 11, 11) << 7)
                | opcode
        }
        Format::U => {
            if imm & 0xFFF != 0 {
                return Err(bad_imm());
            }
            (imm as u32) | (rd << 7) | opcode
        }
        Format::J => {
            if !(-(1 << 20)..(1 << 20)).contains(&imm) || imm & 1 != 0 {
                return Err(bad_imm());
            }
            let v = imm as u32;
            (bits(v, 20, 20) << 31)
                | (bits(v, 10, 1) << 21)
                | (bits(v, 11, 11) << 20)
                | (bits(v, 19, 12) << 12)
                | (rd << 7)
                | opcode
        }
        Format::System => match m {
            Ecall | Ebreak | Mret | Wfi => {
                if inst.rd != 0 || inst.rs1 != 0 || imm != 0 {
                    return Err(unused("operands"));
                }
                match m {
                    Ecall => WORD_ECALL,
                    Ebreak => WORD_EBREAK,
                    Mret => WORD_MRET,
                    _ => WORD_WFI,
                }
            }
            _ => {
                if inst.csr > 0xFFF {
                    return Err(EncodeError::CsrAddress(inst.csr));
                }
                let src = if m.is_csr_immediate() {
                    if inst.rs1 != 0 {
                        return Err(unused("rs1"));
                    }
                    if !(0..32).contains(&imm) {
                        return Err(bad_imm());
                    }
                    imm as u32
                } else {
                    if imm != 0 {
                        return Err(unused("imm"));
                    }
                    rs1
                };
                ((inst.csr as u32) << 20) | (src << 15) | (funct3 << 12) | (rd << 7) | opcode
            }
        },
    };
    Ok(word)
}

impl Instruction {
    /// Build an instruction from its fields, validating them and filling in `raw`.
    pub fn new(
        mnemonic: Mnemonic,
        rd: u8,
        rs1: u8,
        rs2: u8,
        imm: i32,
        csr: u16,
    ) -> Result<Instruction, EncodeError> {
        let mut inst = Instruction {
            mnemonic,
            rd,
            rs1,
            rs2,
            imm,
            csr,
            raw: 0,
        };
        inst.raw = encode(&inst)?;
        Ok(inst)
    }

    pub fn format(&self) -> Format {
        self.mnemonic.format()
    }

    /// Whether a Zicsr instruction writes its CSR. CSRRS/CSRRC with x0 and
    /// the immediate forms with a zero immediate only read.
    pub fn csr_writes(&self) -> bool {
        match self.mnemonic {
            Csrrw | Csrrwi => true,
            Csrrs | Csrrc => self.rs1 != 0,
            Csrrsi | Csrrci => self.imm != 0,
            _ => false,
        }
    }

    /// Destination register if the instruction writes one (never x0).
    pub fn dest(&self) -> Option<u8> {
        (self.mnemonic.writes_rd() && self.rd != 0).then_some(self.rd)
    }

    /// Source registers actually read by the instruction.
    pub fn sources(&self) -> (Option<u8>, Option<u8>) {
        let rs1 = match self.format() {
            Format::U | Format::J => None,
            Format::I if matches!(self.mnemonic, Fence | FenceI) => None,
            Format::System if !self.mnemonic.is_csr() || self.mnemonic.is_csr_immediate() => None,
            _ => Some(self.rs1),
        };
        let rs2 = matches!(self.format(), Format::R | Format::S | Format::B).then_some(self.rs2);
        (rs1, rs2)
    }
}

/// Stable trace syntax: lower-case mnemonic, `x<n>` registers, signed decimal
/// immediates, hexadecimal CSR addresses.
impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.mnemonic;
        let (rd, rs1, rs2, imm) = (self.rd, self.rs1, self.rs2, self.imm);
        match m.format() {
            Format::R => write!(f, "{m} x{rd}, x{rs1}, x{rs2}"),
            Format::I => match m {
                Fence | FenceI => write!(f, "{m}"),
                Lb | Lh | Lw | Lbu | Lhu => write!(f, "{m} x{rd}, {imm}(x{rs1})"),
                _ => write!(f, "{m} x{rd}, x{rs1}, {imm}"),
            },
            Format::S => write!(f, "{m} x{rs2}, {imm}(x{rs1})"),
            Format::B => write!(f, "{m} x{rs1}, x{rs2}, {imm}"),
            Format::U => write!(f, "{m} x{rd}, {}", imm >> 12),
            Format::J => write!(f, "{m} x{rd}, {imm}"),
            Format::System => {
                if m.is_csr_immediate() {
                    write!(f, "{m} x{rd}, {:#x}, {imm}", self.csr)
                } else if m.is_csr() {
                    write!(f, "{m} x{rd}, {:#x}, x{rs1}", self.csr)
                } else {
                    write!(f, "{m}")
                }
            }
        }
    }
}

/// Disassemble a decoded instruction into its trace text.
pub fn disassemble(inst: &Instruction) -> String {
    inst.to_string()
}
