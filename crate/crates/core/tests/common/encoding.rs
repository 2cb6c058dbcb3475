//! Table-driven reference encoder, written from the base ISA opcode map
//! without using the crate's own encoder.

use noxsim_core::isa::{Instruction, Mnemonic};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    R,
    I,
    Shift,
    S,
    B,
    U,
    J,
    Csr,
    CsrImm,
    Fixed(u32),
}

/// (name, kind, opcode, funct3, funct7)
pub const TABLE: [(&str, Kind, u32, u32, u32); 49] = [
    ("lui", Kind::U, 0x37, 0, 0),
    ("auipc", Kind::U, 0x17, 0, 0),
    ("jal", Kind::J, 0x6f, 0, 0),
    ("jalr", Kind::I, 0x67, 0, 0),
    ("beq", Kind::B, 0x63, 0, 0),
    ("bne", Kind::B, 0x63, 1, 0),
    ("blt", Kind::B, 0x63, 4, 0),
    ("bge", Kind::B, 0x63, 5, 0),
    ("bltu", Kind::B, 0x63, 6, 0),
    ("bgeu", Kind::B, 0x63, 7, 0),
    ("lb", Kind::I, 0x03, 0, 0),
    ("lh", Kind::I, 0x03, 1, 0),
    ("lw", Kind::I, 0x03, 2, 0),
    ("lbu", Kind::I, 0x03, 4, 0),
    ("lhu", Kind::I, 0x03, 5, 0),
    ("sb", Kind::S, 0x23, 0, 0),
    ("sh", Kind::S, 0x23, 1, 0),
    ("sw", Kind::S, 0x23, 2, 0),
    ("addi", Kind::I, 0x13, 0, 0),
    ("slti", Kind::I, 0x13, 2, 0),
    ("sltiu", Kind::I, 0x13, 3, 0),
    ("xori", Kind::I, 0x13, 4, 0),
    ("ori", Kind::I, 0x13, 6, 0),
    ("andi", Kind::I, 0x13, 7, 0),
    ("slli", Kind::Shift, 0x13, 1, 0x00),
    ("srli", Kind::Shift, 0x13, 5, 0x00),
    ("srai", Kind::Shift, 0x13, 5, 0x20),
    ("add", Kind::R, 0x33, 0, 0x00),
    ("sub", Kind::R, 0x33, 0, 0x20),
    ("sll", Kind::R, 0x33, 1, 0x00),
    ("slt", Kind::R, 0x33, 2, 0x00),
    ("sltu", Kind::R, 0x33, 3, 0x00),
    ("xor", Kind::R, 0x33, 4, 0x00),
    ("srl", Kind::R, 0x33, 5, 0x00),
    ("sra", Kind::R, 0x33, 5, 0x20),
    ("or", Kind::R, 0x33, 6, 0x00),
    ("and", Kind::R, 0x33, 7, 0x00),
    ("fence", Kind::I, 0x0f, 0, 0),
    ("ecall", Kind::Fixed(0x0000_0073), 0x73, 0, 0),
    ("ebreak", Kind::Fixed(0x0010_0073), 0x73, 0, 0),
    ("csrrw", Kind::Csr, 0x73, 1, 0),
    ("csrrs", Kind::Csr, 0x73, 2, 0),
    ("csrrc", Kind::Csr, 0x73, 3, 0),
    ("csrrwi", Kind::CsrImm, 0x73, 5, 0),
    ("csrrsi", Kind::CsrImm, 0x73, 6, 0),
    ("csrrci", Kind::CsrImm, 0x73, 7, 0),
    ("mret", Kind::Fixed(0x3020_0073), 0x73, 0, 0),
    ("wfi", Kind::Fixed(0x1050_0073), 0x73, 0, 0),
    ("fence.i", Kind::I, 0x0f, 1, 0),
];

pub fn lookup(name: &str) -> (Kind, u32, u32, u32) {
    let &(_, kind, op, f3, f7) = TABLE.iter().find(|e| e.0 == name).expect("known mnemonic");
    (kind, op, f3, f7)
}

fn bit(v: u32, n: u32) -> u32 {
    (v >> n) & 1
}

fn field(v: u32, hi: u32, lo: u32) -> u32 {
    (v >> lo) & ((1 << (hi - lo + 1)) - 1)
}

/// Operands for the reference encoder. `imm` is the immediate as written in
/// assembly: byte offset for branches and jumps, upper 20 bits for U-type,
/// shift amount or 5-bit CSR immediate where applicable.
#[derive(Debug, Clone, Copy, Default)]
pub struct Operands {
    pub rd: u32,
    pub rs1: u32,
    pub rs2: u32,
    pub imm: i32,
    pub csr: u32,
}

pub fn encode(name: &str, o: Operands) -> u32 {
    let (kind, op, f3, f7) = lookup(name);
    let imm = o.imm as u32;
    match kind {
        Kind::R => f7 << 25 | o.rs2 << 20 | o.rs1 << 15 | f3 << 12 | o.rd << 7 | op,
        Kind::I => (imm & 0xfff) << 20 | o.rs1 << 15 | f3 << 12 | o.rd << 7 | op,
        Kind::Shift => f7 << 25 | (imm & 31) << 20 | o.rs1 << 15 | f3 << 12 | o.rd << 7 | op,
        Kind::S => field(imm, 11, 5) << 25 | o.rs2 << 20 | o.rs1 << 15 | f3 << 12 | field(imm, 4, 0) << 7 | op,
        Kind::B => {
            bit(imm, 12) << 31
                | field(imm, 10, 5) << 25
                | o.rs2 << 20
                | o.rs1 << 15
                | f3 << 12
                | field(imm, 4, 1) << 8
                | bit(imm, 11) << 7
                | op
        }
        Kind::U => (imm & 0xfffff) << 12 | o.rd << 7 | op,
        Kind::J => {
            bit(imm, 20) << 31 | field(imm, 10, 1) << 21 | bit(imm, 11) << 20 | field(imm, 19, 12) << 12 | o.rd << 7 | op
        }
        Kind::Csr => o.csr << 20 | o.rs1 << 15 | f3 << 12 | o.rd << 7 | op,
        Kind::CsrImm => o.csr << 20 | (imm & 31) << 15 | f3 << 12 | o.rd << 7 | op,
        Kind::Fixed(w) => w,
    }
}

/// Words checked by hand against the published encoding tables.
pub const KNOWN_WORDS: [(u32, &str); 16] = [
    (0x0000_0013, "addi x0, x0, 0"),
    (0x00a0_0093, "addi x1, x0, 10"),
    (0x0031_00b3, "add x1, x2, x3"),
    (0x4031_0133, "sub x2, x2, x3"),
    (0x0000_8067, "jalr x0, x1, 0"),
    (0x0000_006f, "jal x0, 0"),
    (0xfe00_0ee3, "beq x0, x0, -4"),
    (0x0083_2283, "lw x5, 8(x6)"),
    (0x0053_2423, "sw x5, 8(x6)"),
    (0x1234_50b7, "lui x1, 74565"),
    (0x3401_1173, "csrrw x2, 0x340, x2"),
    (0x0000_0073, "ecall"),
    (0x0010_0073, "ebreak"),
    (0x3020_0073, "mret"),
    (0x1050_0073, "wfi"),
    (0x0000_100f, "fence.i"),
];

/// Reference word plus the crate's view of the same instruction, with
/// operands folded into range for the format.
pub fn legal(index: usize, rd: u8, rs1: u8, rs2: u8, raw_imm: u32, csr: u16) -> (u32, Instruction) {
    let (name, kind, ..) = TABLE[index];
    let m = Mnemonic::from_name(name).expect("table names match");
    let (mut rd, mut rs1, mut rs2, mut csr) = (rd % 32, rs1 % 32, rs2 % 32, csr & 0xfff);
    let (oracle_imm, crate_imm) = match kind {
        Kind::R => (0, 0),
        Kind::I | Kind::S => {
            let v = (raw_imm % 4096) as i32 - 2048;
            (v, v)
        }
        Kind::Shift | Kind::CsrImm => {
            let v = (raw_imm % 32) as i32;
            (v, v)
        }
        Kind::B => {
            let v = ((raw_imm % 4096) as i32 - 2048) * 2;
            (v, v)
        }
        Kind::U => {
            let v = (raw_imm & 0xfffff) as i32;
            (v, v << 12)
        }
        Kind::J => {
            let v = ((raw_imm % (1 << 20)) as i32 - (1 << 19)) * 2;
            (v, v)
        }
        Kind::Csr | Kind::Fixed(_) => (0, 0),
    };
    if !matches!(kind, Kind::R | Kind::S | Kind::B) {
        rs2 = 0;
    }
    if matches!(kind, Kind::S | Kind::B | Kind::Fixed(_)) {
        rd = 0;
    }
    if matches!(kind, Kind::U | Kind::J | Kind::CsrImm | Kind::Fixed(_)) {
        rs1 = 0;
    }
    if !matches!(kind, Kind::Csr | Kind::CsrImm) {
        csr = 0;
    }
    let word = encode(
        name,
        Operands {
            rd: rd as u32,
            rs1: rs1 as u32,
            rs2: rs2 as u32,
            imm: oracle_imm,
            csr: csr as u32,
        },
    );
    let inst = Instruction::new(m, rd, rs1, rs2, crate_imm, csr).expect("legal operands");
    (word, inst)
}
