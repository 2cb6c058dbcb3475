//! Seeded random test programs for lockstep checking.
//!
//! Every generated program terminates: control flow only moves forward, and
//! the trap handler resumes after any faulting instruction. Register use:
//! `x31` holds the RAM base, `x28`/`x29` are scratch for multi-instruction
//! idioms, and `x30` belongs to the trap handler.

use std::fmt::Write;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::arch::csr;
use crate::bus::{DEFAULT_EXIT_BASE, DEFAULT_RAM_BASE, DEFAULT_ROM_BASE, DEFAULT_TIMER_BASE, TIMER_MTIME, TIMER_MTIMECMP};
use crate::program::{assemble, LoadedImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    /// Instructions in the random body.
    pub length: usize,
    /// Arm the timer so one interrupt lands somewhere in the body.
    pub timer_interrupt: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            length: 1000,
            timer_interrupt: true,
        }
    }
}

const ALU_RR: [&str; 10] = ["add", "sub", "sll", "slt", "sltu", "xor", "srl", "sra", "or", "and"];
const ALU_RI: [&str; 6] = ["addi", "slti", "sltiu", "xori", "ori", "andi"];
const SHIFT_I: [&str; 3] = ["slli", "srli", "srai"];
const BRANCH: [&str; 6] = ["beq", "bne", "blt", "bge", "bltu", "bgeu"];
const LOAD: [(&str, u32); 5] = [("lb", 1), ("lh", 2), ("lw", 4), ("lbu", 1), ("lhu", 2)];
const STORE: [(&str, u32); 3] = [("sb", 1), ("sh", 2), ("sw", 4)];
const CSR_RW: [u16; 4] = [csr::MSCRATCH, csr::MEPC, csr::MCAUSE, csr::MTVAL];
const CSR_RO: [u16; 9] = [
    csr::MSTATUS,
    csr::MISA,
    csr::MIE,
    csr::MTVEC,
    csr::MIP,
    csr::MCYCLE,
    csr::MINSTRET,
    csr::MINSTRETH,
    csr::MHARTID,
];

struct Gen {
    rng: StdRng,
    out: String,
}

impl Gen {
    fn dst(&mut self) -> u8 {
        self.rng.gen_range(1..=27)
    }

    fn src(&mut self) -> u8 {
        if self.rng.gen_bool(0.05) {
            31
        } else {
            self.rng.gen_range(0..=27)
        }
    }

    fn imm12(&mut self) -> i32 {
        if self.rng.gen_bool(0.2) {
            *[-2048, -1, 0, 1, 2047].choose(&mut self.rng).unwrap()
        } else {
            self.rng.gen_range(-2048..2048)
        }
    }

    fn line(&mut self, index: usize, text: &str) {
        writeln!(self.out, "L{index}: {text}").unwrap();
    }

    /// A forward target in `from..from + 6` that is not the second word of
    /// a pair.
    fn target(&mut self, from: usize, landable: &[bool]) -> usize {
        let last = (from + 5).min(landable.len() - 1);
        let options: Vec<usize> = (from..=last).filter(|&t| landable[t]).collect();
        *options.choose(&mut self.rng).expect("the next item is always landable")
    }

    fn single(&mut self, index: usize, landable: &[bool]) -> String {
        let roll = self.rng.gen_range(0..100);
        let (rd, rs1, rs2) = (self.dst(), self.src(), self.src());
        match roll {
            0..=24 => format!("{} x{rd}, x{rs1}, x{rs2}", ALU_RR.choose(&mut self.rng).unwrap()),
            25..=39 => {
                let imm = self.imm12();
                format!("{} x{rd}, x{rs1}, {imm}", ALU_RI.choose(&mut self.rng).unwrap())
            }
            40..=44 => {
                let sh = self.rng.gen_range(0..32);
                format!("{} x{rd}, x{rs1}, {sh}", SHIFT_I.choose(&mut self.rng).unwrap())
            }
            45..=47 => {
                let m = if self.rng.gen_bool(0.5) { "lui" } else { "auipc" };
                format!("{m} x{rd}, {}", self.rng.gen_range(0..1 << 20))
            }
            48..=59 => {
                let (m, size) = *LOAD.choose(&mut self.rng).unwrap();
                let (base, off) = self.data_address(size);
                format!("{m} x{rd}, {off}(x{base})")
            }
            60..=69 => {
                let (m, size) = *STORE.choose(&mut self.rng).unwrap();
                let (base, off) = self.data_address(size);
                format!("{m} x{rs2}, {off}(x{base})")
            }
            70..=79 => {
                let t = self.target(index + 1, landable);
                format!("{} x{rs1}, x{rs2}, L{t}", BRANCH.choose(&mut self.rng).unwrap())
            }
            80..=83 => format!("jal x{rd}, L{}", self.target(index + 1, landable)),
            84..=91 => {
                let m = *["csrrw", "csrrs", "csrrc", "csrrwi", "csrrsi", "csrrci"]
                    .choose(&mut self.rng)
                    .unwrap();
                let writable = self.rng.gen_bool(0.7);
                let addr = if writable {
                    *CSR_RW.choose(&mut self.rng).unwrap()
                } else {
                    *CSR_RO.choose(&mut self.rng).unwrap()
                };
                // The read-only group is only read, never written.
                if m.ends_with('i') {
                    let (m, v) = if writable {
                        (m, self.rng.gen_range(0..32))
                    } else {
                        ("csrrsi", 0)
                    };
                    format!("{m} x{rd}, {addr:#x}, {v}")
                } else {
                    let (m, r) = if writable { (m, rs1) } else { ("csrrs", 0) };
                    format!("{m} x{rd}, {addr:#x}, x{r}")
                }
            }
            92 => "csrrw x0, misa, x0".into(),
            93 => "ecall".into(),
            94 => "ebreak".into(),
            95 => ".word 0xffffffff".into(),
            96 => "fence".into(),
            97 => "fence.i".into(),
            _ => format!("addi x{rd}, x{rs1}, 0"),
        }
    }

    /// Base register and offset: mostly RAM, sometimes misaligned, sometimes
    /// unmapped (x0-relative) or read-only ROM.
    fn data_address(&mut self, size: u32) -> (u8, i32) {
        match self.rng.gen_range(0..20) {
            0 => (0, self.rng.gen_range(0..2048)),
            1 => (30, 0),
            _ => {
                let slot = self.rng.gen_range(0..256) * 4;
                if self.rng.gen_bool(0.15) {
                    (31, slot + self.rng.gen_range(1..4))
                } else {
                    (31, slot + self.rng.gen_range(0..4 / size as i32) * size as i32)
                }
            }
        }
    }
}

/// Assembly source for the program with this seed.
pub fn generate_source(seed: u64, config: &GenConfig) -> String {
    let mut g = Gen {
        rng: StdRng::seed_from_u64(seed),
        out: String::new(),
    };
    let exit = DEFAULT_EXIT_BASE;
    writeln!(g.out, "# seed {seed}").unwrap();
    g.out.push_str("_start:\n    la x30, handler\n    csrw mtvec, x30\n");
    writeln!(g.out, "    li x31, {DEFAULT_RAM_BASE:#x}").unwrap();
    // x30 also serves as a ROM pointer for loads and stores.
    writeln!(g.out, "    li x30, {DEFAULT_ROM_BASE:#x}").unwrap();
    for r in 1..=27 {
        let v: u32 = g.rng.gen();
        writeln!(g.out, "    li x{r}, {v:#x}").unwrap();
    }
    if config.timer_interrupt {
        let delay = g.rng.gen_range(50..(config.length as u32 * 4).max(100));
        let timer = DEFAULT_TIMER_BASE;
        writeln!(g.out, "    li x28, {:#x}", timer + TIMER_MTIMECMP).unwrap();
        writeln!(g.out, "    li x29, {delay}").unwrap();
        g.out.push_str("    sw x0, 4(x28)\n    sw x29, 0(x28)\n");
        g.out.push_str("    li x29, 0x80\n    csrs mie, x29\n    csrsi mstatus, 8\n");
    }
    // Plan where the two-word idioms go, so jumps never land between halves.
    let n = config.length;
    let mut pairs = vec![false; n];
    let mut landable = vec![true; n + 1];
    let mut i = 0;
    while i < n {
        if i + 2 < n && g.rng.gen_bool(0.06) {
            pairs[i] = true;
            landable[i + 1] = false;
            i += 2;
        } else {
            i += 1;
        }
    }
    let mut index = 0;
    while index < n {
        if !pairs[index] {
            let text = g.single(index, &landable);
            g.line(index, &text);
            index += 1;
            continue;
        }
        if g.rng.gen_bool(0.5) {
            // auipc/jalr landing further on, sometimes misaligned.
            let rd = g.dst();
            let t = g.target(index + 2, &landable);
            let off = 4 * (t - index) as i32 + *[0, 0, 0, 1, 2].choose(&mut g.rng).unwrap();
            g.line(index, "auipc x28, 0");
            g.line(index + 1, &format!("jalr x{rd}, x28, {off}"));
        } else {
            let rd = g.dst();
            let page = (DEFAULT_TIMER_BASE + TIMER_MTIME + 8) >> 12;
            g.line(index, &format!("lui x28, {page:#x}"));
            g.line(index + 1, &format!("lw x{rd}, -8(x28)"));
        }
        index += 2;
    }
    writeln!(g.out, "L{index}:\n    li x28, {exit:#x}\n    sw x0, 0(x28)\nhang:\n    j hang").unwrap();
    // Skip the faulting instruction; a timer interrupt disarms itself.
    g.out.push_str(
        "handler:\n    csrr x30, mcause\n    blt x30, x0, irq\n    csrr x30, mepc\n    addi x30, x30, 4\n    \
         csrw mepc, x30\n    li x30, 0x80000000\n    mret\n\
         irq:\n    li x30, 0x80\n    csrc mie, x30\n    li x30, 0x80000000\n    mret\n",
    );
    g.out
}

pub fn generate(seed: u64, config: &GenConfig) -> LoadedImage {
    let src = generate_source(seed, config);
    match assemble(&src, DEFAULT_ROM_BASE) {
        Ok(p) => p.to_image(),
        Err(e) => panic!("generated program {seed} failed to assemble: {e}\n{src}"),
    }
}
