//! Architectural state: general-purpose registers, the machine-mode CSR file,
//! and trap entry/return.

use std::fmt;

use crate::isa::{Instruction, Mnemonic};

pub mod csr {
    pub const MSTATUS: u16 = 0x300;
    pub const MISA: u16 = 0x301;
    pub const MIE: u16 = 0x304;
    pub const MTVEC: u16 = 0x305;
    pub const MSCRATCH: u16 = 0x340;
    pub const MEPC: u16 = 0x341;
    pub const MCAUSE: u16 = 0x342;
    pub const MTVAL: u16 = 0x343;
    pub const MIP: u16 = 0x344;
    pub const MCYCLE: u16 = 0xB00;
    pub const MINSTRET: u16 = 0xB02;
    pub const MCYCLEH: u16 = 0xB80;
    pub const MINSTRETH: u16 = 0xB82;
    pub const MHARTID: u16 = 0xF14;

    /// Every implemented CSR address; anything else traps.
    pub const IMPLEMENTED: [u16; 14] = [
        MSTATUS, MISA, MIE, MTVEC, MSCRATCH, MEPC, MCAUSE, MTVAL, MIP, MCYCLE, MINSTRET, MCYCLEH,
        MINSTRETH, MHARTID,
    ];

    pub fn name(addr: u16) -> Option<&'static str> {
        Some(match addr {
            MSTATUS => "mstatus",
            MISA => "misa",
            MIE => "mie",
            MTVEC => "mtvec",
            MSCRATCH => "mscratch",
            MEPC => "mepc",
            MCAUSE => "mcause",
            MTVAL => "mtval",
            MIP => "mip",
            MCYCLE => "mcycle",
            MINSTRET => "minstret",
            MCYCLEH => "mcycleh",
            MINSTRETH => "minstreth",
            MHARTID => "mhartid",
            _ => return None,
        })
    }

    pub fn from_name(name: &str) -> Option<u16> {
        IMPLEMENTED.iter().copied().find(|&a| self::name(a) == Some(name))
    }
}

pub const MSTATUS_MIE: u32 = 1 << 3;
pub const MSTATUS_MPIE: u32 = 1 << 7;
/// MPP is hardwired to machine mode.
pub const MSTATUS_MPP: u32 = 0b11 << 11;

pub const MIP_MSIP: u32 = 1 << 3;
pub const MIP_MTIP: u32 = 1 << 7;
pub const MIP_MEIP: u32 = 1 << 11;

/// RV32 (MXL = 1) with only the I extension.
pub const MISA_VALUE: u32 = (1 << 30) | (1 << 8);

/// 32 general-purpose registers; x0 is hardwired to zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RegisterFile {
    x: [u32; 32],
}

impl RegisterFile {
    pub fn read(&self, idx: u8) -> u32 {
        self.x[idx as usize & 31]
    }

    /// Both source operands in one access.
    pub fn read_pair(&self, rs1: u8, rs2: u8) -> (u32, u32) {
        (self.read(rs1), self.read(rs2))
    }

    pub fn write(&mut self, idx: u8, value: u32) {
        if idx != 0 {
            self.x[idx as usize & 31] = value;
        }
    }

    pub fn as_array(&self) -> &[u32; 32] {
        &self.x
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrFile {
    pub mstatus: u32,
    pub mie: u32,
    pub mip: u32,
    pub mtvec: u32,
    pub mepc: u32,
    pub mcause: u32,
    pub mtval: u32,
    pub mscratch: u32,
    pub mhartid: u32,
    pub misa: u32,
    pub mcycle: u64,
    pub minstret: u64,
}

impl Default for CsrFile {
    fn default() -> Self {
        CsrFile {
            mstatus: MSTATUS_MPP,
            mie: 0,
            mip: 0,
            mtvec: 0,
            mepc: 0,
            mcause: 0,
            mtval: 0,
            mscratch: 0,
            mhartid: 0,
            misa: MISA_VALUE,
            mcycle: 0,
            minstret: 0,
        }
    }
}

/// Writable-bit mask for each implemented CSR; `None` for read-only ones.
pub fn writable_mask(addr: u16) -> Option<u32> {
    Some(match addr {
        csr::MSTATUS => MSTATUS_MIE | MSTATUS_MPIE,
        csr::MIE => MIP_MSIP | MIP_MTIP | MIP_MEIP,
        // Interrupt-pending bits are driven by the devices.
        csr::MIP => 0,
        csr::MTVEC | csr::MEPC => !0b11,
        csr::MSCRATCH | csr::MCAUSE | csr::MTVAL => !0,
        csr::MCYCLE | csr::MCYCLEH | csr::MINSTRET | csr::MINSTRETH => !0,
        _ => return None,
    })
}

impl CsrFile {
    pub fn read(&self, addr: u16) -> Option<u32> {
        Some(match addr {
            csr::MSTATUS => self.mstatus,
            csr::MISA => self.misa,
            csr::MIE => self.mie,
            csr::MTVEC => self.mtvec,
            csr::MSCRATCH => self.mscratch,
            csr::MEPC => self.mepc,
            csr::MCAUSE => self.mcause,
            csr::MTVAL => self.mtval,
            csr::MIP => self.mip,
            csr::MCYCLE => self.mcycle as u32,
            csr::MCYCLEH => (self.mcycle >> 32) as u32,
            csr::MINSTRET => self.minstret as u32,
            csr::MINSTRETH => (self.minstret >> 32) as u32,
            csr::MHARTID => self.mhartid,
            _ => return None,
        })
    }

    /// Masked write of a writable CSR. Returns false for read-only or
    /// unimplemented addresses.
    pub fn write(&mut self, addr: u16, value: u32) -> bool {
        let Some(mask) = writable_mask(addr) else {
            return false;
        };
        let merge = |old: u32| (old & !mask) | (value & mask);
        match addr {
            csr::MSTATUS => self.mstatus = merge(self.mstatus) | MSTATUS_MPP,
            csr::MIE => self.mie = merge(self.mie),
            csr::MIP => self.mip = merge(self.mip),
            csr::MTVEC => self.mtvec = merge(self.mtvec),
            csr::MSCRATCH => self.mscratch = value,
            csr::MEPC => self.mepc = merge(self.mepc),
            csr::MCAUSE => self.mcause = value,
            csr::MTVAL => self.mtval = value,
            csr::MCYCLE => self.mcycle = (self.mcycle & !0xFFFF_FFFF) | value as u64,
            csr::MCYCLEH => self.mcycle = (self.mcycle & 0xFFFF_FFFF) | ((value as u64) << 32),
            csr::MINSTRET => self.minstret = (self.minstret & !0xFFFF_FFFF) | value as u64,
            csr::MINSTRETH => {
                self.minstret = (self.minstret & 0xFFFF_FFFF) | ((value as u64) << 32)
            }
            _ => return false,
        }
        true
    }

    /// Whether `inst` writes minstret. Such a write replaces the automatic
    /// increment for the cycle it retires in.
    pub fn writes_minstret(inst: &Instruction) -> bool {
        inst.csr_writes() && matches!(inst.csr, csr::MINSTRET | csr::MINSTRETH)
    }

    pub fn writes_mcycle(inst: &Instruction) -> bool {
        inst.csr_writes() && matches!(inst.csr, csr::MCYCLE | csr::MCYCLEH)
    }

    pub fn mie_enabled(&self) -> bool {
        self.mstatus & MSTATUS_MIE != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exception {
    InstructionMisaligned = 0,
    InstructionAccessFault = 1,
    IllegalInstruction = 2,
    Breakpoint = 3,
    LoadMisaligned = 4,
    LoadAccessFault = 5,
    StoreMisaligned = 6,
    StoreAccessFault = 7,
    EcallFromM = 11,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interrupt {
    MachineSoftware = 3,
    MachineTimer = 7,
    MachineExternal = 11,
}

impl Interrupt {
    pub fn mip_bit(self) -> u32 {
        1 << self as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrapKind {
    Exception(Exception),
    Interrupt(Interrupt),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrapCause {
    pub kind: TrapKind,
    pub tval: u32,
}

impl TrapCause {
    pub fn exception(e: Exception, tval: u32) -> Self {
        TrapCause {
            kind: TrapKind::Exception(e),
            tval,
        }
    }

    pub fn interrupt(i: Interrupt) -> Self {
        TrapCause {
            kind: TrapKind::Interrupt(i),
            tval: 0,
        }
    }

    pub fn illegal(raw: u32) -> Self {
        Self::exception(Exception::IllegalInstruction, raw)
    }

    pub fn is_interrupt(&self) -> bool {
        matches!(self.kind, TrapKind::Interrupt(_))
    }

    pub fn code(&self) -> u32 {
        match self.kind {
            TrapKind::Exception(e) => e as u32,
            TrapKind::Interrupt(i) => i as u32,
        }
    }

    /// The value written to `mcause`.
    pub fn mcause(&self) -> u32 {
        ((self.is_interrupt() as u32) << 31) | self.code()
    }
}

impl fmt::Display for TrapCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            TrapKind::Exception(e) => write!(f, "exception {e:?} (tval={:#010x})", self.tval),
            TrapKind::Interrupt(i) => write!(f, "interrupt {i:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchState {
    pub pc: u32,
    pub regs: RegisterFile,
    pub csrs: CsrFile,
    pub waiting_for_interrupt: bool,
}

impl ArchState {
    pub fn new(reset_pc: u32) -> Self {
        ArchState {
            pc: reset_pc,
            regs: RegisterFile::default(),
            csrs: CsrFile::default(),
            waiting_for_interrupt: false,
        }
    }

    /// Execute the CSR half of a Zicsr instruction: `src` is the rs1 value
    /// (ignored for the immediate forms, which use `inst.imm`). Returns the
    /// old CSR value for rd; the caller performs the register write.
    pub fn csr_access(&mut self, inst: &Instruction, src: u32) -> Result<u32, TrapCause> {
        let illegal = TrapCause::illegal(inst.raw);
        let addr = inst.csr;
        let old = self.csrs.read(addr).ok_or(illegal)?;
        let operand = if inst.mnemonic.is_csr_immediate() {
            inst.imm as u32
        } else {
            src
        };
        let new = match inst.mnemonic {
            _ if !inst.csr_writes() => None,
            Mnemonic::Csrrw | Mnemonic::Csrrwi => Some(operand),
            Mnemonic::Csrrs | Mnemonic::Csrrsi => Some(old | operand),
            Mnemonic::Csrrc | Mnemonic::Csrrci => Some(old & !operand),
            _ => return Err(illegal),
        };
        if let Some(value) = new {
            if !self.csrs.write(addr, value) {
                return Err(illegal);
            }
        }
        Ok(old)
    }

    pub fn trap_enter(&mut self, cause: TrapCause, faulting_pc: u32) {
        let c = &mut self.csrs;
        c.mepc = faulting_pc & !0b11;
        c.mcause = cause.mcause();
        c.mtval = cause.tval;
        let mie = c.mstatus & MSTATUS_MIE != 0;
        c.mstatus &= !(MSTATUS_MIE | MSTATUS_MPIE);
        if mie {
            c.mstatus |= MSTATUS_MPIE;
        }
        self.pc = c.mtvec & !0b11;
        self.waiting_for_interrupt = false;
    }

    pub fn trap_return(&mut self) {
        let c = &mut self.csrs;
        let mpie = c.mstatus & MSTATUS_MPIE != 0;
        c.mstatus &= !MSTATUS_MIE;
        if mpie {
            c.mstatus |= MSTATUS_MIE;
        }
        c.mstatus |= MSTATUS_MPIE;
        self.pc = c.mepc;
    }

    /// Highest-priority enabled interrupt (MEI > MSI > MTI), if any.
    pub fn pending_interrupt(&self) -> Option<TrapCause> {
        if !self.csrs.mie_enabled() {
            return None;
        }
        let ready = self.csrs.mip & self.csrs.mie;
        [
            Interrupt::MachineExternal,
            Interrupt::MachineSoftware,
            Interrupt::MachineTimer,
        ]
        .into_iter()
        .find(|i| ready & i.mip_bit() != 0)
        .map(TrapCause::interrupt)
    }

    /// True when some interrupt is both pending and enabled in `mie`,
    /// regardless of the global enable. This is the WFI wake-up condition.
    pub fn wake_condition(&self) -> bool {
        self.csrs.mip & self.csrs.mie != 0
    }

    /// Compare everything except the cycle counter and the device-driven
    /// `mip` bits. Returns one line per difference.
    pub fn diff(&self, other: &ArchState, include_mip: bool) -> Vec<String> {
        let mut out = Vec::new();
        if self.pc != other.pc {
            out.push(format!("pc: {:#010x} != {:#010x}", self.pc, other.pc));
        }
        for r in 0..32u8 {
            let (a, b) = (self.regs.read(r), other.regs.read(r));
            if a != b {
                out.push(format!("x{r}: {a:#010x} != {b:#010x}"));
            }
        }
        for &addr in csr::IMPLEMENTED.iter() {
            if matches!(addr, csr::MCYCLE | csr::MCYCLEH) || (addr == csr::MIP && !include_mip) {
                continue;
            }
            let (a, b) = (self.csrs.read(addr), other.csrs.read(addr));
            if a != b {
                out.push(format!(
                    "{}: {:#010x} != {:#010x}",
                    csr::name(addr).unwrap_or("?"),
                    a.unwrap_or(0),
                    b.unwrap_or(0)
                ));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Mnemonic::*;

    fn ins(m: Mnemonic, rd: u8, rs1: u8, imm: i32, addr: u16) -> Instruction {
        Instruction::new(m, rd, rs1, 0, imm, addr).unwrap()
    }

    #[test]
    fn x0_is_hardwired() {
        let mut rf = RegisterFile::default();
        rf.write(0, 0xDEAD_BEEF);
        rf.write(5, 7);
        assert_eq!(rf.read(0), 0);
        assert_eq!(rf.read_pair(5, 0), (7, 0));
    }

    #[test]
    fn csrrw_swaps() {
        let mut s = ArchState::new(0);
        s.csrs.mscratch = 0xAAAA;
        let old = s
            .csr_access(&ins(Csrrw, 1, 2, 0, csr::MSCRATCH), 0x1234)
            .unwrap();
        assert_eq!(old, 0xAAAA);
        assert_eq!(s.csrs.mscratch, 0x1234);
    }

    #[test]
    fn csrrs_x0_does_not_write() {
        let mut s = ArchState::new(0);
        s.csrs.mscratch = 5;
        let old = s.csr_access(&ins(Csrrs, 1, 0, 0, csr::MSCRATCH), 0).unwrap();
        assert_eq!(old, 5);
        assert_eq!(s.csrs.mscratch, 5);
        // Reading a read-only CSR without writing is legal.
        assert_eq!(
            s.csr_access(&ins(Csrrs, 1, 0, 0, csr::MHARTID), 0).unwrap(),
            0
        );
        assert_eq!(
            s.csr_access(&ins(Csrrci, 1, 0, 0, csr::MISA), 0).unwrap(),
            MISA_VALUE
        );
    }

    #[test]
    fn unknown_csr_is_illegal() {
        assert!(csr::name(0xCFF).is_none());
        let mut s = ArchState::new(0);
        let i = ins(Csrrw, 0, 1, 0, 0xCFF);
        let err = s.csr_access(&i, 0).unwrap_err();
        assert_eq!(err, TrapCause::illegal(i.raw));
    }

    #[test]
    fn read_only_write_is_illegal() {
        let mut s = ArchState::new(0);
        for addr in [csr::MHARTID, csr::MISA] {
            let i = ins(Csrrw, 0, 1, 0, addr);
            assert_eq!(s.csr_access(&i, 1).unwrap_err().code(), 2);
            let i = ins(Csrrsi, 0, 0, 1, addr);
            assert!(s.csr_access(&i, 0).is_err());
        }
    }

    #[test]
    fn masked_writes() {
        let mut s = ArchState::new(0);
        s.csrs.write(csr::MSTATUS, 0xFFFF_FFFF);
        assert_eq!(s.csrs.mstatus, MSTATUS_MIE | MSTATUS_MPIE | MSTATUS_MPP);
        s.csrs.write(csr::MSTATUS, 0);
        assert_eq!(s.csrs.mstatus, MSTATUS_MPP);
        s.csrs.write(csr::MTVEC, 0x8000_1001);
        assert_eq!(s.csrs.mtvec, 0x8000_1000);
        s.csrs.write(csr::MIP, 0xFFFF_FFFF);
        assert_eq!(s.csrs.mip, 0);
        s.csrs.write(csr::MCYCLEH, 1);
        assert_eq!(s.csrs.read(csr::MCYCLEH), Some(1));
        assert_eq!(s.csrs.mcycle, 1 << 32);
    }

    #[test]
    fn trap_enter_exception() {
        let mut s = ArchState::new(0x8000_0010);
        s.csrs.mtvec = 0x8000_1000;
        s.trap_enter(TrapCause::illegal(0xFFFF_FFFF), 0x8000_0010);
        assert_eq!(s.pc, 0x8000_1000);
        assert_eq!(s.csrs.mepc, 0x8000_0010);
        assert_eq!(s.csrs.mcause, 2);
        assert_eq!(s.csrs.mtval, 0xFFFF_FFFF);
    }

    #[test]
    fn trap_enter_timer_interrupt() {
        let mut s = ArchState::new(0);
        s.csrs.mstatus |= MSTATUS_MIE;
        s.waiting_for_interrupt = true;
        s.trap_enter(TrapCause::interrupt(Interrupt::MachineTimer), 0x40);
        assert_eq!(s.csrs.mcause, 0x8000_0007);
        assert_eq!(s.csrs.mstatus & MSTATUS_MIE, 0);
        assert_ne!(s.csrs.mstatus & MSTATUS_MPIE, 0);
        assert!(!s.waiting_for_interrupt);
    }

    #[test]
    fn nested_trap_clears_mpie() {
        let mut s = ArchState::new(0);
        s.csrs.mstatus = MSTATUS_MPP | MSTATUS_MPIE;
        s.trap_enter(TrapCause::exception(Exception::Breakpoint, 0), 0x10);
        assert_eq!(s.csrs.mstatus & MSTATUS_MPIE, 0);
    }

    #[test]
    fn trap_return_restores() {
        let mut s = ArchState::new(0);
        s.csrs.mepc = 0x8000_0010;
        s.csrs.mstatus = MSTATUS_MPP | MSTATUS_MPIE;
        s.trap_return();
        assert_eq!(s.pc, 0x8000_0010);
        assert!(s.csrs.mie_enabled());
        s.trap_return();
        assert_eq!(s.pc, 0x8000_0010);

        let mut s = ArchState::new(0);
        s.csrs.mstatus = MSTATUS_MPP | MSTATUS_MIE;
        s.trap_return();
        assert!(!s.csrs.mie_enabled());
        assert_ne!(s.csrs.mstatus & MSTATUS_MPIE, 0);
    }

    #[test]
    fn interrupt_priority() {
        let mut s = ArchState::new(0);
        s.csrs.mip = MIP_MTIP | MIP_MEIP;
        s.csrs.mie = MIP_MSIP | MIP_MTIP | MIP_MEIP;
        s.csrs.mstatus |= MSTATUS_MIE;
        assert_eq!(
            s.pending_interrupt(),
            Some(TrapCause::interrupt(Interrupt::MachineExternal))
        );
        s.csrs.mip = MIP_MTIP | MIP_MSIP;
        assert_eq!(
            s.pending_interrupt(),
            Some(TrapCause::interrupt(Interrupt::MachineSoftware))
        );
        s.csrs.mip = MIP_MTIP;
        s.csrs.mie = MIP_MTIP;
        s.csrs.mstatus &= !MSTATUS_MIE;
        assert_eq!(s.pending_interrupt(), None);
        assert!(s.wake_condition());
        s.csrs.mip = 0;
        s.csrs.mstatus |= MSTATUS_MIE;
        assert_eq!(s.pending_interrupt(), None);
    }
}
