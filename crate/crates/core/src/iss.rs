//! Functional instruction-set interpreter. One call to [`Iss::step`] fetches,
//! executes and retires one instruction with no notion of pipeline timing;
//! the pipeline model is checked against it.

use thiserror::Error;

use crate::arch::{ArchState, CsrFile, Exception, TrapCause};
use crate::bus::{Bus, BusTransaction, Direction};
use crate::isa::{self, Instruction, Mnemonic};

/// Evaluate a register/immediate computational operation.
pub fn alu_eval(m: Mnemonic, a: u32, b: u32) -> u32 {
    use Mnemonic::*;
    let sh = b & 31;
    match m {
        Add | Addi => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Sll | Slli => a << sh,
        Srl | Srli => a >> sh,
        Sra | Srai => ((a as i32) >> sh) as u32,
        Slt | Slti => ((a as i32) < (b as i32)) as u32,
        Sltu | Sltiu => (a < b) as u32,
        Xor | Xori => a ^ b,
        Or | Ori => a | b,
        And | Andi => a & b,
        _ => panic!("{m} is not an ALU operation"),
    }
}

pub fn branch_taken(m: Mnemonic, a: u32, b: u32) -> bool {
    use Mnemonic::*;
    match m {
        Beq => a == b,
        Bne => a != b,
        Blt => (a as i32) < (b as i32),
        Bge => (a as i32) >= (b as i32),
        Bltu => a < b,
        Bgeu => a >= b,
        _ => panic!("{m} is not a branch"),
    }
}

/// Sign- or zero-extend raw load data according to the load mnemonic.
pub fn load_extend(m: Mnemonic, raw: u32) -> u32 {
    use Mnemonic::*;
    match m {
        Lb => raw as u8 as i8 as i32 as u32,
        Lh => raw as u16 as i16 as i32 as u32,
        Lbu => raw & 0xFF,
        Lhu => raw & 0xFFFF,
        _ => raw,
    }
}

/// Break an access into naturally aligned pieces of 1, 2 or 4 bytes, in
/// ascending address order. An aligned access is a single piece.
pub fn split_access(addr: u32, size: u32) -> Vec<(u32, u32)> {
    let mut parts = Vec::with_capacity(3);
    let (mut a, end) = (addr as u64, addr as u64 + size as u64);
    while a < end {
        let remaining = end - a;
        let piece = [4u64, 2, 1]
            .into_iter()
            .find(|&p| p <= remaining && a % p == 0)
            .unwrap_or(1);
        parts.push((a as u32, piece as u32));
        a += piece;
    }
    parts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MemEffect {
    pub address: u32,
    pub size: u32,
    pub direction: Direction,
    /// Stored data, or the loaded value after extension.
    pub value: u32,
}

/// Observable record of one retired instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub pc: u32,
    pub raw: u32,
    /// `None` when the word could not be fetched or decoded.
    pub instr: Option<Instruction>,
    pub next_pc: u32,
    pub writeback: Option<(u8, u32)>,
    pub trap: Option<TrapCause>,
    /// Interrupt taken immediately before this instruction was fetched.
    pub interrupt: Option<TrapCause>,
    pub mem: Option<MemEffect>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Retired(StepResult),
    /// Sleeping in WFI; one unit of time passed with nothing retired.
    Waiting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StopCondition {
    pub max_steps: Option<u64>,
    pub on_ecall: bool,
    pub on_ebreak: bool,
    pub pc_equals: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Ecall,
    Ebreak,
    PcReached(u32),
    Exit(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IssError {
    #[error("step limit reached after {retired} instructions")]
    StepLimit { retired: u64 },
    #[error("WFI at {pc:#010x} can never wake: no enabled interrupt source")]
    WfiDeadlock { pc: u32 },
}

#[derive(Debug, Clone)]
pub struct IssRun {
    pub trace: Vec<StepResult>,
    pub reason: StopReason,
}

#[derive(Debug, Clone)]
pub struct Iss {
    pub state: ArchState,
    pub misaligned_trap: bool,
    /// Take pending interrupts before each fetch. The lockstep harness turns
    /// this off and injects interrupts where the pipeline took them.
    pub poll_interrupts: bool,
    /// Refresh `mip` from the bus before each step. Turned off when the
    /// caller supplies the interrupt lines itself.
    pub sync_mip: bool,
}

struct Exec {
    next_pc: u32,
    writeback: Option<(u8, u32)>,
    trap: Option<TrapCause>,
    mem: Option<MemEffect>,
    mret: bool,
    wfi: bool,
}

impl Iss {
    pub fn new(reset_pc: u32, misaligned_trap: bool) -> Self {
        Iss {
            state: ArchState::new(reset_pc),
            misaligned_trap,
            poll_interrupts: true,
            sync_mip: true,
        }
    }

    fn sync_interrupt_lines(&mut self, bus: &Bus) {
        if self.sync_mip {
            self.state.csrs.mip = bus.interrupt_lines();
        }
    }

    /// Execute one instruction (or one sleeping time unit).
    pub fn step(&mut self, bus: &mut Bus) -> Step {
        self.step_with(bus, None)
    }

    /// Like [`Iss::step`], but a load retired by this step returns
    /// `load_override` instead of the bus data. Used to replay timing
    /// dependent device reads.
    pub fn step_with(&mut self, bus: &mut Bus, load_override: Option<u32>) -> Step {
        self.sync_interrupt_lines(bus);
        if self.state.waiting_for_interrupt {
            if !self.state.wake_condition() {
                self.state.csrs.mcycle = self.state.csrs.mcycle.wrapping_add(1);
                bus.advance_time(1);
                return Step::Waiting;
            }
            self.state.waiting_for_interrupt = false;
        }
        let mut interrupt = None;
        if self.poll_interrupts {
            if let Some(cause) = self.state.pending_interrupt() {
                let pc = self.state.pc;
                self.state.trap_enter(cause, pc);
                interrupt = Some(cause);
            }
        }
        let result = self.execute_one(bus, load_override, interrupt);
        self.state.csrs.mcycle = self.state.csrs.mcycle.wrapping_add(1);
        bus.advance_time(1);
        Step::Retired(result)
    }

    /// Enter an interrupt handler now, as if the interrupt had been sampled
    /// before the next fetch.
    pub fn take_interrupt(&mut self, cause: TrapCause) {
        let pc = self.state.pc;
        self.state.trap_enter(cause, pc);
    }

    fn execute_one(
        &mut self,
        bus: &mut Bus,
        load_override: Option<u32>,
        interrupt: Option<TrapCause>,
    ) -> StepResult {
        let pc = self.state.pc;
        let fetched = bus.access(&BusTransaction::fetch(pc));
        let (raw, decoded) = if fetched.is_ok() {
            (fetched.rdata, Some(isa::decode(fetched.rdata)))
        } else {
            (0, None)
        };
        let (instr, exec) = match decoded {
            None => (
                None,
                Exec::trap(TrapCause::exception(Exception::InstructionAccessFault, pc)),
            ),
            Some(Err(illegal)) => (None, Exec::trap(TrapCause::illegal(illegal.raw))),
            Some(Ok(inst)) => (Some(inst), self.execute(&inst, pc, bus, load_override)),
        };

        if let Some(cause) = exec.trap {
            self.state.trap_enter(cause, pc);
        } else {
            if let Some((rd, v)) = exec.writeback {
                self.state.regs.write(rd, v);
            }
            if exec.mret {
                self.state.trap_return();
            } else {
                self.state.pc = exec.next_pc;
            }
            if exec.wfi {
                self.state.waiting_for_interrupt = true;
            }
        }
        // An explicit minstret write by this instruction wins over the increment.
        let wrote_minstret =
            exec.trap.is_none() && instr.is_some_and(|i| CsrFile::writes_minstret(&i));
        if !wrote_minstret {
            self.state.csrs.minstret = self.state.csrs.minstret.wrapping_add(1);
        }
        StepResult {
            pc,
            raw,
            instr,
            next_pc: self.state.pc,
            writeback: if exec.trap.is_none() {
                exec.writeback.filter(|&(rd, _)| rd != 0)
            } else {
                None
            },
            trap: exec.trap,
            interrupt,
            mem: exec.mem,
        }
    }

    fn execute(
        &mut self,
        inst: &Instruction,
        pc: u32,
        bus: &mut Bus,
        load_override: Option<u32>,
    ) -> Exec {
        use Mnemonic::*;
        let a = self.state.regs.read(inst.rs1);
        let b = self.state.regs.read(inst.rs2);
        let imm = inst.imm as u32;
        let seq = pc.wrapping_add(4);
        let mut ex = Exec {
            next_pc: seq,
            writeback: None,
            trap: None,
            mem: None,
            mret: false,
            wfi: false,
        };
        let jump = |ex: &mut Exec, target: u32| {
            if target & 3 != 0 {
                ex.trap = Some(TrapCause::exception(Exception::InstructionMisaligned, target));
            } else {
                ex.next_pc = target;
            }
        };
        match inst.mnemonic {
            Lui => ex.writeback = Some((inst.rd, imm)),
            Auipc => ex.writeback = Some((inst.rd, pc.wrapping_add(imm))),
            Jal => {
                jump(&mut ex, pc.wrapping_add(imm));
                ex.writeback = Some((inst.rd, seq));
            }
            Jalr => {
                jump(&mut ex, a.wrapping_add(imm) & !1);
                ex.writeback = Some((inst.rd, seq));
            }
            Beq | Bne | Blt | Bge | Bltu | Bgeu => {
                if branch_taken(inst.mnemonic, a, b) {
                    jump(&mut ex, pc.wrapping_add(imm));
                }
            }
            Lb | Lh | Lw | Lbu | Lhu => {
                let addr = a.wrapping_add(imm);
                let size = inst.mnemonic.access_size().unwrap();
                match self.memory(bus, addr, size, None) {
                    Ok(raw) => {
                        let value = load_override.unwrap_or_else(|| load_extend(inst.mnemonic, raw));
                        ex.writeback = Some((inst.rd, value));
                        ex.mem = Some(MemEffect {
                            address: addr,
                            size,
                            direction: Direction::Read,
                            value,
                        });
                    }
                    Err(cause) => ex.trap = Some(cause),
                }
            }
            Sb | Sh | Sw => {
                let addr = a.wrapping_add(imm);
                let size = inst.mnemonic.access_size().unwrap();
                let data = if size == 4 { b } else { b & ((1 << (8 * size)) - 1) };
                match self.memory(bus, addr, size, Some(data)) {
                    Ok(_) => {
                        ex.mem = Some(MemEffect {
                            address: addr,
                            size,
                            direction: Direction::Write,
                            value: data,
                        })
                    }
                    Err(cause) => ex.trap = Some(cause),
                }
            }
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => {
                ex.writeback = Some((inst.rd, alu_eval(inst.mnemonic, a, imm)))
            }
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And => {
                ex.writeback = Some((inst.rd, alu_eval(inst.mnemonic, a, b)))
            }
            Fence | FenceI => {}
            Ecall => ex.trap = Some(TrapCause::exception(Exception::EcallFromM, 0)),
            Ebreak => ex.trap = Some(TrapCause::exception(Exception::Breakpoint, 0)),
            Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
                match self.state.csr_access(inst, a) {
                    Ok(old) => ex.writeback = Some((inst.rd, old)),
                    Err(cause) => ex.trap = Some(cause),
                }
            }
            Mret => ex.mret = true,
            Wfi => ex.wfi = true,
        }
        ex
    }

    /// Zero-latency data access with the configured misalignment policy.
    fn memory(
        &mut self,
        bus: &mut Bus,
        addr: u32,
        size: u32,
        store: Option<u32>,
    ) -> Result<u32, TrapCause> {
        let (misaligned, fault) = match store {
            None => (Exception::LoadMisaligned, Exception::LoadAccessFault),
            Some(_) => (Exception::StoreMisaligned, Exception::StoreAccessFault),
        };
        if !addr.is_multiple_of(size) && self.misaligned_trap {
            return Err(TrapCause::exception(misaligned, addr));
        }
        let mut value = 0u32;
        for (part, len) in split_access(addr, size) {
            let shift = 8 * (part - addr);
            let txn = match store {
                None => BusTransaction::read(part, len),
                Some(data) => BusTransaction::write(part, len, data >> shift),
            };
            let resp = bus.access(&txn);
            if !resp.is_ok() {
                return Err(TrapCause::exception(fault, addr));
            }
            value |= resp.rdata << shift;
        }
        Ok(value)
    }

    /// Step until a stop condition holds. Sleeping in WFI fast-forwards the
    /// timer to `mtimecmp` when the timer interrupt is enabled.
    pub fn run_until(&mut self, bus: &mut Bus, stop: StopCondition) -> Result<IssRun, IssError> {
        let mut trace = Vec::new();
        loop {
            if let Some(max) = stop.max_steps {
                if trace.len() as u64 >= max {
                    return Err(IssError::StepLimit {
                        retired: trace.len() as u64,
                    });
                }
            }
            match self.step(bus) {
                Step::Waiting => {
                    let timer_enabled = self.state.csrs.mie & crate::arch::MIP_MTIP != 0;
                    if timer_enabled && bus.timer.mtimecmp != u64::MAX {
                        if bus.timer.mtime < bus.timer.mtimecmp {
                            bus.timer.mtime = bus.timer.mtimecmp;
                        }
                    } else if !self.state.wake_condition() {
                        return Err(IssError::WfiDeadlock { pc: self.state.pc });
                    }
                }
                Step::Retired(r) => {
                    let mnemonic = r.instr.map(|i| i.mnemonic);
                    trace.push(r);
                    let reason = if let Some(code) = bus.exit_code() {
                        Some(StopReason::Exit(code))
                    } else if stop.on_ecall && mnemonic == Some(Mnemonic::Ecall) {
                        Some(StopReason::Ecall)
                    } else if stop.on_ebreak && mnemonic == Some(Mnemonic::Ebreak) {
                        Some(StopReason::Ebreak)
                    } else if stop.pc_equals == Some(self.state.pc) {
                        Some(StopReason::PcReached(self.state.pc))
                    } else {
                        None
                    };
                    if let Some(reason) = reason {
                        return Ok(IssRun { trace, reason });
                    }
                }
            }
        }
    }
}

impl Exec {
    fn trap(cause: TrapCause) -> Self {
        Exec {
            next_pc: 0,
            writeback: None,
            trap: Some(cause),
            mem: None,
            mret: false,
            wfi: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::{MemoryMap, DEFAULT_RAM_BASE, DEFAULT_ROM_BASE};
    use crate::isa::Mnemonic::*;

    fn setup(words: &[Instruction]) -> (Iss, Bus) {
        let mut bus = Bus::new(MemoryMap::default());
        let bytes: Vec<u8> = words.iter().flat_map(|i| i.raw.to_le_bytes()).collect();
        assert!(bus.load_bytes(DEFAULT_ROM_BASE, &bytes));
        (Iss::new(DEFAULT_ROM_BASE, false), bus)
    }

    fn ins(m: Mnemonic, rd: u8, rs1: u8, rs2: u8, imm: i32) -> Instruction {
        Instruction::new(m, rd, rs1, rs2, imm, 0).unwrap()
    }

    fn retired(step: Step) -> StepResult {
        match step {
            Step::Retired(r) => r,
            Step::Waiting => panic!("unexpected wait"),
        }
    }

    #[test]
    fn alu_examples() {
        assert_eq!(alu_eval(Add, 0x7FFF_FFFF, 1), 0x8000_0000);
        assert_eq!(alu_eval(Sra, 0x8000_0000, 31), 0xFFFF_FFFF);
        assert_eq!(alu_eval(Sltu, 0xFFFF_FFFF, 1), 0);
        assert_eq!(alu_eval(Slt, 0xFFFF_FFFF, 1), 1);
        assert_eq!(alu_eval(Sll, 1, 33), 2);
    }

    #[test]
    fn split_pieces() {
        assert_eq!(split_access(0x100, 4), vec![(0x100, 4)]);
        assert_eq!(split_access(0x101, 4), vec![(0x101, 1), (0x102, 2), (0x104, 1)]);
        assert_eq!(split_access(0x102, 4), vec![(0x102, 2), (0x104, 2)]);
        assert_eq!(split_access(0x103, 2), vec![(0x103, 1), (0x104, 1)]);
        assert_eq!(split_access(0x101, 2), vec![(0x101, 1), (0x102, 1)]);
    }

    #[test]
    fn addi_then_branch() {
        let (mut iss, mut bus) = setup(&[ins(Addi, 1, 0, 0, 10), ins(Beq, 0, 0, 0, -4)]);
        let r = retired(iss.step(&mut bus));
        assert_eq!(r.writeback, Some((1, 10)));
        assert_eq!(r.next_pc, DEFAULT_ROM_BASE + 4);
        let r = retired(iss.step(&mut bus));
        assert_eq!(r.next_pc, DEFAULT_ROM_BASE);
        assert_eq!(r.writeback, None);
    }

    #[test]
    fn misaligned_load_traps_when_configured() {
        let (mut iss, mut bus) = setup(&[ins(Lw, 1, 0, 0, 3)]);
        iss.misaligned_trap = true;
        let r = retired(iss.step(&mut bus));
        assert_eq!(r.trap, Some(TrapCause::exception(Exception::LoadMisaligned, 3)));
        assert_eq!(iss.state.csrs.mtval, 3);
    }

    #[test]
    fn misaligned_load_splits_otherwise() {
        let (mut iss, mut bus) = setup(&[
            ins(Lui, 2, 0, 0, DEFAULT_RAM_BASE as i32),
            ins(Lw, 1, 2, 0, 1),
            ins(Sh, 0, 2, 1, 7),
            ins(Lhu, 3, 2, 0, 7),
        ]);
        bus.load_bytes(DEFAULT_RAM_BASE, &[0x10, 0x11, 0x12, 0x13, 0x14, 0x15]);
        retired(iss.step(&mut bus));
        let r = retired(iss.step(&mut bus));
        assert_eq!(r.writeback, Some((1, 0x1413_1211)));
        retired(iss.step(&mut bus));
        let r = retired(iss.step(&mut bus));
        assert_eq!(r.writeback, Some((3, 0x1211)));
    }

    #[test]
    fn jalr_clears_bit_zero() {
        let (mut iss, mut bus) = setup(&[ins(Jalr, 1, 3, 0, 1)]);
        iss.state.regs.write(3, 0x8000_0000);
        let r = retired(iss.step(&mut bus));
        assert_eq!(r.trap, None);
        assert_eq!(r.next_pc, 0x8000_0000);
        assert_eq!(r.writeback, Some((1, DEFAULT_ROM_BASE + 4)));
    }

    #[test]
    fn jalr_sum_with_bit_one_set_traps() {
        // 0x8000_0001 + 1 = 0x8000_0002: bit 0 is already clear, bit 1 is not.
        let (mut iss, mut bus) = setup(&[ins(Jalr, 1, 3, 0, 1)]);
        iss.state.regs.write(3, 0x8000_0001);
        let r = retired(iss.step(&mut bus));
        assert_eq!(
            r.trap,
            Some(TrapCause::exception(Exception::InstructionMisaligned, 0x8000_0002))
        );
    }

    #[test]
    fn jalr_to_misaligned_target_traps() {
        let (mut iss, mut bus) = setup(&[ins(Jalr, 1, 3, 0, 0)]);
        iss.state.regs.write(3, 0x8000_0006);
        let r = retired(iss.step(&mut bus));
        assert_eq!(
            r.trap,
            Some(TrapCause::exception(Exception::InstructionMisaligned, 0x8000_0006))
        );
        assert_eq!(iss.state.regs.read(1), 0);
    }

    #[test]
    fn bus_error_becomes_access_fault() {
        let (mut iss, mut bus) = setup(&[ins(Lw, 1, 0, 0, 0), ins(Sw, 0, 0, 1, 8)]);
        let r = retired(iss.step(&mut bus));
        assert_eq!(r.trap, Some(TrapCause::exception(Exception::LoadAccessFault, 0)));
        assert_eq!(r.mem, None);
        iss.state.pc = DEFAULT_ROM_BASE + 4;
        let r = retired(iss.step(&mut bus));
        assert_eq!(r.trap, Some(TrapCause::exception(Exception::StoreAccessFault, 8)));
    }

    #[test]
    fn ecall_and_ebreak_stop_conditions() {
        let mut prog: Vec<Instruction> = (0..5).map(|i| ins(Addi, 1, 1, 0, i)).collect();
        prog.push(Instruction::new(Ebreak, 0, 0, 0, 0, 0).unwrap());
        let (mut iss, mut bus) = setup(&prog);
        let run = iss
            .run_until(
                &mut bus,
                StopCondition {
                    max_steps: Some(100),
                    on_ebreak: true,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(run.reason, StopReason::Ebreak);
        assert_eq!(run.trace.len(), 6);
        assert_eq!(iss.state.csrs.minstret, run.trace.len() as u64);

        prog.pop();
        prog.push(Instruction::new(Ecall, 0, 0, 0, 0, 0).unwrap());
        let (mut iss, mut bus) = setup(&prog);
        let run = iss
            .run_until(
                &mut bus,
                StopCondition {
                    on_ecall: true,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(run.trace.len(), prog.len());
    }

    #[test]
    fn step_limit_and_wfi_deadlock_are_distinct() {
        let (mut iss, mut bus) = setup(&[ins(Beq, 0, 0, 0, 0)]);
        let err = iss
            .run_until(
                &mut bus,
                StopCondition {
                    max_steps: Some(10),
                    ..Default::default()
                },
            )
            .unwrap_err();
        assert_eq!(err, IssError::StepLimit { retired: 10 });

        let (mut iss, mut bus) = setup(&[Instruction::new(Wfi, 0, 0, 0, 0, 0).unwrap()]);
        let err = iss.run_until(&mut bus, StopCondition::default()).unwrap_err();
        assert!(matches!(err, IssError::WfiDeadlock { .. }));
    }
}
