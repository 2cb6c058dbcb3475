//! Cycle-level model of the in-order core: a fetch unit feeding an
//! instruction FIFO, decode with operand bypass, execute, and a combined
//! load/store and writeback stage where every architectural effect commits.
//!
//! Each [`Core::tick`] runs in three phases. First the load/store stage and
//! the fetch unit offer bus transactions, then the bus advances one cycle,
//! then the stages update from the back of the pipe to the front.

use std::collections::VecDeque;

use serde::Serialize;

use crate::arch::{ArchState, CsrFile, Exception, TrapCause};
use crate::bus::{Bus, BusTransaction, Direction, Latency, MemoryMap, Port, DEFAULT_ROM_BASE};
use crate::isa::{self, Instruction, Mnemonic};
use crate::iss::{alu_eval, branch_taken, load_extend, split_access, MemEffect};
use crate::program::{LoadError, LoadedImage};

#[derive(Debug, Clone)]
pub struct CoreConfig {
    pub fifo_depth: usize,
    pub misaligned_trap: bool,
    pub imem_latency: Latency,
    pub dmem_latency: Latency,
    pub reset_pc: u32,
    pub map: MemoryMap,
    pub seed: u64,
}

impl Default for CoreConfig {
    fn default() -> Self {
        CoreConfig {
            fifo_depth: 2,
            misaligned_trap: false,
            imem_latency: Latency::Fixed(0),
            dmem_latency: Latency::Fixed(0),
            reset_pc: DEFAULT_ROM_BASE,
            map: MemoryMap::default(),
            seed: 0,
        }
    }
}

/// Why a stage holds no instruction in a given cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Bubble {
    /// Pipeline start-up after reset.
    Fill,
    /// The FIFO was empty because fetch could not keep up.
    FetchStall,
    /// Refill after a taken branch, jump, trap or interrupt.
    Flush,
    /// Decode held behind a CSR instruction.
    Serialize,
    /// Decode asleep after WFI.
    Wfi,
}

/// Where decode took an operand value from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BypassSource {
    RegFile,
    /// Result of the instruction leaving execute this cycle.
    ExecuteOut,
    /// Load data, captured in execute the cycle the load commits.
    LsuData,
    /// Value committed this cycle.
    Writeback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct PipelineStats {
    pub cycles: u64,
    pub instret: u64,
    pub fill_cycles: u64,
    pub stall_cycles_fetch: u64,
    pub stall_cycles_lsu: u64,
    pub flush_bubbles: u64,
    pub serialize_cycles: u64,
    pub wfi_cycles: u64,
    pub flush_count: u64,
    pub traps: u64,
    pub interrupts: u64,
    pub fifo_occupancy_sum: u64,
    pub misaligned_splits: u64,
    pub bypass_execute: u64,
    pub bypass_lsu: u64,
    pub bypass_writeback: u64,
}

impl PipelineStats {
    pub fn cpi(&self) -> Option<f64> {
        (self.instret > 0).then(|| self.cycles as f64 / self.instret as f64)
    }

    pub fn fifo_avg_occupancy(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.fifo_occupancy_sum as f64 / self.cycles as f64
        }
    }

    /// Sum of every non-retiring cycle category.
    pub fn lost_cycles(&self) -> u64 {
        self.fill_cycles
            + self.stall_cycles_fetch
            + self.stall_cycles_lsu
            + self.flush_bubbles
            + self.serialize_cycles
            + self.wfi_cycles
    }

    /// Every cycle is either a retirement or exactly one kind of lost cycle.
    pub fn accounting_holds(&self) -> bool {
        self.cycles == self.instret + self.lost_cycles()
    }

    fn count(&mut self, bubble: Bubble) {
        match bubble {
            Bubble::Fill => self.fill_cycles += 1,
            Bubble::FetchStall => self.stall_cycles_fetch += 1,
            Bubble::Flush => self.flush_bubbles += 1,
            Bubble::Serialize => self.serialize_cycles += 1,
            Bubble::Wfi => self.wfi_cycles += 1,
        }
    }
}

/// Everything observable about one commit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetireEvent {
    pub cycle: u64,
    pub pc: u32,
    pub raw: u32,
    /// `None` for fetch faults, illegal words and interrupt entries.
    pub instr: Option<Instruction>,
    pub writeback: Option<(u8, u32)>,
    pub trap: Option<TrapCause>,
    /// Set when this event is an interrupt entry rather than an instruction.
    pub interrupt: Option<TrapCause>,
    pub mem: Option<MemEffect>,
    pub next_pc: u32,
    /// `mip` as sampled at the start of the commit cycle.
    pub mip: u32,
}

impl RetireEvent {
    pub fn is_instruction(&self) -> bool {
        self.interrupt.is_none()
    }

    pub fn trace_line(&self) -> String {
        trace_line(&format!("C{}", self.cycle), self.pc, self.raw, self.instr.as_ref(), self.writeback)
    }
}

/// `<prefix> <pc> <raw> <disassembly> [x<rd>=<value>]`
pub fn trace_line(
    prefix: &str,
    pc: u32,
    raw: u32,
    instr: Option<&Instruction>,
    writeback: Option<(u8, u32)>,
) -> String {
    let text = instr.map_or_else(|| "illegal".to_string(), isa::disassemble);
    let mut line = format!("{prefix} {pc:08x} {raw:08x} {text}");
    if let Some((rd, v)) = writeback.filter(|&(rd, _)| rd != 0) {
        line.push_str(&format!(" x{rd}={v:08x}"));
    }
    line
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halt {
    Exit(u32),
    Ebreak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Exit(u32),
    Ebreak,
    MaxCycles,
    /// Asleep in WFI with an empty pipeline and no enabled interrupt source
    /// that could ever wake it.
    WfiSleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Operand {
    Value(u32),
    PendingLoad(u8),
}

#[derive(Debug, Clone, Copy)]
struct FifoEntry {
    pc: u32,
    /// `None` when the fetch returned a bus error.
    word: Option<u32>,
}

#[derive(Debug, Clone)]
enum Slot<T> {
    Bubble(Bubble),
    Busy(T),
}

/// Decode to execute latch.
#[derive(Debug, Clone)]
struct Issued {
    pc: u32,
    raw: u32,
    instr: Option<Instruction>,
    a: Operand,
    b: Operand,
    fault: Option<TrapCause>,
    interrupt: Option<TrapCause>,
}

#[derive(Debug, Clone)]
struct MemOp {
    mnemonic: Mnemonic,
    rd: u8,
    addr: u32,
    size: u32,
    data: u32,
    parts: Vec<(u32, u32)>,
    next: usize,
    issued: bool,
    value: u32,
    failed: bool,
}

impl MemOp {
    fn is_store(&self) -> bool {
        self.mnemonic.is_store()
    }

    fn done(&self) -> bool {
        self.failed || self.next == self.parts.len()
    }
}

#[derive(Debug, Clone)]
enum Action {
    Nothing,
    Write(u8, u32),
    Mem(MemOp),
    /// CSR access with the rs1 value; performed at commit.
    Csr(u32),
    Mret,
    Trap(TrapCause),
    Interrupt(TrapCause),
}

/// Execute to load/store-writeback latch.
#[derive(Debug, Clone)]
struct Committing {
    pc: u32,
    raw: u32,
    instr: Option<Instruction>,
    action: Action,
    next_pc: u32,
}

impl Committing {
    /// Register this entry will write, if it is still in flight.
    fn dest(&self) -> Option<u8> {
        let rd = match &self.action {
            Action::Write(rd, _) => *rd,
            Action::Mem(op) if !op.is_store() => op.rd,
            Action::Csr(_) => self.instr?.rd,
            _ => return None,
        };
        (rd != 0).then_some(rd)
    }
}

#[derive(Debug, Clone)]
pub struct Core {
    config: CoreConfig,
    state: ArchState,
    bus: Bus,
    fifo: VecDeque<FifoEntry>,
    fetch_pc: u32,
    fetch_inflight: Option<(u32, u64)>,
    epoch: u64,
    exec: Slot<Issued>,
    commit: Slot<Committing>,
    cycle: u64,
    redirect_cycle: Option<u64>,
    wfi_sleep: bool,
    wfi_hold: bool,
    lsu_tap: Option<(u8, u32)>,
    wb_tap: Option<(u8, u32)>,
    mcycle_written: bool,
    stats: PipelineStats,
    halted: Option<Halt>,
    bypass_fault: bool,
}

impl Core {
    pub fn new(config: CoreConfig) -> Self {
        let mut bus = Bus::new(config.map.clone());
        bus.set_latency(Port::Instruction, config.imem_latency);
        bus.set_latency(Port::Data, config.dmem_latency);
        bus.seed(config.seed);
        let pc = config.reset_pc;
        Core {
            state: ArchState::new(pc),
            bus,
            fifo: VecDeque::new(),
            fetch_pc: pc,
            fetch_inflight: None,
            epoch: 0,
            exec: Slot::Bubble(Bubble::Fill),
            commit: Slot::Bubble(Bubble::Fill),
            cycle: 0,
            redirect_cycle: None,
            wfi_sleep: false,
            wfi_hold: false,
            lsu_tap: None,
            wb_tap: None,
            mcycle_written: false,
            stats: PipelineStats::default(),
            halted: None,
            bypass_fault: false,
            config,
        }
    }

    /// Build a core and load an image, starting at its entry point.
    pub fn with_image(config: CoreConfig, image: &LoadedImage) -> Result<Self, LoadError> {
        let mut core = Core::new(config);
        image.write_to(&mut core.bus)?;
        core.reset_pc(image.entry);
        Ok(core)
    }

    /// Restart execution at `pc` with a fresh architectural state. Memory
    /// contents are kept.
    pub fn reset_pc(&mut self, pc: u32) {
        self.state = ArchState::new(pc);
        self.fifo.clear();
        self.fetch_pc = pc;
        self.epoch += 1;
        self.exec = Slot::Bubble(Bubble::Fill);
        self.commit = Slot::Bubble(Bubble::Fill);
        self.cycle = 0;
        self.redirect_cycle = None;
        self.wfi_sleep = false;
        self.wfi_hold = false;
        self.stats = PipelineStats::default();
        self.halted = None;
    }

    pub fn config(&self) -> &CoreConfig {
        &self.config
    }

    pub fn state(&self) -> &ArchState {
        &self.state
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn bus_mut(&mut self) -> &mut Bus {
        &mut self.bus
    }

    pub fn stats(&self) -> &PipelineStats {
        &self.stats
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn halted(&self) -> Option<Halt> {
        self.halted
    }

    /// True when decode spent the last cycle asleep in WFI.
    pub fn sleeping(&self) -> bool {
        self.wfi_hold
    }

    /// Test hook: make the execute-output bypass path return the stale
    /// register file value instead of the forwarded result.
    pub fn set_bypass_fault(&mut self, on: bool) {
        self.bypass_fault = on;
    }

    /// Advance one clock cycle. Returns the commit of this cycle, if any.
    pub fn tick(&mut self) -> Option<RetireEvent> {
        if self.halted.is_some() {
            return None;
        }
        self.cycle += 1;
        self.stats.cycles += 1;
        self.state.csrs.mip = self.bus.interrupt_lines();
        self.lsu_tap = None;
        self.wb_tap = None;
        self.mcycle_written = false;

        // Requests.
        if let Slot::Busy(c) = &mut self.commit {
            if let Action::Mem(op) = &mut c.action {
                if !op.issued && !op.done() {
                    let (addr, len) = op.parts[op.next];
                    let txn = if op.is_store() {
                        BusTransaction::write(addr, len, op.data >> (8 * (addr - op.addr)))
                    } else {
                        BusTransaction::read(addr, len)
                    };
                    op.issued = self.bus.issue(txn);
                }
            }
        }
        if self.fetch_inflight.is_none()
            && self.fifo.len() < self.config.fifo_depth
            && self.bus.issue(BusTransaction::fetch(self.fetch_pc))
        {
            self.fetch_inflight = Some((self.fetch_pc, self.epoch));
            self.fetch_pc = self.fetch_pc.wrapping_add(4);
        }

        let responses = self.bus.tick();

        // Load/store and writeback.
        let mut event = None;
        let free = match std::mem::replace(&mut self.commit, Slot::Bubble(Bubble::Fill)) {
            Slot::Bubble(b) => {
                self.stats.count(b);
                true
            }
            Slot::Busy(mut c) => {
                if let Action::Mem(op) = &mut c.action {
                    if let Some(resp) = responses.data {
                        op.issued = false;
                        if resp.is_ok() {
                            let (addr, _) = op.parts[op.next];
                            op.value |= resp.rdata << (8 * (addr - op.addr));
                            op.next += 1;
                        } else {
                            op.failed = true;
                        }
                    }
                }
                let ready = match &c.action {
                    Action::Mem(op) => op.done(),
                    _ => true,
                };
                if ready {
                    event = Some(self.retire(c));
                    true
                } else {
                    self.stats.stall_cycles_lsu += 1;
                    self.commit = Slot::Busy(c);
                    false
                }
            }
        };

        if free {
            // Execute, then decode.
            self.commit = match std::mem::replace(&mut self.exec, Slot::Bubble(Bubble::Fill)) {
                Slot::Bubble(b) => Slot::Bubble(b),
                Slot::Busy(issued) => Slot::Busy(self.execute(issued)),
            };
            self.exec = self.decode();
        } else {
            self.wfi_hold = false;
        }

        // Fetch response.
        if let Some(resp) = responses.instruction {
            if let Some((pc, epoch)) = self.fetch_inflight.take() {
                if epoch == self.epoch {
                    self.fifo.push_back(FifoEntry {
                        pc,
                        word: resp.is_ok().then_some(resp.rdata),
                    });
                }
            }
        }

        self.stats.fifo_occupancy_sum += self.fifo.len() as u64;
        if !self.mcycle_written {
            self.state.csrs.mcycle = self.state.csrs.mcycle.wrapping_add(1);
        }
        if self.halted.is_none() {
            if let Some(code) = self.bus.exit_code() {
                self.halted = Some(Halt::Exit(code));
            }
        }
        event
    }

    /// Tick until the program halts or `max_cycles` have elapsed in total,
    /// handing every commit to `observer`.
    pub fn run(&mut self, max_cycles: u64, mut observer: impl FnMut(&RetireEvent)) -> RunOutcome {
        loop {
            match self.halted {
                Some(Halt::Exit(code)) => return RunOutcome::Exit(code),
                Some(Halt::Ebreak) => return RunOutcome::Ebreak,
                None => {}
            }
            if self.stuck_in_wfi() {
                return RunOutcome::WfiSleep;
            }
            if self.cycle >= max_cycles {
                return RunOutcome::MaxCycles;
            }
            if let Some(ev) = self.tick() {
                observer(&ev);
            }
        }
    }

    fn stuck_in_wfi(&self) -> bool {
        let drained = matches!(self.exec, Slot::Bubble(_)) && matches!(self.commit, Slot::Bubble(_));
        self.wfi_hold && drained && !self.can_wake()
    }

    /// Whether some enabled interrupt source could still end a WFI sleep.
    fn can_wake(&self) -> bool {
        let mie = self.state.csrs.mie;
        let timer = mie & crate::arch::MIP_MTIP != 0 && self.bus.timer.mtimecmp != u64::MAX;
        timer || self.state.wake_condition()
    }

    fn redirect(&mut self, target: u32) {
        self.fifo.clear();
        self.epoch += 1;
        self.fetch_pc = target;
        self.redirect_cycle = Some(self.cycle);
        self.stats.flush_count += 1;
    }

    fn flush_all(&mut self, target: u32) {
        self.redirect(target);
        if matches!(self.exec, Slot::Busy(_)) {
            self.exec = Slot::Bubble(Bubble::Flush);
        }
        self.wfi_sleep = false;
    }

    fn retire(&mut self, c: Committing) -> RetireEvent {
        let mut ev = RetireEvent {
            cycle: self.cycle,
            pc: c.pc,
            raw: c.raw,
            instr: c.instr,
            writeback: None,
            trap: None,
            interrupt: None,
            mem: None,
            next_pc: c.next_pc,
            mip: self.state.csrs.mip,
        };
        let mut trap = None;
        let mut mret = false;
        match c.action {
            Action::Interrupt(cause) => {
                self.state.trap_enter(cause, c.pc);
                self.stats.flush_bubbles += 1;
                self.stats.interrupts += 1;
                ev.interrupt = Some(cause);
                ev.next_pc = self.state.pc;
                return ev;
            }
            Action::Trap(cause) => trap = Some(cause),
            Action::Nothing => {}
            Action::Write(rd, v) => ev.writeback = Some((rd, v)),
            Action::Mem(op) => {
                let direction = if op.is_store() {
                    Direction::Write
                } else {
                    Direction::Read
                };
                if op.failed {
                    let e = if op.is_store() {
                        Exception::StoreAccessFault
                    } else {
                        Exception::LoadAccessFault
                    };
                    trap = Some(TrapCause::exception(e, op.addr));
                } else {
                    let value = if op.is_store() {
                        op.data
                    } else {
                        let v = load_extend(op.mnemonic, op.value);
                        ev.writeback = Some((op.rd, v));
                        self.lsu_tap = Some((op.rd, v));
                        v
                    };
                    ev.mem = Some(MemEffect {
                        address: op.addr,
                        size: op.size,
                        direction,
                        value,
                    });
                }
            }
            Action::Csr(src) => {
                let inst = c.instr.expect("csr action without instruction");
                match self.state.csr_access(&inst, src) {
                    Ok(old) => ev.writeback = Some((inst.rd, old)),
                    Err(cause) => trap = Some(cause),
                }
            }
            Action::Mret => mret = true,
        }

        let instr = c.instr;
        if let Some(cause) = trap {
            let halt = instr.is_some_and(|i| i.mnemonic == Mnemonic::Ebreak)
                && self.state.csrs.mtvec == 0;
            self.state.trap_enter(cause, c.pc);
            self.stats.traps += 1;
            ev.trap = Some(cause);
            ev.writeback = None;
            let target = self.state.pc;
            self.flush_all(target);
            if halt {
                self.halted = Some(Halt::Ebreak);
            }
        } else {
            if let Some((rd, v)) = ev.writeback {
                self.state.regs.write(rd, v);
                self.wb_tap = Some((rd, v));
            }
            if mret {
                self.state.trap_return();
            } else {
                self.state.pc = c.next_pc;
            }
            self.mcycle_written = instr.is_some_and(|i| CsrFile::writes_mcycle(&i));
        }
        let wrote_minstret = trap.is_none() && instr.is_some_and(|i| CsrFile::writes_minstret(&i));
        if !wrote_minstret {
            self.state.csrs.minstret = self.state.csrs.minstret.wrapping_add(1);
        }
        self.stats.instret += 1;
        ev.writeback = ev.writeback.filter(|&(rd, _)| rd != 0);
        ev.next_pc = self.state.pc;
        ev
    }

    fn resolve(&mut self, op: Operand) -> u32 {
        match op {
            Operand::Value(v) => v,
            Operand::PendingLoad(reg) => match self.lsu_tap {
                Some((rd, v)) if rd == reg => {
                    self.stats.bypass_lsu += 1;
                    v
                }
                _ => unreachable!("load result for x{reg} not available"),
            },
        }
    }

    fn execute(&mut self, issued: Issued) -> Committing {
        use Mnemonic::*;
        let pc = issued.pc;
        let seq = pc.wrapping_add(4);
        let mut out = Committing {
            pc,
            raw: issued.raw,
            instr: issued.instr,
            action: Action::Nothing,
            next_pc: seq,
        };
        if let Some(cause) = issued.interrupt {
            out.action = Action::Interrupt(cause);
            out.next_pc = pc;
            return out;
        }
        if let Some(cause) = issued.fault {
            out.action = Action::Trap(cause);
            return out;
        }
        let inst = issued.instr.expect("issued without instruction");
        let a = self.resolve(issued.a);
        let b = self.resolve(issued.b);
        let imm = inst.imm as u32;
        let mut target = None;
        out.action = match inst.mnemonic {
            Lui => Action::Write(inst.rd, imm),
            Auipc => Action::Write(inst.rd, pc.wrapping_add(imm)),
            Jal => {
                target = Some(pc.wrapping_add(imm));
                Action::Write(inst.rd, seq)
            }
            Jalr => {
                target = Some(a.wrapping_add(imm) & !1);
                Action::Write(inst.rd, seq)
            }
            Beq | Bne | Blt | Bge | Bltu | Bgeu => {
                if branch_taken(inst.mnemonic, a, b) {
                    target = Some(pc.wrapping_add(imm));
                }
                Action::Nothing
            }
            Lb | Lh | Lw | Lbu | Lhu | Sb | Sh | Sw => self.memory_op(&inst, a, b),
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => {
                Action::Write(inst.rd, alu_eval(inst.mnemonic, a, imm))
            }
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And => {
                Action::Write(inst.rd, alu_eval(inst.mnemonic, a, b))
            }
            Fence | Wfi => Action::Nothing,
            FenceI => {
                target = Some(seq);
                Action::Nothing
            }
            Ecall => Action::Trap(TrapCause::exception(Exception::EcallFromM, 0)),
            Ebreak => Action::Trap(TrapCause::exception(Exception::Breakpoint, 0)),
            Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => Action::Csr(a),
            Mret => {
                target = Some(self.state.csrs.mepc);
                Action::Mret
            }
        };
        if let Some(t) = target {
            if t & 3 != 0 {
                out.action =
                    Action::Trap(TrapCause::exception(Exception::InstructionMisaligned, t));
            } else {
                out.next_pc = t;
                self.redirect(t);
            }
        }
        out
    }

    fn memory_op(&mut self, inst: &Instruction, a: u32, b: u32) -> Action {
        let addr = a.wrapping_add(inst.imm as u32);
        let size = inst.mnemonic.access_size().expect("memory mnemonic");
        let store = inst.mnemonic.is_store();
        if !addr.is_multiple_of(size) && self.config.misaligned_trap {
            let e = if store {
                Exception::StoreMisaligned
            } else {
                Exception::LoadMisaligned
            };
            return Action::Trap(TrapCause::exception(e, addr));
        }
        let parts = split_access(addr, size);
        if parts.len() > 1 {
            self.stats.misaligned_splits += 1;
        }
        Action::Mem(MemOp {
            mnemonic: inst.mnemonic,
            rd: inst.rd,
            addr,
            size,
            data: if size == 4 { b } else { b & ((1 << (8 * size)) - 1) },
            parts,
            next: 0,
            issued: false,
            value: 0,
            failed: false,
        })
    }

    /// Pick the newest value of `reg` visible to decode.
    fn operand(&mut self, reg: Option<u8>) -> (Operand, BypassSource) {
        let reg = match reg {
            None | Some(0) => return (Operand::Value(0), BypassSource::RegFile),
            Some(r) => r,
        };
        if let Slot::Busy(c) = &self.commit {
            if c.dest() == Some(reg) {
                match &c.action {
                    Action::Write(_, v) if !self.bypass_fault => {
                        self.stats.bypass_execute += 1;
                        return (Operand::Value(*v), BypassSource::ExecuteOut);
                    }
                    Action::Mem(_) => {
                        return (Operand::PendingLoad(reg), BypassSource::LsuData);
                    }
                    _ => {}
                }
                return (Operand::Value(self.state.regs.read(reg)), BypassSource::RegFile);
            }
        }
        if let Some((rd, v)) = self.wb_tap {
            if rd == reg {
                self.stats.bypass_writeback += 1;
                return (Operand::Value(v), BypassSource::Writeback);
            }
        }
        (Operand::Value(self.state.regs.read(reg)), BypassSource::RegFile)
    }

    fn empty_fifo_bubble(&self) -> Bubble {
        if self.cycle == 1 {
            Bubble::Fill
        } else if self.redirect_cycle.is_some_and(|r| self.cycle <= r + 1) {
            Bubble::Flush
        } else {
            Bubble::FetchStall
        }
    }

    fn decode(&mut self) -> Slot<Issued> {
        self.wfi_hold = false;
        if let Slot::Busy(c) = &self.commit {
            match c.action {
                Action::Csr(_) => return Slot::Bubble(Bubble::Serialize),
                Action::Interrupt(_) => return Slot::Bubble(Bubble::Flush),
                _ => {}
            }
        }
        if self.wfi_sleep {
            if !self.state.wake_condition() {
                self.wfi_hold = true;
                return Slot::Bubble(Bubble::Wfi);
            }
            self.wfi_sleep = false;
        }
        let Some(&head) = self.fifo.front() else {
            return Slot::Bubble(self.empty_fifo_bubble());
        };
        if let Some(cause) = self.state.pending_interrupt() {
            let target = self.state.csrs.mtvec & !3;
            self.redirect(target);
            return Slot::Busy(Issued {
                pc: head.pc,
                raw: 0,
                instr: None,
                a: Operand::Value(0),
                b: Operand::Value(0),
                fault: None,
                interrupt: Some(cause),
            });
        }
        self.fifo.pop_front();
        let (raw, instr, fault) = match head.word {
            None => (
                0,
                None,
                Some(TrapCause::exception(Exception::InstructionAccessFault, head.pc)),
            ),
            Some(w) => match isa::decode(w) {
                Ok(i) => (w, Some(i), None),
                Err(e) => (w, None, Some(TrapCause::illegal(e.raw))),
            },
        };
        let (s1, s2) = instr.map_or((None, None), |i| i.sources());
        let (a, _) = self.operand(s1);
        let (b, _) = self.operand(s2);
        if instr.is_some_and(|i| i.mnemonic == Mnemonic::Wfi) {
            self.wfi_sleep = true;
        }
        Slot::Busy(Issued {
            pc: head.pc,
            raw,
            instr,
            a,
            b,
            fault,
            interrupt: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::csr;
    use crate::bus::{DEFAULT_EXIT_BASE, DEFAULT_RAM_BASE};
    use crate::isa::Mnemonic::*;

    fn i(m: Mnemonic, rd: u8, rs1: u8, rs2: u8, imm: i32) -> Instruction {
        Instruction::new(m, rd, rs1, rs2, imm, 0).unwrap()
    }

    fn c(m: Mnemonic, rd: u8, rs1: u8, imm: i32, addr: u16) -> Instruction {
        Instruction::new(m, rd, rs1, 0, imm, addr).unwrap()
    }

    /// `x30` = exit device, store x0 there.
    fn exit_seq() -> Vec<Instruction> {
        vec![
            i(Lui, 30, 0, 0, DEFAULT_EXIT_BASE as i32 & !0xFFF),
            i(Sw, 0, 30, 0, (DEFAULT_EXIT_BASE & 0xFFF) as i32),
        ]
    }

    fn core_with(config: CoreConfig, body: &[Instruction]) -> Core {
        let mut core = Core::new(config);
        let words: Vec<u8> = body
            .iter()
            .chain(exit_seq().iter())
            .flat_map(|i| i.raw.to_le_bytes())
            .collect();
        assert!(core.bus_mut().load_bytes(DEFAULT_ROM_BASE, &words));
        core
    }

    fn run(core: &mut Core) -> Vec<RetireEvent> {
        let mut events = Vec::new();
        let out = core.run(1_000_000, |e| events.push(e.clone()));
        assert_eq!(out, RunOutcome::Exit(0));
        assert!(core.stats().accounting_holds(), "{:?}", core.stats());
        events
    }

    /// Cycles for `body`, less the cost of the fixed exit sequence.
    fn cycles(config: CoreConfig, body: &[Instruction]) -> (u64, PipelineStats) {
        let mut core = core_with(config, body);
        run(&mut core);
        (core.stats().cycles - 2, *core.stats())
    }

    fn addis(n: usize) -> Vec<Instruction> {
        (0..n).map(|k| i(Addi, (k % 8 + 1) as u8, 0, 0, (k % 1000) as i32)).collect()
    }

    #[test]
    fn straight_line_fill() {
        let (cyc, s) = cycles(CoreConfig::default(), &addis(100));
        assert_eq!(cyc, 103);
        assert_eq!(s.fill_cycles, 3);
        assert_eq!(s.stall_cycles_fetch, 0);
        let (cyc, _) = cycles(CoreConfig::default(), &addis(10_000));
        assert_eq!(cyc, 10_003);
    }

    #[test]
    fn dependent_alu_chain_has_no_stall() {
        let mut body = vec![i(Addi, 1, 0, 0, 1)];
        body.extend((0..20).map(|_| i(Add, 1, 1, 1, 0)));
        let mut core = core_with(CoreConfig::default(), &body);
        run(&mut core);
        assert_eq!(core.state().regs.read(1), 1 << 20);
        assert_eq!(core.stats().cycles, 21 + 2 + 3);
        assert!(core.stats().bypass_execute >= 20);
    }

    #[test]
    fn load_use_latency() {
        let base = vec![
            i(Lui, 2, 0, 0, DEFAULT_RAM_BASE as i32),
            i(Addi, 3, 0, 0, 77),
            i(Sw, 0, 2, 3, 0),
        ];
        let mut body = base.clone();
        body.push(i(Lw, 1, 2, 0, 0));
        body.push(i(Add, 4, 1, 1, 0));
        for lat in [0u32, 1, 3] {
            let cfg = CoreConfig {
                dmem_latency: Latency::Fixed(lat),
                ..CoreConfig::default()
            };
            let mut core = core_with(cfg, &body);
            run(&mut core);
            assert_eq!(core.state().regs.read(4), 154);
            // Two data accesses in the body plus the exit store.
            assert_eq!(core.stats().stall_cycles_lsu, 3 * lat as u64);
            assert_eq!(core.stats().bypass_lsu, 2);
        }
    }

    #[test]
    fn taken_branch_costs_two() {
        let mut taken = Vec::new();
        let mut not_taken = Vec::new();
        for _ in 0..20 {
            taken.push(i(Beq, 0, 0, 0, 4));
            not_taken.push(i(Bne, 0, 0, 0, 4));
        }
        let (t, ts) = cycles(CoreConfig::default(), &taken);
        let (n, _) = cycles(CoreConfig::default(), &not_taken);
        assert_eq!(t - n, 40);
        assert_eq!(ts.flush_count, 20);
        assert_eq!(ts.flush_bubbles, 40);
    }

    #[test]
    fn fifo_depth_and_fetch_latency() {
        let body = addis(50);
        let cfg = |depth, lat| CoreConfig {
            fifo_depth: depth,
            imem_latency: Latency::Fixed(lat),
            ..CoreConfig::default()
        };
        let (_, s) = cycles(cfg(2, 0), &body);
        assert_eq!(s.stall_cycles_fetch, 0);
        let (_, s) = cycles(cfg(1, 1), &body);
        assert!(s.stall_cycles_fetch > 0);
        let (c1, _) = cycles(cfg(1, 0), &body);
        assert!(c1 >= 100);
        let (c2, _) = cycles(cfg(2, 1), &body);
        assert!((100..=110).contains(&c2));
    }

    #[test]
    fn csr_serializes() {
        let body = vec![
            c(Csrrwi, 0, 0, 5, csr::MSCRATCH),
            c(Csrrs, 1, 0, 0, csr::MSCRATCH),
            i(Addi, 2, 1, 0, 1),
        ];
        let mut core = core_with(CoreConfig::default(), &body);
        run(&mut core);
        assert_eq!(core.state().regs.read(2), 6);
        assert_eq!(core.stats().serialize_cycles, 2);
    }

    #[test]
    fn ecall_traps_and_flushes() {
        // mtvec -> the exit sequence.
        let handler = DEFAULT_ROM_BASE + 4 * 5;
        let body = vec![
            i(Lui, 5, 0, 0, handler as i32 & !0xFFF),
            i(Addi, 5, 5, 0, (handler & 0xFFF) as i32),
            c(Csrrw, 0, 5, 0, csr::MTVEC),
            i(Ecall, 0, 0, 0, 0),
            i(Addi, 9, 0, 0, 9),
        ];
        let mut core = core_with(CoreConfig::default(), &body);
        let events = run(&mut core);
        let trap = events.iter().find(|e| e.trap.is_some()).unwrap();
        assert_eq!(trap.trap.unwrap().mcause(), 11);
        assert_eq!(core.state().csrs.mepc, DEFAULT_ROM_BASE + 12);
        assert_eq!(core.state().regs.read(9), 0);
    }

    #[test]
    fn misaligned_split_and_trap() {
        let body = vec![
            i(Lui, 2, 0, 0, DEFAULT_RAM_BASE as i32),
            i(Lui, 3, 0, 0, 0x1234_5000),
            i(Addi, 3, 3, 0, 0x678),
            i(Sw, 0, 2, 3, 1),
            i(Lw, 4, 2, 0, 1),
        ];
        let mut core = core_with(CoreConfig::default(), &body);
        run(&mut core);
        assert_eq!(core.state().regs.read(4), 0x1234_5678);
        assert_eq!(core.stats().misaligned_splits, 2);

        let cfg = CoreConfig {
            misaligned_trap: true,
            ..CoreConfig::default()
        };
        let mut core = core_with(cfg, &body);
        let mut traps = Vec::new();
        core.run(200, |e| traps.extend(e.trap));
        assert_eq!(traps[0].code(), 6);
        assert_eq!(traps[0].tval, DEFAULT_RAM_BASE + 1);
    }

    #[test]
    fn bypass_fault_is_observable() {
        let body = vec![i(Addi, 1, 0, 0, 5), i(Addi, 2, 1, 0, 1)];
        let mut core = core_with(CoreConfig::default(), &body);
        core.set_bypass_fault(true);
        // The exit sequence itself depends on forwarding, so stop early.
        core.run(8, |_| {});
        assert_eq!(core.state().regs.read(2), 1);
    }

    #[test]
    fn wfi_without_sources_sleeps() {
        let mut core = core_with(CoreConfig::default(), &[i(Wfi, 0, 0, 0, 0)]);
        assert_eq!(core.run(500, |_| {}), RunOutcome::WfiSleep);
        assert_eq!(core.stats().instret, 1);
        assert!(core.cycle() < 20);
        assert!(core.stats().accounting_holds());
    }

    #[test]
    fn ebreak_with_zero_mtvec_halts() {
        let mut core = core_with(CoreConfig::default(), &[i(Ebreak, 0, 0, 0, 0)]);
        assert_eq!(core.run(100, |_| {}), RunOutcome::Ebreak);
        assert_eq!(core.state().csrs.mcause, 3);
    }

    #[test]
    fn counters_track_cycles_and_retirements() {
        let mut core = core_with(CoreConfig::default(), &addis(10));
        run(&mut core);
        let s = *core.stats();
        assert_eq!(core.state().csrs.mcycle, s.cycles);
        assert_eq!(core.state().csrs.minstret, s.instret);
        assert_eq!(s.instret, 12);
    }
}
