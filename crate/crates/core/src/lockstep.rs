//! Retirement-by-retirement comparison of the pipeline against the
//! functional interpreter.
//!
//! The interpreter has no notion of time, so values that depend on timing
//! are taken from the pipeline: the `mip` lines, the point at which an
//! interrupt is entered, loads from the timer, and reads of `mcycle`/`mip`.

use std::collections::VecDeque;
use std::fmt;

use crate::arch::{csr, TrapCause};
use crate::bus::{Bus, Direction, RegionKind};
use crate::iss::{Iss, Step, StepResult};
use crate::pipeline::{trace_line, Core, PipelineStats, RetireEvent, RunOutcome};

const HISTORY: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct LockstepReport {
    /// Commits compared, interrupt entries included.
    pub events: u64,
    pub outcome: RunOutcome,
    pub stats: PipelineStats,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Zero-based index of the commit that disagreed.
    pub index: u64,
    pub cycle: u64,
    pub pc: u32,
    pub differences: Vec<String>,
    pub pipeline_trace: Vec<String>,
    pub oracle_trace: Vec<String>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "divergence at retirement {} (cycle {}, pc {:#010x}):",
            self.index, self.cycle, self.pc
        )?;
        for d in &self.differences {
            writeln!(f, "  {d}")?;
        }
        writeln!(f, "pipeline (most recent last):")?;
        for line in &self.pipeline_trace {
            writeln!(f, "  {line}")?;
        }
        writeln!(f, "oracle (most recent last):")?;
        for line in &self.oracle_trace {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Divergence {}

fn is_timer(bus: &Bus, addr: u32) -> bool {
    bus.map().region(addr, 1).is_some_and(|r| r.kind == RegionKind::Timer)
}

fn push<T>(history: &mut VecDeque<T>, entry: T) {
    if history.len() == HISTORY {
        history.pop_front();
    }
    history.push_back(entry);
}

enum OracleEntry {
    Step(u64, StepResult),
    Interrupt(u64, TrapCause),
}

impl OracleEntry {
    fn line(&self) -> String {
        match self {
            OracleEntry::Step(i, r) => trace_line(&format!("I{i}"), r.pc, r.raw, r.instr.as_ref(), r.writeback),
            OracleEntry::Interrupt(i, cause) => format!("I{i} interrupt {cause}"),
        }
    }
}

fn dut_line(ev: &RetireEvent) -> String {
    match ev.interrupt {
        Some(cause) => format!("C{} interrupt {cause}", ev.cycle),
        None => ev.trace_line(),
    }
}

/// Compare the event fields the interpreter also reports.
fn compare_step(ev: &RetireEvent, r: &StepResult) -> Vec<String> {
    let mut out = Vec::new();
    if ev.pc != r.pc {
        out.push(format!("retired pc: {:#010x} != {:#010x}", ev.pc, r.pc));
    }
    if ev.raw != r.raw {
        out.push(format!("instruction word: {:08x} != {:08x}", ev.raw, r.raw));
    }
    if ev.trap != r.trap {
        out.push(format!("trap: {:?} != {:?}", ev.trap, r.trap));
    }
    if ev.writeback != r.writeback {
        out.push(format!("writeback: {:?} != {:?}", ev.writeback, r.writeback));
    }
    if ev.mem.map(|m| (m.address, m.direction)) != r.mem.map(|m| (m.address, m.direction)) {
        out.push(format!("memory access: {:?} != {:?}", ev.mem, r.mem));
    }
    out
}

/// Run `core` to completion (or `max_cycles`) while an interpreter shadows
/// every commit. The interpreter starts from a copy of the core's memory and
/// architectural state.
pub fn lockstep_check(core: &mut Core, max_cycles: u64) -> Result<LockstepReport, Box<Divergence>> {
    let mut oracle_bus = core.bus().clone();
    let mut oracle = Iss::new(core.state().pc, core.config().misaligned_trap);
    oracle.state = core.state().clone();
    oracle.poll_interrupts = false;
    oracle.sync_mip = false;

    let mut dut_history = VecDeque::new();
    let mut oracle_history = VecDeque::new();
    let mut index = 0u64;

    loop {
        let outcome = match core.halted() {
            Some(crate::pipeline::Halt::Exit(code)) => Some(RunOutcome::Exit(code)),
            Some(crate::pipeline::Halt::Ebreak) => Some(RunOutcome::Ebreak),
            None if core.cycle() >= max_cycles => Some(core.run(max_cycles, |_| {})),
            None => None,
        };
        if let Some(outcome) = outcome {
            return Ok(LockstepReport {
                events: index,
                outcome,
                stats: *core.stats(),
            });
        }
        let Some(ev) = core.tick() else { continue };

        oracle.state.csrs.mip = ev.mip;
        let mut differences = Vec::new();
        if let Some(cause) = ev.interrupt {
            oracle.take_interrupt(cause);
            push(&mut oracle_history, OracleEntry::Interrupt(index, cause));
        } else {
            let load_override = ev
                .mem
                .filter(|m| m.direction == Direction::Read && is_timer(&oracle_bus, m.address))
                .map(|m| m.value);
            oracle.state.waiting_for_interrupt = false;
            match oracle.step_with(&mut oracle_bus, load_override) {
                Step::Retired(r) => {
                    // Counter and interrupt-pending reads are timing dependent.
                    if let (Some(inst), None) = (r.instr, r.trap) {
                        let timed = matches!(inst.csr, csr::MCYCLE | csr::MCYCLEH | csr::MIP);
                        if inst.mnemonic.is_csr() && timed {
                            if let Some((rd, v)) = ev.writeback {
                                oracle.state.regs.write(rd, v);
                            }
                        }
                    }
                    oracle.state.waiting_for_interrupt = false;
                    let r = StepResult {
                        writeback: oracle_writeback(&oracle, &r),
                        ..r
                    };
                    differences.extend(compare_step(&ev, &r));
                    push(&mut oracle_history, OracleEntry::Step(index, r));
                }
                Step::Waiting => differences.push("oracle is asleep in WFI".into()),
            }
        }
        if core.state() != &oracle.state {
            differences.extend(core.state().diff(&oracle.state, false));
        }
        let (cycle, pc) = (ev.cycle, ev.pc);
        push(&mut dut_history, ev);
        if !differences.is_empty() {
            return Err(Box::new(Divergence {
                index,
                cycle,
                pc,
                differences,
                pipeline_trace: dut_history.iter().map(dut_line).collect(),
                oracle_trace: oracle_history.iter().map(OracleEntry::line).collect(),
            }));
        }
        index += 1;
    }
}

/// The oracle's writeback after timing-dependent values were patched in.
fn oracle_writeback(oracle: &Iss, r: &StepResult) -> Option<(u8, u32)> {
    r.writeback.map(|(rd, _)| (rd, oracle.state.regs.read(rd)))
}
