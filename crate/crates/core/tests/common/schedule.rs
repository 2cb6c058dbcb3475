//! Cycle schedule for straight-line code worked out by recurrence rather
//! than by simulation: each instruction's fetch, decode, execute and commit
//! cycle follows from its predecessors'.
//!
//! Rules, with cycles numbered from 1:
//! - one fetch is in flight at a time; it is issued in a cycle where the
//!   previous response already arrived and the FIFO holds fewer than `depth`
//!   words, and answers `imem` cycles later (the same cycle for 0)
//! - a fetched word can be decoded the cycle after it arrives
//! - decode moves a word into execute once execute has handed its previous
//!   occupant on; execute hands on once the commit stage is free
//! - an ALU op commits the cycle after entering the commit stage, a memory
//!   op `dmem` cycles later
//! - while a memory op waits in the commit stage, decode and execute are
//!   frozen; fetch keeps running

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Alu,
    Mem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub fetch_issue: u64,
    pub fetch_done: u64,
    pub decode: u64,
    pub execute: u64,
    pub commit: u64,
}

pub fn schedule(program: &[Class], depth: usize, imem: u64, dmem: u64) -> Vec<Timing> {
    let mut out: Vec<Timing> = Vec::with_capacity(program.len());
    // Frozen cycles are the ones in which a memory op is waiting for data.
    // Only the most recent instruction can still be in the commit stage.
    let frozen = |out: &[Timing], c: u64| out.last().is_some_and(|t| c > t.execute && c < t.commit);
    let advance = |out: &[Timing], mut c: u64| {
        while frozen(out, c) {
            c += 1;
        }
        c
    };
    for (i, &class) in program.iter().enumerate() {
        let prev = i.checked_sub(1).map(|p| out[p]);
        let mut issue = prev.map_or(1, |p| p.fetch_done + 1);
        // Words fetched but not yet decoded at the start of `issue`; decode
        // cycles increase, so they form a suffix.
        while out.iter().rev().take_while(|t| t.decode >= issue).count() >= depth {
            issue += 1;
        }
        let fetch_done = issue + imem;
        let decode = advance(&out, prev.map_or(fetch_done + 1, |p| (fetch_done + 1).max(p.execute)));
        let execute = advance(&out, prev.map_or(decode + 1, |p| (decode + 1).max(p.commit)));
        let commit = execute + 1 + if class == Class::Mem { dmem } else { 0 };
        out.push(Timing {
            fetch_issue: issue,
            fetch_done,
            decode,
            execute,
            commit,
        });
    }
    out
}

/// Cycle in which the last instruction commits.
pub fn total_cycles(program: &[Class], depth: usize, imem: u64, dmem: u64) -> u64 {
    schedule(program, depth, imem, dmem).last().map_or(0, |t| t.commit)
}
