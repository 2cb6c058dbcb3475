//! Valid/ready memory bus with one outstanding transaction per port.
//!
//! The instruction and data ports each accept a transaction only when idle.
//! An accepted transaction completes `latency` cycles after the cycle it was
//! issued in (latency 0 answers in the same cycle). Write effects are applied
//! when the response is produced.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

pub const TIMER_MSIP: u32 = 0x0000;
pub const TIMER_MTIMECMP: u32 = 0x4000;
pub const TIMER_MTIME: u32 = 0xBFF8;

pub const EXIT_CODE: u32 = 0x0;
pub const EXIT_ITERATIONS: u32 = 0x4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionKind {
    Ram,
    Rom,
    Timer,
    Console,
    Exit,
}

impl RegionKind {
    pub fn is_memory(self) -> bool {
        matches!(self, RegionKind::Ram | RegionKind::Rom)
    }
}

impl FromStr for RegionKind {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ram" => RegionKind::Ram,
            "rom" => RegionKind::Rom,
            "timer" | "mmio-timer" => RegionKind::Timer,
            "console" | "mmio-console" => RegionKind::Console,
            "exit" | "mmio-exit" => RegionKind::Exit,
            other => return Err(MapError::Kind(other.to_string())),
        })
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionKind::Ram => "ram",
            RegionKind::Rom => "rom",
            RegionKind::Timer => "mmio-timer",
            RegionKind::Console => "mmio-console",
            RegionKind::Exit => "mmio-exit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    pub base: u32,
    pub size: u32,
    pub kind: RegionKind,
    /// Per-port latency overrides, indexed by [`Port`].
    pub latency: [Option<u32>; 2],
}

impl Region {
    pub fn new(name: &str, base: u32, size: u32, kind: RegionKind) -> Self {
        Region {
            name: name.to_string(),
            base,
            size,
            kind,
            latency: [None, None],
        }
    }

    pub fn contains(&self, addr: u32, len: u32) -> bool {
        let start = addr as u64;
        let end = start + len as u64;
        start >= self.base as u64 && end <= self.base as u64 + self.size as u64
    }

    fn end(&self) -> u64 {
        self.base as u64 + self.size as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("regions {0} and {1} overlap")]
    Overlap(String, String),
    #[error("unknown region kind `{0}`")]
    Kind(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("region {0} is empty or wraps the address space")]
    Size(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryMap {
    regions: Vec<Region>,
}

pub const DEFAULT_ROM_BASE: u32 = 0x8000_0000;
pub const DEFAULT_RAM_BASE: u32 = 0x8040_0000;
pub const DEFAULT_TIMER_BASE: u32 = 0x0200_0000;
pub const DEFAULT_CONSOLE_BASE: u32 = 0x1000_0000;
pub const DEFAULT_EXIT_BASE: u32 = 0x1000_0004;

impl Default for MemoryMap {
    fn default() -> Self {
        MemoryMap::new(vec![
            Region::new("rom", DEFAULT_ROM_BASE, 4 << 20, RegionKind::Rom),
            Region::new("ram", DEFAULT_RAM_BASE, 4 << 20, RegionKind::Ram),
            Region::new("timer", DEFAULT_TIMER_BASE, 0x1_0000, RegionKind::Timer),
            Region::new("console", DEFAULT_CONSOLE_BASE, 4, RegionKind::Console),
            Region::new("exit", DEFAULT_EXIT_BASE, 8, RegionKind::Exit),
        ])
        .expect("default map is disjoint")
    }
}

fn parse_num(s: &str) -> Option<u64> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(&hex.replace('_', ""), 16).ok()
    } else {
        s.replace('_', "").parse().ok()
    }
}

impl MemoryMap {
    pub fn new(regions: Vec<Region>) -> Result<Self, MapError> {
        for r in &regions {
            if r.size == 0 || r.end() > 1 << 32 {
                return Err(MapError::Size(r.name.clone()));
            }
        }
        for (i, a) in regions.iter().enumerate() {
            for b in &regions[i + 1..] {
                if (a.base as u64) < b.end() && (b.base as u64) < a.end() {
                    return Err(MapError::Overlap(a.name.clone(), b.name.clone()));
                }
            }
        }
        Ok(MemoryMap { regions })
    }

    /// Parse the `name:base:size:kind` text format, one region per line.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut regions = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |msg: &str| MapError::Syntax {
                line: idx + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split(':').map(str::trim).collect();
            let [name, base, size, kind] = fields.as_slice() else {
                return Err(syntax("expected name:base:size:kind"));
            };
            let base = parse_num(base)
                .filter(|&b| b <= u32::MAX as u64)
                .ok_or_else(|| syntax("bad base"))?;
            let size = parse_num(size)
                .filter(|&s| s <= u32::MAX as u64)
                .ok_or_else(|| syntax("bad size"))?;
            regions.push(Region::new(name, base as u32, size as u32, kind.parse()?));
        }
        MemoryMap::new(regions)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn find(&self, addr: u32, len: u32) -> Option<usize> {
        self.regions.iter().position(|r| r.contains(addr, len))
    }

    pub fn region(&self, addr: u32, len: u32) -> Option<&Region> {
        self.find(addr, len).map(|i| &self.regions[i])
    }

    pub fn first_of(&self, kind: RegionKind) -> Option<&Region> {
        self.regions.iter().find(|r| r.kind == kind)
    }

    /// Set a latency override for one port of the named region.
    pub fn set_region_latency(&mut self, name: &str, port: Port, latency: u32) -> bool {
        match self.regions.iter_mut().find(|r| r.name == name) {
            Some(r) => {
                r.latency[port as usize] = Some(latency);
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    Instruction = 0,
    Data = 1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BusTransaction {
    pub address: u32,
    pub size: u32,
    pub direction: Direction,
    pub wdata: u32,
    pub port: Port,
}

impl BusTransaction {
    pub fn fetch(address: u32) -> Self {
        BusTransaction {
            address,
            size: 4,
            direction: Direction::Read,
            wdata: 0,
            port: Port::Instruction,
        }
    }

    pub fn read(address: u32, size: u32) -> Self {
        BusTransaction {
            address,
            size,
            direction: Direction::Read,
            wdata: 0,
            port: Port::Data,
        }
    }

    pub fn write(address: u32, size: u32, wdata: u32) -> Self {
        BusTransaction {
            address,
            size,
            direction: Direction::Write,
            wdata,
            port: Port::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusStatus {
    Okay,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BusResponse {
    pub status: BusStatus,
    pub rdata: u32,
}

impl BusResponse {
    pub const ERROR: BusResponse = BusResponse {
        status: BusStatus::Error,
        rdata: 0,
    };

    pub fn okay(rdata: u32) -> Self {
        BusResponse {
            status: BusStatus::Okay,
            rdata,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == BusStatus::Okay
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Latency {
    Fixed(u32),
    /// Uniformly drawn per transaction from `min..=max`.
    Uniform { min: u32, max: u32 },
}

impl Default for Latency {
    fn default() -> Self {
        Latency::Fixed(0)
    }
}

#[derive(Debug, Clone, Default)]
struct PortState {
    in_flight: Option<(BusTransaction, u32)>,
}

#[derive(Debug, Clone)]
pub struct Timer {
    pub mtime: u64,
    pub mtimecmp: u64,
    pub msip: bool,
}

impl Default for Timer {
    fn default() -> Self {
        Timer {
            mtime: 0,
            mtimecmp: u64::MAX,
            msip: false,
        }
    }
}

/// Responses produced by one [`Bus::tick`], at most one per port.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TickResponses {
    pub instruction: Option<BusResponse>,
    pub data: Option<BusResponse>,
}

impl TickResponses {
    pub fn get(&self, port: Port) -> Option<BusResponse> {
        match port {
            Port::Instruction => self.instruction,
            Port::Data => self.data,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Port, BusResponse)> + '_ {
        [
            (Port::Instruction, self.instruction),
            (Port::Data, self.data),
        ]
        .into_iter()
        .filter_map(|(p, r)| r.map(|r| (p, r)))
    }
}

const PAGE: usize = 4096;

/// Memory contents allocated one page at a time on first write; untouched
/// pages read as zero.
#[derive(Debug, Clone, Default)]
struct Pages {
    pages: Vec<Option<Box<[u8; PAGE]>>>,
}

impl Pages {
    fn new(size: u32) -> Self {
        Pages {
            pages: vec![None; (size as usize).div_ceil(PAGE)],
        }
    }

    fn read(&self, offset: usize, out: &mut [u8]) {
        for (i, b) in out.iter_mut().enumerate() {
            let a = offset + i;
            *b = self.pages[a / PAGE].as_ref().map_or(0, |p| p[a % PAGE]);
        }
    }

    fn write(&mut self, offset: usize, bytes: &[u8]) {
        for (i, &b) in bytes.iter().enumerate() {
            let a = offset + i;
            self.pages[a / PAGE].get_or_insert_with(|| Box::new([0; PAGE]))[a % PAGE] = b;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bus {
    map: MemoryMap,
    storage: Vec<Pages>,
    ports: [PortState; 2],
    latency: [Latency; 2],
    rng: StdRng,
    error_addrs: BTreeSet<u32>,
    pub timer: Timer,
    pub external_interrupt: bool,
    console: Vec<u8>,
    exit_code: Option<u32>,
    iterations: Option<u32>,
}

impl Bus {
    pub fn new(map: MemoryMap) -> Self {
        let storage = map
            .regions()
            .iter()
            .map(|r| {
                if r.kind.is_memory() {
                    Pages::new(r.size)
                } else {
                    Pages::default()
                }
            })
            .collect();
        Bus {
            map,
            storage,
            ports: Default::default(),
            latency: [Latency::Fixed(0); 2],
            rng: StdRng::seed_from_u64(0),
            error_addrs: BTreeSet::new(),
            timer: Timer::default(),
            external_interrupt: false,
            console: Vec::new(),
            exit_code: None,
            iterations: None,
        }
    }

    pub fn map(&self) -> &MemoryMap {
        &self.map
    }

    pub fn set_latency(&mut self, port: Port, latency: Latency) {
        self.latency[port as usize] = latency;
    }

    pub fn seed(&mut self, seed: u64) {
        self.rng = StdRng::seed_from_u64(seed);
    }

    /// Make every transaction touching `addr` answer with ERROR.
    pub fn inject_error(&mut self, addr: u32) {
        self.error_addrs.insert(addr);
    }

    pub fn ready(&self, port: Port) -> bool {
        self.ports[port as usize].in_flight.is_none()
    }

    /// Offer a transaction. Returns false (back-pressure) while the port is busy.
    pub fn issue(&mut self, txn: BusTransaction) -> bool {
        debug_assert!(matches!(txn.size, 1 | 2 | 4));
        debug_assert!(txn.port == Port::Data || (txn.size == 4 && txn.direction == Direction::Read));
        let port = txn.port as usize;
        if self.ports[port].in_flight.is_some() {
            return false;
        }
        let latency = match self.map.region(txn.address, txn.size).and_then(|r| r.latency[port]) {
            Some(l) => l,
            None => match self.latency[port] {
                Latency::Fixed(l) => l,
                Latency::Uniform { min, max } => self.rng.gen_range(min..=max.max(min)),
            },
        };
        self.ports[port].in_flight = Some((txn, latency));
        true
    }

    /// Advance one cycle: answer transactions whose latency has elapsed,
    /// count down the rest, and advance `mtime`.
    pub fn tick(&mut self) -> TickResponses {
        let mut out = TickResponses::default();
        for port in [Port::Instruction, Port::Data] {
            let slot = &mut self.ports[port as usize].in_flight;
            match slot {
                Some((txn, 0)) => {
                    let txn = *txn;
                    *slot = None;
                    let resp = self.access(&txn);
                    match port {
                        Port::Instruction => out.instruction = Some(resp),
                        Port::Data => out.data = Some(resp),
                    }
                }
                Some((_, remaining)) => *remaining -= 1,
                None => {}
            }
        }
        self.advance_time(1);
        out
    }

    pub fn advance_time(&mut self, cycles: u64) {
        self.timer.mtime = self.timer.mtime.wrapping_add(cycles);
    }

    pub fn timer_check(&self) -> bool {
        self.timer.mtime >= self.timer.mtimecmp
    }

    /// The `mip` bits driven by the devices on this bus.
    pub fn interrupt_lines(&self) -> u32 {
        use crate::arch::{MIP_MEIP, MIP_MSIP, MIP_MTIP};
        (if self.timer_check() { MIP_MTIP } else { 0 })
            | (if self.timer.msip { MIP_MSIP } else { 0 })
            | (if self.external_interrupt { MIP_MEIP } else { 0 })
    }

    /// Perform a transaction immediately, ignoring port state and latency.
    pub fn access(&mut self, txn: &BusTransaction) -> BusResponse {
        let (addr, size) = (txn.address, txn.size);
        if (addr..addr.saturating_add(size)).any(|a| self.error_addrs.contains(&a)) {
            return BusResponse::ERROR;
        }
        let Some(idx) = self.map.find(addr, size) else {
            return BusResponse::ERROR;
        };
        let region = &self.map.regions()[idx];
        let offset = addr - region.base;
        match (region.kind, txn.direction) {
            (RegionKind::Ram | RegionKind::Rom, Direction::Read) => {
                let mut bytes = [0u8; 4];
                self.storage[idx].read(offset as usize, &mut bytes[..size as usize]);
                BusResponse::okay(u32::from_le_bytes(bytes))
            }
            (RegionKind::Ram, Direction::Write) => {
                self.storage[idx].write(offset as usize, &txn.wdata.to_le_bytes()[..size as usize]);
                BusResponse::okay(0)
            }
            (RegionKind::Rom, Direction::Write) => BusResponse::ERROR,
            (RegionKind::Timer, dir) => self.timer_access(offset, size, dir, txn.wdata),
            (RegionKind::Console, Direction::Write) => {
                self.console.push(txn.wdata as u8);
                BusResponse::okay(0)
            }
            (RegionKind::Console, Direction::Read) => BusResponse::okay(0),
            (RegionKind::Exit, Direction::Write) => {
                match offset & !3 {
                    EXIT_CODE => self.exit_code = Some(txn.wdata),
                    EXIT_ITERATIONS => self.iterations = Some(txn.wdata),
                    _ => {}
                }
                BusResponse::okay(0)
            }
            (RegionKind::Exit, Direction::Read) => BusResponse::okay(0),
        }
    }

    fn timer_access(&mut self, offset: u32, size: u32, dir: Direction, wdata: u32) -> BusResponse {
        // Byte-granular view of the three CLINT registers.
        let (reg_base, reg_len) = if offset < TIMER_MSIP + 4 {
            (TIMER_MSIP, 4)
        } else if (TIMER_MTIMECMP..TIMER_MTIMECMP + 8).contains(&offset) {
            (TIMER_MTIMECMP, 8)
        } else if (TIMER_MTIME..TIMER_MTIME + 8).contains(&offset) {
            (TIMER_MTIME, 8)
        } else {
            // Unimplemented CLINT offsets read as zero and ignore writes.
            return BusResponse::okay(0);
        };
        let shift = offset - reg_base;
        if shift + size > reg_len {
            return BusResponse::ERROR;
        }
        let current: u64 = match reg_base {
            TIMER_MSIP => self.timer.msip as u64,
            TIMER_MTIMECMP => self.timer.mtimecmp,
            _ => self.timer.mtime,
        };
        let mask: u64 = (if size == 4 { 0xFFFF_FFFF } else { (1u64 << (8 * size)) - 1 }) << (8 * shift);
        match dir {
            Direction::Read => BusResponse::okay(((current & mask) >> (8 * shift)) as u32),
            Direction::Write => {
                let new = (current & !mask) | (((wdata as u64) << (8 * shift)) & mask);
                match reg_base {
                    TIMER_MSIP => self.timer.msip = new & 1 != 0,
                    TIMER_MTIMECMP => self.timer.mtimecmp = new,
                    _ => self.timer.mtime = new,
                }
                BusResponse::okay(0)
            }
        }
    }

    /// Backdoor write used by the loaders; ignores the rom/ram distinction.
    /// Fails if the bytes do not lie inside one memory region.
    pub fn load_bytes(&mut self, addr: u32, bytes: &[u8]) -> bool {
        let len = bytes.len() as u32;
        let Some(idx) = self.map.find(addr, len.max(1)) else {
            return false;
        };
        if !self.map.regions()[idx].kind.is_memory() {
            return false;
        }
        let offset = (addr - self.map.regions()[idx].base) as usize;
        self.storage[idx].write(offset, bytes);
        true
    }

    /// Backdoor read of memory regions; `None` outside ram/rom.
    pub fn peek(&self, addr: u32, len: u32) -> Option<Vec<u8>> {
        let idx = self.map.find(addr, len)?;
        let region = &self.map.regions()[idx];
        if !region.kind.is_memory() {
            return None;
        }
        let mut out = vec![0; len as usize];
        self.storage[idx].read((addr - region.base) as usize, &mut out);
        Some(out)
    }

    pub fn console_output(&self) -> &[u8] {
        &self.console
    }

    pub fn take_console(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.console)
    }

    pub fn exit_code(&self) -> Option<u32> {
        self.exit_code
    }

    pub fn iterations(&self) -> Option<u32> {
        self.iterations
    }
}
