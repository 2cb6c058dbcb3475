//! Executable images: flat binaries, static ELF32 files, and the fixture assembler.

mod asm;
mod elf;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bus::{Bus, MemoryMap};

pub use asm::{assemble, AsmError, AsmProgram};
pub use elf::load_elf;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub addr: u32,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadedImage {
    pub segments: Vec<Segment>,
    pub entry: u32,
    pub symbols: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("{len} bytes at {addr:#010x} do not fit in a ram/rom region")]
    OutOfMap { addr: u32, len: u64 },
    #[error("entry point {0:#010x} is not 4-byte aligned")]
    MisalignedEntry(u32),
    #[error("not an ELF file: {0}")]
    NotElf(String),
    #[error("unsupported ELF class: only ELF32 is accepted")]
    Class,
    #[error("unsupported ELF byte order: only little-endian is accepted")]
    Endianness,
    #[error("unsupported ELF machine {0}: expected RISC-V")]
    Machine(u16),
    #[error("unsupported ELF type {0}: only static executables are accepted")]
    Type(u16),
    #[error("ELF segment data out of file bounds")]
    Truncated,
}

impl LoadedImage {
    /// Check every segment lies in a memory region and the entry is aligned.
    pub fn validate(&self, map: &MemoryMap) -> Result<(), LoadError> {
        for seg in &self.segments {
            let len = seg.data.len() as u64;
            let fits = map
                .region(seg.addr, (len as u32).max(1))
                .is_some_and(|r| r.kind.is_memory())
                && len <= u32::MAX as u64;
            if !fits {
                return Err(LoadError::OutOfMap {
                    addr: seg.addr,
                    len,
                });
            }
        }
        if !self.entry.is_multiple_of(4) {
            return Err(LoadError::MisalignedEntry(self.entry));
        }
        Ok(())
    }

    /// Copy every segment into the bus memory.
    pub fn write_to(&self, bus: &mut Bus) -> Result<(), LoadError> {
        self.validate(bus.map())?;
        for seg in &self.segments {
            if !bus.load_bytes(seg.addr, &seg.data) {
                return Err(LoadError::OutOfMap {
                    addr: seg.addr,
                    len: seg.data.len() as u64,
                });
            }
        }
        Ok(())
    }
}

/// A raw binary placed at `base`, which is also the entry point.
pub fn load_flat(bytes: &[u8], base: u32, map: &MemoryMap) -> Result<LoadedImage, LoadError> {
    let image = LoadedImage {
        segments: vec![Segment {
            addr: base,
            data: bytes.to_vec(),
        }],
        entry: base,
        symbols: BTreeMap::new(),
    };
    image.validate(map)?;
    Ok(image)
}
