//! Static ELF32 little-endian RISC-V executables.

use std::collections::BTreeMap;

use goblin::elf::header::{EI_CLASS, EI_DATA, ELFCLASS32, ELFDATA2LSB, EM_RISCV, ET_EXEC};
use goblin::elf::program_header::PT_LOAD;
use goblin::elf::Elf;

use super::{LoadError, LoadedImage, Segment};
use crate::bus::MemoryMap;

/// Parse an executable and place each `PT_LOAD` segment at its physical
/// address. Bytes past the file size of a segment are zero-filled.
pub fn load_elf(bytes: &[u8], map: &MemoryMap) -> Result<LoadedImage, LoadError> {
    if bytes.len() < 16 || &bytes[..4] != b"\x7FELF" {
        return Err(LoadError::NotElf("bad magic".into()));
    }
    if bytes[EI_CLASS] != ELFCLASS32 {
        return Err(LoadError::Class);
    }
    if bytes[EI_DATA] != ELFDATA2LSB {
        return Err(LoadError::Endianness);
    }
    let elf = Elf::parse(bytes).map_err(|e| LoadError::NotElf(e.to_string()))?;
    if elf.header.e_machine != EM_RISCV {
        return Err(LoadError::Machine(elf.header.e_machine));
    }
    if elf.header.e_type != ET_EXEC {
        return Err(LoadError::Type(elf.header.e_type));
    }

    let mut segments = Vec::new();
    for ph in elf.program_headers.iter().filter(|ph| ph.p_type == PT_LOAD) {
        if ph.p_memsz == 0 {
            continue;
        }
        let start = ph.p_offset as usize;
        let end = start.checked_add(ph.p_filesz as usize).ok_or(LoadError::Truncated)?;
        let file_data = bytes.get(start..end).ok_or(LoadError::Truncated)?;
        if ph.p_memsz < ph.p_filesz {
            return Err(LoadError::Truncated);
        }
        let mut data = file_data.to_vec();
        data.resize(ph.p_memsz as usize, 0);
        segments.push(Segment {
            addr: ph.p_paddr as u32,
            data,
        });
    }

    let symbols: BTreeMap<String, u32> = elf
        .syms
        .iter()
        .filter(|s| s.st_name != 0)
        .filter_map(|s| {
            let name = elf.strtab.get_at(s.st_name)?;
            (!name.is_empty()).then(|| (name.to_string(), s.st_value as u32))
        })
        .collect();

    let image = LoadedImage {
        segments,
        entry: elf.header.e_entry as u32,
        symbols,
    };
    image.validate(map)?;
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::DEFAULT_ROM_BASE;

    /// Hand-built ELF32 with one PT_LOAD of `code` at `addr` plus `bss` zero bytes.
    pub(crate) fn build_elf(code: &[u8], addr: u32, bss: u32, machine: u16, class: u8) -> Vec<u8> {
        let mut f = Vec::new();
        let ehsize = 52u32;
        let phoff = ehsize;
        let data_off = phoff + 32;
        f.extend_from_slice(b"\x7FELF");
        f.extend_from_slice(&[class, 1, 1, 0]);
        f.extend_from_slice(&[0; 8]);
        f.extend_from_slice(&2u16.to_le_bytes()); // ET_EXEC
        f.extend_from_slice(&machine.to_le_bytes());
        f.extend_from_slice(&1u32.to_le_bytes());
        f.extend_from_slice(&addr.to_le_bytes()); // entry
        f.extend_from_slice(&phoff.to_le_bytes());
        f.extend_from_slice(&0u32.to_le_bytes()); // shoff
        f.extend_from_slice(&0u32.to_le_bytes()); // flags
        f.extend_from_slice(&(ehsize as u16).to_le_bytes());
        f.extend_from_slice(&32u16.to_le_bytes());
        f.extend_from_slice(&1u16.to_le_bytes());
        f.extend_from_slice(&40u16.to_le_bytes());
        f.extend_from_slice(&0u16.to_le_bytes());
        f.extend_from_slice(&0u16.to_le_bytes());
        // Program header.
        for v in [1, data_off, addr, addr, code.len() as u32, code.len() as u32 + bss, 5, 4] {
            f.extend_from_slice(&v.to_le_bytes());
        }
        f.extend_from_slice(code);
        f
    }

    #[test]
    fn loads_segment_with_bss() {
        let code = [0x13, 0, 0, 0, 0x73, 0, 0x10, 0];
        let bytes = build_elf(&code, DEFAULT_ROM_BASE, 8, EM_RISCV, ELFCLASS32);
        let img = load_elf(&bytes, &MemoryMap::default()).unwrap();
        assert_eq!(img.entry, DEFAULT_ROM_BASE);
        assert_eq!(img.segments.len(), 1);
        assert_eq!(img.segments[0].data.len(), 16);
        assert_eq!(&img.segments[0].data[..8], &code);
        assert!(img.segments[0].data[8..].iter().all(|&b| b == 0));
    }

    #[test]
    fn rejects_unsupported_files() {
        let map = MemoryMap::default();
        assert!(matches!(load_elf(b"hello", &map), Err(LoadError::NotElf(_))));
        let x86 = build_elf(&[0; 4], DEFAULT_ROM_BASE, 0, 3, ELFCLASS32);
        assert_eq!(load_elf(&x86, &map), Err(LoadError::Machine(3)));
        let mut elf64 = build_elf(&[0; 4], DEFAULT_ROM_BASE, 0, EM_RISCV, ELFCLASS32);
        elf64[EI_CLASS] = 2;
        assert_eq!(load_elf(&elf64, &map), Err(LoadError::Class));
        let mut be = build_elf(&[0; 4], DEFAULT_ROM_BASE, 0, EM_RISCV, ELFCLASS32);
        be[EI_DATA] = 2;
        assert_eq!(load_elf(&be, &map), Err(LoadError::Endianness));
        let outside = build_elf(&[0; 4], 0x4000_0000, 0, EM_RISCV, ELFCLASS32);
        assert!(matches!(load_elf(&outside, &map), Err(LoadError::OutOfMap { .. })));
        let mut truncated = build_elf(&[0; 16], DEFAULT_ROM_BASE, 0, EM_RISCV, ELFCLASS32);
        truncated.truncate(truncated.len() - 8);
        assert!(load_elf(&truncated, &map).is_err());
    }
}
