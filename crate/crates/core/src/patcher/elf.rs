// SPDX-License-Identifier: Apache-2.0

//! Relocatable eBPF objects: reading through the `object` crate and a small
//! ELF64 writer for synthetic objects.

use std::collections::HashMap;

use object::read::elf::ElfFile64;
use object::{
    Architecture, Endianness, Object, ObjectKind, ObjectSection, ObjectSymbol, RelocationFlags,
    RelocationTarget, SectionIndex, SectionKind, SymbolKind,
};

use super::{slot_positions, EbpfObject, FunctionBlock, PatchError};
use crate::isa::{decode_program, encode_instruction, Instruction, SLOT_SIZE};

/// `R_BPF_64_32`, the relocation clang attaches to BPF-to-BPF calls.
const R_BPF_64_32: u32 = 10;

mod elf {
    pub const ELFCLASS64: u8 = 2;
    pub const ELFDATA2LSB: u8 = 1;
    pub const ELFDATA2MSB: u8 = 2;
    pub const EV_CURRENT: u8 = 1;
    pub const ET_REL: u16 = 1;
    pub const EM_BPF: u16 = 247;
    pub const SHT_PROGBITS: u32 = 1;
    pub const SHT_SYMTAB: u32 = 2;
    pub const SHT_STRTAB: u32 = 3;
    pub const SHT_REL: u32 = 9;
    pub const SHF_ALLOC: u64 = 0x2;
    pub const SHF_EXECINSTR: u64 = 0x4;
    pub const SHF_INFO_LINK: u64 = 0x40;
    pub const STB_LOCAL: u8 = 0;
    pub const STB_GLOBAL: u8 = 1;
    pub const STT_FUNC: u8 = 2;
    pub const STT_SECTION: u8 = 3;
}

struct RawFunction {
    name: String,
    section: SectionIndex,
    start: u64,
    global: bool,
    block: FunctionBlock,
}

/// Loads an object and picks the entry: the only global function, or failing
/// that the only global function whose name ends in `_entry`.
pub fn load_object(bytes: &[u8]) -> Result<EbpfObject, PatchError> {
    load(bytes, None)
}

pub fn load_object_with_entry(bytes: &[u8], entry: &str) -> Result<EbpfObject, PatchError> {
    load(bytes, Some(entry))
}

fn load(bytes: &[u8], entry: Option<&str>) -> Result<EbpfObject, PatchError> {
    if bytes.len() < 16 || &bytes[..4] != b"\x7fELF" {
        return Err(PatchError::NotAnObjectFile("missing ELF magic".into()));
    }
    if bytes[4] != elf::ELFCLASS64 {
        return Err(PatchError::NotAnObjectFile("not a 64-bit object".into()));
    }
    if bytes[5] == elf::ELFDATA2MSB {
        return Err(PatchError::BigEndianObjectRejected);
    }
    let file = ElfFile64::<Endianness>::parse(bytes)
        .map_err(|err| PatchError::NotAnObjectFile(err.to_string()))?;
    if file.architecture() != Architecture::Bpf {
        return Err(PatchError::NotAnObjectFile(format!(
            "machine is {:?}, not BPF",
            file.architecture()
        )));
    }
    if file.kind() != ObjectKind::Relocatable {
        return Err(PatchError::NotAnObjectFile("not a relocatable object".into()));
    }

    let mut functions: Vec<RawFunction> = Vec::new();
    for section in file.sections().filter(|s| s.kind() == SectionKind::Text) {
        let data = section
            .data()
            .map_err(|err| PatchError::NotAnObjectFile(err.to_string()))?;
        let mut symbols: Vec<_> = file
            .symbols()
            .filter(|s| s.kind() == SymbolKind::Text && s.section_index() == Some(section.index()))
            .collect();
        symbols.sort_by_key(|s| s.address());
        for (i, symbol) in symbols.iter().enumerate() {
            let name = symbol
                .name()
                .map_err(|err| PatchError::NotAnObjectFile(err.to_string()))?
                .to_string();
            let start = symbol.address();
            let next = symbols.get(i + 1).map_or(data.len() as u64, |s| s.address());
            let end = if symbol.size() == 0 { next } else { start + symbol.size() };
            if end > next {
                let second = symbols[i + 1].name().unwrap_or("?").to_string();
                return Err(PatchError::OverlappingSymbols { first: name, second });
            }
            let code = data
                .get(start as usize..end as usize)
                .ok_or_else(|| PatchError::NotAnObjectFile(format!("`{name}` exceeds its section")))?;
            let instructions = decode_program(code)?.into_instructions();
            functions.push(RawFunction {
                name: name.clone(),
                section: section.index(),
                start,
                global: symbol.is_global(),
                block: FunctionBlock {
                    name,
                    instructions,
                    call_sites: Vec::new(),
                },
            });
        }
    }

    let at = |section: SectionIndex, offset: u64| {
        functions
            .iter()
            .find(|f| f.section == section && f.start == offset)
            .map(|f| f.name.clone())
    };
    let mut bindings: Vec<(usize, usize, String)> = Vec::new();
    for section in file.sections().filter(|s| s.kind() == SectionKind::Text) {
        let relocations: HashMap<u64, object::Relocation> = section.relocations().collect();
        for (index, function) in functions.iter().enumerate() {
            if function.section != section.index() {
                continue;
            }
            for (slot, insn) in slot_positions(&function.block.instructions) {
                if !insn.is_local_call() {
                    continue;
                }
                let offset = function.start + (slot * SLOT_SIZE) as u64;
                let unresolved = || PatchError::UnresolvedCall {
                    function: function.name.clone(),
                    slot,
                };
                let callee = match relocations.get(&offset) {
                    Some(relocation) => {
                        let RelocationTarget::Symbol(index) = relocation.target() else {
                            return Err(unresolved());
                        };
                        let symbol = file
                            .symbol_by_index(index)
                            .map_err(|err| PatchError::NotAnObjectFile(err.to_string()))?;
                        match symbol.kind() {
                            SymbolKind::Section => {
                                // libbpf: callee = sym_off / 8 + imm + 1
                                let target = symbol.address() as i64 / SLOT_SIZE as i64
                                    + i64::from(insn.imm())
                                    + 1;
                                symbol
                                    .section_index()
                                    .and_then(|s| at(s, (target * SLOT_SIZE as i64) as u64))
                                    .ok_or_else(unresolved)?
                            }
                            _ => symbol
                                .name()
                                .map_err(|err| PatchError::NotAnObjectFile(err.to_string()))?
                                .to_string(),
                        }
                    }
                    // A call -1 without relocation is exactly the ambiguity we
                    // refuse to guess at; any other immediate is a displacement
                    // the compiler already resolved inside this section.
                    None if insn.imm() == -1 => return Err(unresolved()),
                    None => {
                        let target = (offset / SLOT_SIZE as u64) as i64 + 1 + i64::from(insn.imm());
                        u64::try_from(target * SLOT_SIZE as i64)
                            .ok()
                            .and_then(|t| at(function.section, t))
                            .ok_or_else(unresolved)?
                    }
                };
                bindings.push((index, slot, callee));
            }
        }
        for (offset, relocation) in &relocations {
            let r_type = match relocation.flags() {
                RelocationFlags::Elf { r_type } => r_type.0,
                _ => 0,
            };
            let is_call = functions.iter().any(|f| {
                f.section == section.index()
                    && slot_positions(&f.block.instructions).any(|(slot, insn)| {
                        f.start + (slot * SLOT_SIZE) as u64 == *offset && insn.is_local_call()
                    })
            });
            if !is_call {
                return Err(PatchError::UnsupportedRelocation { offset: *offset, r_type });
            }
        }
    }
    for (index, slot, callee) in bindings {
        let block = &mut functions[index].block;
        let position = slot_positions(&block.instructions)
            .position(|(at, _)| at == slot)
            .expect("binding refers to an instruction start");
        block.instructions[position] = Instruction::local_call(-1);
        block.call_sites.push((slot, callee));
    }

    let entry = match entry {
        Some(name) => name.to_string(),
        None => pick_entry(&functions)?,
    };
    EbpfObject::new(functions.into_iter().map(|f| f.block).collect(), entry)
}

fn pick_entry(functions: &[RawFunction]) -> Result<String, PatchError> {
    let globals: Vec<&RawFunction> = functions.iter().filter(|f| f.global).collect();
    if let [only] = globals.as_slice() {
        return Ok(only.name.clone());
    }
    let suffixed: Vec<&&RawFunction> = globals.iter().filter(|f| f.name.ends_with("_entry")).collect();
    if let [only] = suffixed.as_slice() {
        return Ok(only.name.clone());
    }
    Err(PatchError::AmbiguousEntry(
        functions.iter().map(|f| f.name.clone()).collect(),
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct WriteOptions {
    /// Emit an `R_BPF_64_32` relocation for each call site. Without them the
    /// calls are left as bare `call -1`.
    pub call_relocations: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            call_relocations: true,
        }
    }
}

pub fn write_object(object: &EbpfObject) -> Vec<u8> {
    write_object_with(object, WriteOptions::default())
}

/// Serializes the object as a little-endian ELF64 `ET_REL` for `EM_BPF` with
/// one `.text` section. The entry is the only global symbol.
pub fn write_object_with(object: &EbpfObject, options: WriteOptions) -> Vec<u8> {
    let mut text = Vec::new();
    let mut starts = Vec::new();
    let mut relocations: Vec<(u64, String)> = Vec::new();
    for function in object.functions() {
        let start = text.len() as u64;
        starts.push(start);
        for (slot, insn) in slot_positions(&function.instructions) {
            text.extend(encode_instruction(insn));
            if let Some((_, callee)) = function.call_sites.iter().find(|(at, _)| *at == slot) {
                relocations.push((start + (slot * SLOT_SIZE) as u64, callee.clone()));
            }
        }
    }
    if !options.call_relocations {
        relocations.clear();
    }

    let mut strtab = vec![0u8];
    let mut name_offsets = HashMap::new();
    for function in object.functions() {
        name_offsets.insert(function.name.clone(), strtab.len() as u32);
        strtab.extend(function.name.as_bytes());
        strtab.push(0);
    }

    // null, .text section symbol, local functions, then the global entry
    let mut order: Vec<usize> = (0..object.functions().len()).collect();
    order.sort_by_key(|&i| object.functions()[i].name == object.entry());
    let mut symtab = vec![0u8; 24];
    push_symbol(&mut symtab, 0, (elf::STB_LOCAL << 4) | elf::STT_SECTION, 1, 0, 0);
    let mut symbol_index = HashMap::new();
    for (k, &i) in order.iter().enumerate() {
        let function = &object.functions()[i];
        let bind = if function.name == object.entry() {
            elf::STB_GLOBAL
        } else {
            elf::STB_LOCAL
        };
        push_symbol(
            &mut symtab,
            name_offsets[&function.name],
            (bind << 4) | elf::STT_FUNC,
            1,
            starts[i],
            (function.slot_count() * SLOT_SIZE) as u64,
        );
        symbol_index.insert(function.name.clone(), (k + 2) as u64);
    }
    let first_global = (order.len() + 1) as u32;

    let mut rel = Vec::new();
    for (offset, callee) in &relocations {
        rel.extend(offset.to_le_bytes());
        rel.extend(((symbol_index[callee] << 32) | u64::from(R_BPF_64_32)).to_le_bytes());
    }

    let mut shstrtab = vec![0u8];
    let mut section_name = |name: &str| {
        let offset = shstrtab.len() as u32;
        shstrtab.extend(name.as_bytes());
        shstrtab.push(0);
        offset
    };
    let names = [
        section_name(".text"),
        section_name(".rel.text"),
        section_name(".symtab"),
        section_name(".strtab"),
        section_name(".shstrtab"),
    ];

    let mut out = vec![0u8; 64];
    let place = |out: &mut Vec<u8>, data: &[u8]| {
        while out.len() % 8 != 0 {
            out.push(0);
        }
        let offset = out.len() as u64;
        out.extend(data);
        (offset, data.len() as u64)
    };
    let text_at = place(&mut out, &text);
    let rel_at = place(&mut out, &rel);
    let symtab_at = place(&mut out, &symtab);
    let strtab_at = place(&mut out, &strtab);
    let shstrtab_at = place(&mut out, &shstrtab);
    while out.len() % 8 != 0 {
        out.push(0);
    }
    let shoff = out.len() as u64;

    out.extend([0u8; 64]);
    let headers = [
        (names[0], elf::SHT_PROGBITS, elf::SHF_ALLOC | elf::SHF_EXECINSTR, text_at, 0, 0, 8, 0),
        (names[1], elf::SHT_REL, elf::SHF_INFO_LINK, rel_at, 3, 1, 8, 16),
        (names[2], elf::SHT_SYMTAB, 0, symtab_at, 4, first_global, 8, 24),
        (names[3], elf::SHT_STRTAB, 0, strtab_at, 0, 0, 1, 0),
        (names[4], elf::SHT_STRTAB, 0, shstrtab_at, 0, 0, 1, 0),
    ];
    for (name, kind, flags, (offset, size), link, info, align, entsize) in headers {
        out.extend(name.to_le_bytes());
        out.extend(kind.to_le_bytes());
        out.extend(flags.to_le_bytes());
        out.extend(0u64.to_le_bytes());
        out.extend(offset.to_le_bytes());
        out.extend(size.to_le_bytes());
        out.extend((link as u32).to_le_bytes());
        out.extend(info.to_le_bytes());
        out.extend((align as u64).to_le_bytes());
        out.extend((entsize as u64).to_le_bytes());
    }

    let header = &mut out[..64];
    header[..4].copy_from_slice(b"\x7fELF");
    header[4] = elf::ELFCLASS64;
    header[5] = elf::ELFDATA2LSB;
    header[6] = elf::EV_CURRENT;
    header[16..18].copy_from_slice(&elf::ET_REL.to_le_bytes());
    header[18..20].copy_from_slice(&elf::EM_BPF.to_le_bytes());
    header[20..24].copy_from_slice(&u32::from(elf::EV_CURRENT).to_le_bytes());
    header[40..48].copy_from_slice(&shoff.to_le_bytes());
    header[52..54].copy_from_slice(&64u16.to_le_bytes());
    header[58..60].copy_from_slice(&64u16.to_le_bytes());
    header[60..62].copy_from_slice(&6u16.to_le_bytes());
    header[62..64].copy_from_slice(&5u16.to_le_bytes());
    out
}

fn push_symbol(out: &mut Vec<u8>, name: u32, info: u8, shndx: u16, value: u64, size: u64) {
    out.extend(name.to_le_bytes());
    out.push(info);
    out.push(0);
    out.extend(shndx.to_le_bytes());
    out.extend(value.to_le_bytes());
    out.extend(size.to_le_bytes());
}
