// SPDX-License-Identifier: Apache-2.0

//! Turns a multi-function eBPF object into a single-function patched program.
//!
//! The VM only runs one flat function, so every BPF-to-BPF call is removed by
//! splicing a copy of the callee over the call slot. Callee exits become `ja`
//! instructions that land on the first slot after the spliced body, and the
//! caller's own jumps are re-targeted around the grown code. Registers and
//! stack are shared between caller and inlined callee, exactly as they are in
//! the flattened program.
//!
//! Adding the memory pointer parameter to the C entry point is a source level
//! change and stays manual; this module consumes the recompiled object.

mod elf;
mod inline;

use thiserror::Error;

use crate::asm::{assemble_module, AsmError, AsmFunction, AsmModule, PatchedProgramFile};
use crate::isa::{Instruction, IsaError, Program};

pub use elf::{load_object, load_object_with_entry, write_object, write_object_with, WriteOptions};
pub use inline::{inline_calls, MAX_INLINE_DEPTH};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("not an eBPF relocatable object: {0}")]
    NotAnObjectFile(String),
    #[error("big-endian objects are not supported")]
    BigEndianObjectRejected,
    #[error("function `{function}`: call at slot {slot} has no relocation")]
    UnresolvedCall { function: String, slot: usize },
    #[error("symbols `{first}` and `{second}` overlap")]
    OverlappingSymbols { first: String, second: String },
    #[error("unsupported relocation type {r_type} at section offset {offset:#x}")]
    UnsupportedRelocation { offset: u64, r_type: u32 },
    #[error("cannot pick an entry function among {0:?}")]
    AmbiguousEntry(Vec<String>),
    #[error("entry function `{0}` is not defined")]
    MissingEntry(String),
    #[error("function `{0}` defined twice")]
    DuplicateFunction(String),
    #[error("function `{function}` calls undefined `{callee}`")]
    UnknownCallee { function: String, callee: String },
    #[error("function `{function}`: slot {slot} is not a local call")]
    InvalidCallSite { function: String, slot: usize },
    #[error("recursive call chain {}", .0.join(" -> "))]
    RecursionUnsupported(Vec<String>),
    #[error("function `{function}`: jump at slot {slot} no longer fits a 16-bit offset")]
    OffsetOverflow { function: String, slot: usize },
    #[error("call chain deeper than {limit}")]
    DepthLimitExceeded { limit: usize },
    #[error("function `{function}`: jump at slot {slot} has no instruction at its target")]
    InvalidJumpTarget { function: String, slot: usize },
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error(transparent)]
    Asm(#[from] AsmError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionBlock {
    pub name: String,
    pub instructions: Vec<Instruction>,
    /// `(slot, callee)` for every local call, slots counted within this block.
    pub call_sites: Vec<(usize, String)>,
}

impl FunctionBlock {
    pub fn slot_count(&self) -> usize {
        self.instructions.iter().map(Instruction::slots).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EbpfObject {
    functions: Vec<FunctionBlock>,
    entry: String,
}

impl EbpfObject {
    /// Checks names, entry and call sites. Cycles are reported later by
    /// [`inline_calls`].
    pub fn new(functions: Vec<FunctionBlock>, entry: impl Into<String>) -> Result<Self, PatchError> {
        let entry = entry.into();
        for (index, function) in functions.iter().enumerate() {
            if functions[..index].iter().any(|f| f.name == function.name) {
                return Err(PatchError::DuplicateFunction(function.name.clone()));
            }
        }
        if !functions.iter().any(|f| f.name == entry) {
            return Err(PatchError::MissingEntry(entry));
        }
        for function in &functions {
            let slots: Vec<(usize, &Instruction)> = slot_positions(&function.instructions).collect();
            for (slot, callee) in &function.call_sites {
                let is_call = slots
                    .iter()
                    .any(|(at, insn)| at == slot && insn.is_local_call());
                if !is_call {
                    return Err(PatchError::InvalidCallSite {
                        function: function.name.clone(),
                        slot: *slot,
                    });
                }
                if !functions.iter().any(|f| &f.name == callee) {
                    return Err(PatchError::UnknownCallee {
                        function: function.name.clone(),
                        callee: callee.clone(),
                    });
                }
            }
        }
        Ok(EbpfObject { functions, entry })
    }

    /// Parses multi-function assembly (`.func` / `.entry` / `call name`).
    pub fn from_text(text: &str) -> Result<Self, PatchError> {
        Ok(assemble_module(text)?.into())
    }

    pub fn functions(&self) -> &[FunctionBlock] {
        &self.functions
    }

    pub fn entry(&self) -> &str {
        &self.entry
    }

    pub fn function(&self, name: &str) -> Option<&FunctionBlock> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn to_module(&self) -> AsmModule {
        let functions = self
            .functions
            .iter()
            .map(|f| AsmFunction {
                name: f.name.clone(),
                instructions: f.instructions.clone(),
                call_sites: f.call_sites.clone(),
            })
            .collect();
        AsmModule::new(functions, self.entry.clone()).expect("object invariants hold for the module")
    }
}

impl From<AsmModule> for EbpfObject {
    fn from(module: AsmModule) -> Self {
        let (functions, entry) = module.into_parts();
        let functions = functions
            .into_iter()
            .map(|f| FunctionBlock {
                name: f.name,
                instructions: f.instructions,
                call_sites: f.call_sites,
            })
            .collect();
        EbpfObject { functions, entry }
    }
}

pub(crate) fn slot_positions(
    instructions: &[Instruction],
) -> impl Iterator<Item = (usize, &Instruction)> + '_ {
    let mut slot = 0;
    instructions.iter().map(move |insn| {
        let at = slot;
        slot += insn.slots();
        (at, insn)
    })
}

pub fn make_patched(
    program: Program,
    expected_output: u64,
    static_mem_size: u64,
) -> Result<PatchedProgramFile, PatchError> {
    Ok(PatchedProgramFile::new(expected_output, static_mem_size, program)?)
}
