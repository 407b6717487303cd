// SPDX-License-Identifier: Apache-2.0

//! Textual assembly and the plaintext patched-program format.
//!
//! The grammar is line oriented:
//!
//! ```text
//! # comment
//! loop:                      # label definition, may share a line
//!     ldxdw r3, [r1 + 8]     # memory operands are [rN], [rN + off], [rN - off]
//!     add64 r0, r3
//!     sub64 r2, 0x8          # immediates are decimal or hex, optionally signed
//!     jne r2, 0, loop        # jump targets are labels or +N / -N slot offsets
//!     lddw r4, 0x100000000   # the only two-slot instruction
//!     call 1                 # helper by index
//!     exit
//! ```
//!
//! Arithmetic mnemonics carry an optional `64`/`32` width suffix (no suffix
//! means 64-bit). Module text groups instructions into functions with
//! `.func name`; the first function is the entry unless `.entry name` says
//! otherwise, and `call name` refers to another function of the module.

mod disasm;
mod parse;
mod patched;

use thiserror::Error;

use crate::isa::{Instruction, IsaError};

pub use disasm::{disassemble, format_instruction};
pub use parse::{assemble, assemble_module};
pub use patched::{parse_patched, serialize_patched, PatchedProgramFile};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
    #[error("line {line}: label `{label}` defined twice")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: `{value}` does not fit {expected}")]
    ImmediateOutOfRange {
        line: usize,
        value: String,
        expected: &'static str,
    },
    #[error("line {line}: unsupported operation `{mnemonic}`: {reason}")]
    UnsupportedOperation {
        line: usize,
        mnemonic: String,
        reason: &'static str,
    },
    #[error("line {line}: function `{name}` defined twice")]
    DuplicateFunction { line: usize, name: String },
    #[error("entry function `{name}` is not defined")]
    MissingEntry { name: String },
    #[error("call to undefined function `{name}`")]
    UndefinedFunction { name: String },
    #[error("missing header line {line}")]
    MissingHeaderLine { line: usize },
    #[error("header line {line} is not a decimal integer: `{text}`")]
    NonNumericHeader { line: usize, text: String },
    #[error("program does not end with an exit instruction")]
    MissingTrailingExit,
    #[error(transparent)]
    Isa(#[from] IsaError),
}

/// A function of an assembled module. `call_sites` pairs the slot of each
/// symbolic `call` with the callee name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmFunction {
    pub name: String,
    pub instructions: Vec<Instruction>,
    pub call_sites: Vec<(usize, String)>,
}

/// Multi-function assembly, the textual counterpart of a relocatable object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmModule {
    functions: Vec<AsmFunction>,
    entry: String,
}

impl AsmModule {
    pub fn new(functions: Vec<AsmFunction>, entry: String) -> Result<Self, AsmError> {
        for (index, function) in functions.iter().enumerate() {
            if functions[..index].iter().any(|f| f.name == function.name) {
                return Err(AsmError::DuplicateFunction {
                    line: 0,
                    name: function.name.clone(),
                });
            }
        }
        if !functions.iter().any(|f| f.name == entry) {
            return Err(AsmError::MissingEntry { name: entry });
        }
        for (_, callee) in functions.iter().flat_map(|f| &f.call_sites) {
            if !functions.iter().any(|f| &f.name == callee) {
                return Err(AsmError::UndefinedFunction {
                    name: callee.clone(),
                });
            }
        }
        Ok(AsmModule { functions, entry })
    }

    pub fn functions(&self) -> &[AsmFunction] {
        &self.functions
    }

    pub fn entry(&self) -> &str {
        &self.entry
    }

    pub fn into_parts(self) -> (Vec<AsmFunction>, String) {
        (self.functions, self.entry)
    }

    /// Renders the module with `.func` headers, entry first. Jumps use numeric
    /// displacements and call sites use callee names.
    pub fn to_text(&self) -> String {
        let mut ordered: Vec<&AsmFunction> = self.functions.iter().collect();
        ordered.sort_by_key(|f| f.name != self.entry);
        let mut out = String::new();
        for function in ordered {
            out.push_str(&format!(".func {}\n", function.name));
            let mut slot = 0;
            for insn in &function.instructions {
                let callee = function
                    .call_sites
                    .iter()
                    .find(|(at, _)| *at == slot)
                    .map(|(_, name)| name);
                match callee {
                    Some(name) => out.push_str(&format!("    call {name}\n")),
                    None => out.push_str(&format!("    {}\n", format_instruction(insn))),
                }
                slot += insn.slots();
            }
        }
        out
    }
}
