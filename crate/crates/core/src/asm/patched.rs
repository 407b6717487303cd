// SPDX-License-Identifier: Apache-2.0

//! Plaintext patched-program files.
//!
//! ```text
//! 1              <- expected return value, decimal u64
//! 0              <- static memory size in bytes, decimal
//! mov64 r0, 0x1  <- assembly body, entry code first
//! exit
//! ```

use super::{assemble, disassemble, AsmError};
use crate::isa::{IsaError, Program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchedProgramFile {
    pub expected_output: u64,
    pub static_mem_size: u64,
    pub body: Program,
}

impl PatchedProgramFile {
    /// Fails with [`AsmError::MissingTrailingExit`] unless `body` ends with
    /// `exit`.
    pub fn new(expected_output: u64, static_mem_size: u64, body: Program) -> Result<Self, AsmError> {
        if !body.last().is_exit() {
            return Err(AsmError::MissingTrailingExit);
        }
        Ok(PatchedProgramFile {
            expected_output,
            static_mem_size,
            body,
        })
    }
}

fn header(lines: &mut std::str::Lines<'_>, line: usize) -> Result<u64, AsmError> {
    let text = lines
        .next()
        .map(str::trim)
        .filter(|text| !text.is_empty())
        .ok_or(AsmError::MissingHeaderLine { line })?;
    if !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(AsmError::NonNumericHeader {
            line,
            text: text.to_string(),
        });
    }
    text.parse().map_err(|_| AsmError::NonNumericHeader {
        line,
        text: text.to_string(),
    })
}

pub fn parse_patched(text: &str) -> Result<PatchedProgramFile, AsmError> {
    let mut lines = text.lines();
    let expected_output = header(&mut lines, 1)?;
    let static_mem_size = header(&mut lines, 2)?;
    // Re-join so assembler line numbers stay relative to the body; shift them
    // back to file positions on error.
    let body_text: String = lines.collect::<Vec<_>>().join("\n");
    let body = match assemble(&body_text) {
        Ok(body) => body,
        Err(AsmError::Isa(IsaError::EmptyProgram)) => return Err(AsmError::MissingTrailingExit),
        Err(err) => return Err(shift_lines(err, 2)),
    };
    PatchedProgramFile::new(expected_output, static_mem_size, body)
}

fn shift_lines(err: AsmError, by: usize) -> AsmError {
    match err {
        AsmError::Syntax { line, column, message } => AsmError::Syntax {
            line: line + by,
            column,
            message,
        },
        AsmError::UnknownMnemonic { line, mnemonic } => AsmError::UnknownMnemonic {
            line: line + by,
            mnemonic,
        },
        AsmError::UnresolvedLabel { line, label } => AsmError::UnresolvedLabel {
            line: line + by,
            label,
        },
        AsmError::DuplicateLabel { line, label } => AsmError::DuplicateLabel {
            line: line + by,
            label,
        },
        AsmError::ImmediateOutOfRange { line, value, expected } => AsmError::ImmediateOutOfRange {
            line: line + by,
            value,
            expected,
        },
        AsmError::UnsupportedOperation { line, mnemonic, reason } => {
            AsmError::UnsupportedOperation {
                line: line + by,
                mnemonic,
                reason,
            }
        }
        other => other,
    }
}

/// Writes the file with a trailing newline.
pub fn serialize_patched(file: &PatchedProgramFile) -> String {
    format!(
        "{}\n{}\n{}\n",
        file.expected_output,
        file.static_mem_size,
        disassemble(&file.body)
    )
}
