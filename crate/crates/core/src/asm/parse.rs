// SPDX-License-Identifier: Apache-2.0

//! Two-pass assembler: the first pass assigns slots to labels, the second
//! encodes each statement with label displacements resolved.

use std::collections::HashMap;

use super::{AsmError, AsmFunction, AsmModule};
use crate::isa::opcode::{self, SRC_K, SRC_X};
use crate::isa::{Instruction, Program, Reg};

const SIGNED_DIV_HINT: &str =
    "signed division is not supported, please convert to unsigned div/mod";
const FLOAT_HINT: &str = "the instruction set has no floating-point operations";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mnemonic {
    Alu { op: u8, wide: bool },
    Neg { wide: bool },
    Swap { to_be: bool, bits: i32 },
    Lddw,
    Ldx(u8),
    St(u8),
    Stx(u8),
    Ja,
    Branch(u8),
    Call,
    Exit,
}

#[derive(Debug, Clone, Copy)]
struct Operand<'a> {
    text: &'a str,
    column: usize,
}

#[derive(Debug)]
struct Statement<'a> {
    line: usize,
    column: usize,
    mnemonic: &'a str,
    operands: Vec<Operand<'a>>,
    slot: usize,
}

#[derive(Debug, Default)]
struct Section<'a> {
    name: Option<(String, usize)>,
    labels: HashMap<&'a str, usize>,
    statements: Vec<Statement<'a>>,
    slots: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> AsmError {
    AsmError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == '.'
}

fn is_ident(text: &str) -> bool {
    let mut chars = text.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c))
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_mnemonic(text: &str, line: usize) -> Result<Mnemonic, AsmError> {
    let lower = text.to_ascii_lowercase();
    let (stem, bits) = if let Some(stem) = lower.strip_suffix("64") {
        (stem, Some(64))
    } else if let Some(stem) = lower.strip_suffix("32") {
        (stem, Some(32))
    } else if let Some(stem) = lower.strip_suffix("16") {
        (stem, Some(16))
    } else {
        (lower.as_str(), None)
    };
    let unsupported = |reason| AsmError::UnsupportedOperation {
        line,
        mnemonic: text.to_string(),
        reason,
    };
    if matches!(stem, "sdiv" | "smod") {
        return Err(unsupported(SIGNED_DIV_HINT));
    }
    if matches!(
        stem,
        "fadd" | "fsub" | "fmul" | "fdiv" | "fmod" | "fneg" | "fmov" | "fabs" | "fsqrt" | "fcmp"
            | "fcvt" | "fmin" | "fmax"
    ) {
        return Err(unsupported(FLOAT_HINT));
    }
    let alu = |op| match bits {
        None | Some(64) => Some(Mnemonic::Alu { op, wide: true }),
        Some(32) => Some(Mnemonic::Alu { op, wide: false }),
        _ => None,
    };
    let parsed = match stem {
        "add" => alu(opcode::OP_ADD),
        "sub" => alu(opcode::OP_SUB),
        "mul" => alu(opcode::OP_MUL),
        "div" => alu(opcode::OP_DIV),
        "or" => alu(opcode::OP_OR),
        "and" => alu(opcode::OP_AND),
        "lsh" => alu(opcode::OP_LSH),
        "rsh" => alu(opcode::OP_RSH),
        "mod" => alu(opcode::OP_MOD),
        "xor" => alu(opcode::OP_XOR),
        "mov" => alu(opcode::OP_MOV),
        "arsh" => alu(opcode::OP_ARSH),
        "neg" => match bits {
            None | Some(64) => Some(Mnemonic::Neg { wide: true }),
            Some(32) => Some(Mnemonic::Neg { wide: false }),
            _ => None,
        },
        "le" | "be" => bits.map(|bits| Mnemonic::Swap {
            to_be: stem == "be",
            bits,
        }),
        _ => None,
    };
    if let Some(mnemonic) = parsed {
        return Ok(mnemonic);
    }
    let width = |suffix: &str| match suffix {
        "b" => Some(opcode::SIZE_B),
        "h" => Some(opcode::SIZE_H),
        "w" => Some(opcode::SIZE_W),
        "dw" => Some(opcode::SIZE_DW),
        _ => None,
    };
    let parsed = match lower.as_str() {
        "lddw" => Some(Mnemonic::Lddw),
        "ja" => Some(Mnemonic::Ja),
        "call" => Some(Mnemonic::Call),
        "exit" => Some(Mnemonic::Exit),
        "jeq" => Some(Mnemonic::Branch(opcode::JMP_JEQ)),
        "jgt" => Some(Mnemonic::Branch(opcode::JMP_JGT)),
        "jge" => Some(Mnemonic::Branch(opcode::JMP_JGE)),
        "jset" => Some(Mnemonic::Branch(opcode::JMP_JSET)),
        "jne" => Some(Mnemonic::Branch(opcode::JMP_JNE)),
        "jsgt" => Some(Mnemonic::Branch(opcode::JMP_JSGT)),
        "jsge" => Some(Mnemonic::Branch(opcode::JMP_JSGE)),
        "jlt" => Some(Mnemonic::Branch(opcode::JMP_JLT)),
        "jle" => Some(Mnemonic::Branch(opcode::JMP_JLE)),
        "jslt" => Some(Mnemonic::Branch(opcode::JMP_JSLT)),
        "jsle" => Some(Mnemonic::Branch(opcode::JMP_JSLE)),
        other => {
            if let Some(suffix) = other.strip_prefix("ldx") {
                width(suffix).map(Mnemonic::Ldx)
            } else if let Some(suffix) = other.strip_prefix("stx") {
                width(suffix).map(Mnemonic::Stx)
            } else if let Some(suffix) = other.strip_prefix("st") {
                width(suffix).map(Mnemonic::St)
            } else {
                None
            }
        }
    };
    parsed.ok_or_else(|| AsmError::UnknownMnemonic {
        line,
        mnemonic: text.to_string(),
    })
}

fn parse_int(text: &str) -> Option<i128> {
    let (negative, digits) = match text.as_bytes().first()? {
        b'-' => (true, &text[1..]),
        b'+' => (false, &text[1..]),
        _ => (false, text),
    };
    let magnitude = if let Some(hex) = digits
        .strip_prefix("0x")
        .or_else(|| digits.strip_prefix("0X"))
    {
        i128::from_str_radix(hex, 16).ok()?
    } else if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
        digits.parse::<i128>().ok()?
    } else {
        return None;
    };
    Some(if negative { -magnitude } else { magnitude })
}

fn parse_reg(operand: Operand<'_>, line: usize) -> Result<Reg, AsmError> {
    let index = operand
        .text
        .strip_prefix('r')
        .filter(|digits| !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|digits| digits.parse::<u8>().ok())
        .ok_or_else(|| {
            syntax(line, operand.column, format!("expected register, found `{}`", operand.text))
        })?;
    Reg::new(index).map_err(|_| {
        syntax(line, operand.column, format!("register r{index} does not exist"))
    })
}

fn parse_imm32(operand: Operand<'_>, line: usize) -> Result<i32, AsmError> {
    let value = parse_int(operand.text).ok_or_else(|| {
        syntax(line, operand.column, format!("expected immediate, found `{}`", operand.text))
    })?;
    // Accept both the signed range and unsigned 32-bit bit patterns.
    if (i128::from(i32::MIN)..=i128::from(u32::MAX)).contains(&value) {
        Ok(value as u32 as i32)
    } else {
        Err(AsmError::ImmediateOutOfRange {
            line,
            value: operand.text.to_string(),
            expected: "a 32-bit immediate",
        })
    }
}

fn parse_imm64(operand: Operand<'_>, line: usize) -> Result<u64, AsmError> {
    let value = parse_int(operand.text).ok_or_else(|| {
        syntax(line, operand.column, format!("expected immediate, found `{}`", operand.text))
    })?;
    if (i128::from(i64::MIN)..=i128::from(u64::MAX)).contains(&value) {
        Ok(value as u64)
    } else {
        Err(AsmError::ImmediateOutOfRange {
            line,
            value: operand.text.to_string(),
            expected: "a 64-bit immediate",
        })
    }
}

fn parse_offset(text: &str, operand: Operand<'_>, line: usize) -> Result<i16, AsmError> {
    let value = parse_int(text).ok_or_else(|| {
        syntax(line, operand.column, format!("expected offset, found `{text}`"))
    })?;
    i16::try_from(value).map_err(|_| AsmError::ImmediateOutOfRange {
        line,
        value: text.to_string(),
        expected: "a signed 16-bit offset",
    })
}

/// `[rN]`, `[rN + off]` or `[rN - off]`.
fn parse_memory(operand: Operand<'_>, line: usize) -> Result<(Reg, i16), AsmError> {
    let inner = operand
        .text
        .strip_prefix('[')
        .and_then(|rest| rest.strip_suffix(']'))
        .ok_or_else(|| {
            syntax(
                line,
                operand.column,
                format!("expected memory operand `[rN + off]`, found `{}`", operand.text),
            )
        })?;
    let split = inner.find(['+', '-']);
    let (base, offset) = match split {
        Some(at) => {
            let sign = &inner[at..=at];
            let magnitude = inner[at + 1..].trim();
            let offset = parse_offset(&format!("{sign}{magnitude}"), operand, line)?;
            (inner[..at].trim(), offset)
        }
        None => (inner.trim(), 0),
    };
    let reg = parse_reg(
        Operand {
            text: base,
            column: operand.column + 1,
        },
        line,
    )?;
    Ok((reg, offset))
}

fn expect_operands(statement: &Statement<'_>, count: usize) -> Result<(), AsmError> {
    if statement.operands.len() == count {
        Ok(())
    } else {
        Err(syntax(
            statement.line,
            statement.column,
            format!(
                "`{}` takes {count} operand(s), found {}",
                statement.mnemonic,
                statement.operands.len()
            ),
        ))
    }
}

fn build(
    opcode: u8,
    dst: Reg,
    src: Reg,
    offset: i16,
    imm: i32,
    statement: &Statement<'_>,
) -> Result<Instruction, AsmError> {
    Instruction::new(opcode, dst, src, offset, imm)
        .map_err(|err| syntax(statement.line, statement.column, err.to_string()))
}

/// Outcome of encoding a statement: the instruction plus the callee name of
/// a symbolic `call`.
type Encoded = (Instruction, Option<String>);

impl<'a> Section<'a> {
    fn jump_target(&self, statement: &Statement<'_>, operand: Operand<'_>) -> Result<i16, AsmError> {
        let line = statement.line;
        if operand.text.starts_with(['+', '-']) || operand.text.starts_with(|c: char| c.is_ascii_digit())
        {
            return parse_offset(operand.text, operand, line);
        }
        if !is_ident(operand.text) {
            return Err(syntax(
                line,
                operand.column,
                format!("expected label or offset, found `{}`", operand.text),
            ));
        }
        let target = *self
            .labels
            .get(operand.text)
            .ok_or_else(|| AsmError::UnresolvedLabel {
                line,
                label: operand.text.to_string(),
            })?;
        let offset = target as i64 - statement.slot as i64 - 1;
        i16::try_from(offset).map_err(|_| AsmError::ImmediateOutOfRange {
            line,
            value: offset.to_string(),
            expected: "a signed 16-bit jump displacement",
        })
    }

    fn encode(&self, statement: &Statement<'_>, symbolic_calls: bool) -> Result<Encoded, AsmError> {
        let line = statement.line;
        let ops = &statement.operands;
        let mnemonic = parse_mnemonic(statement.mnemonic, line)?;
        let insn = match mnemonic {
            Mnemonic::Alu { op, wide } => {
                expect_operands(statement, 2)?;
                let class = if wide { opcode::CLS_ALU64 } else { opcode::CLS_ALU };
                let dst = parse_reg(ops[0], line)?;
                if ops[1].text.starts_with('r') {
                    let src = parse_reg(ops[1], line)?;
                    build(class | op | SRC_X, dst, src, 0, 0, statement)?
                } else {
                    let imm = parse_imm32(ops[1], line)?;
                    build(class | op | SRC_K, dst, Reg::R0, 0, imm, statement)?
                }
            }
            Mnemonic::Neg { wide } => {
                expect_operands(statement, 1)?;
                let class = if wide { opcode::CLS_ALU64 } else { opcode::CLS_ALU };
                build(class | opcode::OP_NEG, parse_reg(ops[0], line)?, Reg::R0, 0, 0, statement)?
            }
            Mnemonic::Swap { to_be, bits } => {
                expect_operands(statement, 1)?;
                let code = if to_be { opcode::BE } else { opcode::LE };
                build(code, parse_reg(ops[0], line)?, Reg::R0, 0, bits, statement)?
            }
            Mnemonic::Lddw => {
                expect_operands(statement, 2)?;
                Instruction::lddw(parse_reg(ops[0], line)?, parse_imm64(ops[1], line)?)
            }
            Mnemonic::Ldx(size) => {
                expect_operands(statement, 2)?;
                let dst = parse_reg(ops[0], line)?;
                let (src, offset) = parse_memory(ops[1], line)?;
                build(opcode::CLS_LDX | opcode::MODE_MEM | size, dst, src, offset, 0, statement)?
            }
            Mnemonic::St(size) => {
                expect_operands(statement, 2)?;
                let (dst, offset) = parse_memory(ops[0], line)?;
                let imm = parse_imm32(ops[1], line)?;
                build(opcode::CLS_ST | opcode::MODE_MEM | size, dst, Reg::R0, offset, imm, statement)?
            }
            Mnemonic::Stx(size) => {
                expect_operands(statement, 2)?;
                let (dst, offset) = parse_memory(ops[0], line)?;
                let src = parse_reg(ops[1], line)?;
                build(opcode::CLS_STX | opcode::MODE_MEM | size, dst, src, offset, 0, statement)?
            }
            Mnemonic::Ja => {
                expect_operands(statement, 1)?;
                Instruction::ja(self.jump_target(statement, ops[0])?)
            }
            Mnemonic::Branch(op) => {
                expect_operands(statement, 3)?;
                let dst = parse_reg(ops[0], line)?;
                let offset = self.jump_target(statement, ops[2])?;
                if ops[1].text.starts_with('r') {
                    let src = parse_reg(ops[1], line)?;
                    build(opcode::CLS_JMP | op | SRC_X, dst, src, offset, 0, statement)?
                } else {
                    let imm = parse_imm32(ops[1], line)?;
                    build(opcode::CLS_JMP | op | SRC_K, dst, Reg::R0, offset, imm, statement)?
                }
            }
            Mnemonic::Call => {
                expect_operands(statement, 1)?;
                let target = ops[0];
                if let Some(rest) = target
                    .text
                    .strip_prefix("local")
                    .filter(|rest| rest.starts_with(char::is_whitespace))
                {
                    let imm = parse_imm32(
                        Operand {
                            text: rest.trim(),
                            column: target.column + 5,
                        },
                        line,
                    )?;
                    Instruction::local_call(imm)
                } else if is_ident(target.text) {
                    if !symbolic_calls {
                        return Err(AsmError::UnresolvedLabel {
                            line,
                            label: target.text.to_string(),
                        });
                    }
                    return Ok((Instruction::local_call(-1), Some(target.text.to_string())));
                } else {
                    Instruction::call(parse_imm32(target, line)?)
                }
            }
            Mnemonic::Exit => {
                expect_operands(statement, 0)?;
                Instruction::exit()
            }
        };
        Ok((insn, None))
    }
}

fn split_operands(text: &str, base_column: usize) -> Vec<Operand<'_>> {
    if text.trim().is_empty() {
        return Vec::new();
    }
    let mut operands = Vec::new();
    let mut start = 0;
    for part in text.split(',') {
        let leading = part.len() - part.trim_start().len();
        operands.push(Operand {
            text: part.trim(),
            column: base_column + start + leading,
        });
        start += part.len() + 1;
    }
    operands
}

/// Splits text into sections. Without `module`, directives are rejected and
/// a single anonymous section is produced.
fn scan(text: &str, module: bool) -> Result<(Vec<Section<'_>>, Option<(String, usize)>), AsmError> {
    let mut sections: Vec<Section<'_>> = vec![Section::default()];
    let mut entry = None;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let code = raw.split('#').next().unwrap_or_default();
        let mut rest = code.trim_start();
        let mut column = code.len() - rest.len() + 1;

        if let Some(directive) = rest.strip_prefix(".func").or_else(|| rest.strip_prefix(".entry")) {
            if !module {
                return Err(syntax(line, column, "directives are only valid in module text"));
            }
            let name = directive.trim();
            if !is_ident(name) || name.contains(char::is_whitespace) {
                return Err(syntax(line, column, format!("invalid function name `{name}`")));
            }
            if rest.starts_with(".entry") {
                entry = Some((name.to_string(), line));
            } else {
                let current = sections.last().expect("at least one section");
                if current.name.is_none() && !current.statements.is_empty() {
                    return Err(syntax(line, column, "instructions before the first .func"));
                }
                if current.name.is_none() {
                    sections.pop();
                }
                sections.push(Section {
                    name: Some((name.to_string(), line)),
                    ..Section::default()
                });
            }
            continue;
        }

        // Leading `label:` definitions.
        while let Some(colon) = rest.find(':') {
            let candidate = rest[..colon].trim_end();
            if !is_ident(candidate) {
                break;
            }
            let section = sections.last_mut().expect("at least one section");
            if section.labels.insert(candidate, section.slots).is_some() {
                return Err(AsmError::DuplicateLabel {
                    line,
                    label: candidate.to_string(),
                });
            }
            let after = &rest[colon + 1..];
            let trimmed = after.trim_start();
            column += colon + 1 + (after.len() - trimmed.len());
            rest = trimmed;
        }

        let rest = rest.trim_end();
        if rest.is_empty() {
            continue;
        }
        let mnemonic_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let mnemonic = &rest[..mnemonic_end];
        let operands = split_operands(&rest[mnemonic_end..], column + mnemonic_end);
        let section = sections.last_mut().expect("at least one section");
        let slot = section.slots;
        section.slots += if mnemonic.eq_ignore_ascii_case("lddw") { 2 } else { 1 };
        section.statements.push(Statement {
            line,
            column,
            mnemonic,
            operands,
            slot,
        });
    }
    Ok((sections, entry))
}

fn encode_section(section: &Section<'_>, symbolic_calls: bool) -> Result<AsmFunction, AsmError> {
    let mut instructions = Vec::with_capacity(section.statements.len());
    let mut call_sites = Vec::new();
    for statement in &section.statements {
        let (insn, callee) = section.encode(statement, symbolic_calls)?;
        if let Some(callee) = callee {
            call_sites.push((statement.slot, callee));
        }
        instructions.push(insn);
    }
    Ok(AsmFunction {
        name: section.name.as_ref().map(|(name, _)| name.clone()).unwrap_or_default(),
        instructions,
        call_sites,
    })
}

pub fn assemble(text: &str) -> Result<Program, AsmError> {
    let (sections, _) = scan(text, false)?;
    let function = encode_section(&sections[0], false)?;
    Ok(Program::new(function.instructions)?)
}

pub fn assemble_module(text: &str) -> Result<AsmModule, AsmError> {
    let (sections, entry) = scan(text, true)?;
    let mut functions: Vec<AsmFunction> = Vec::with_capacity(sections.len());
    for section in &sections {
        let Some((name, line)) = &section.name else {
            return Err(AsmError::MissingEntry {
                name: String::from("<none>"),
            });
        };
        if functions.iter().any(|f| &f.name == name) {
            return Err(AsmError::DuplicateFunction {
                line: *line,
                name: name.clone(),
            });
        }
        functions.push(encode_section(section, true)?);
    }
    let entry = match entry {
        Some((name, _)) => name,
        None => functions[0].name.clone(),
    };
    AsmModule::new(functions, entry)
}
