// SPDX-License-Identifier: Apache-2.0

use crate::isa::opcode::{self, OpKind};
use crate::isa::{Instruction, Program};

pub(crate) fn alu_name(op: u8) -> &'static str {
    match op {
        opcode::OP_ADD => "add",
        opcode::OP_SUB => "sub",
        opcode::OP_MUL => "mul",
        opcode::OP_DIV => "div",
        opcode::OP_OR => "or",
        opcode::OP_AND => "and",
        opcode::OP_LSH => "lsh",
        opcode::OP_RSH => "rsh",
        opcode::OP_MOD => "mod",
        opcode::OP_XOR => "xor",
        opcode::OP_MOV => "mov",
        opcode::OP_ARSH => "arsh",
        _ => unreachable!("not a binary ALU op: {op:#x}"),
    }
}

pub(crate) fn branch_name(op: u8) -> &'static str {
    match op {
        opcode::JMP_JEQ => "jeq",
        opcode::JMP_JGT => "jgt",
        opcode::JMP_JGE => "jge",
        opcode::JMP_JSET => "jset",
        opcode::JMP_JNE => "jne",
        opcode::JMP_JSGT => "jsgt",
        opcode::JMP_JSGE => "jsge",
        opcode::JMP_JLT => "jlt",
        opcode::JMP_JLE => "jle",
        opcode::JMP_JSLT => "jslt",
        opcode::JMP_JSLE => "jsle",
        _ => unreachable!("not a branch op: {op:#x}"),
    }
}

pub(crate) fn width_suffix(width: u8) -> &'static str {
    match width {
        1 => "b",
        2 => "h",
        4 => "w",
        _ => "dw",
    }
}

fn hex(value: i64) -> String {
    if value < 0 {
        format!("-{:#x}", value.unsigned_abs())
    } else {
        format!("{value:#x}")
    }
}

fn displacement(offset: i16) -> String {
    if offset < 0 {
        offset.to_string()
    } else {
        format!("+{offset}")
    }
}

fn memory(base: crate::isa::Reg, offset: i16) -> String {
    match offset {
        0 => format!("[{base}]"),
        o if o < 0 => format!("[{base} - {}]", o.unsigned_abs()),
        o => format!("[{base} + {o}]"),
    }
}

/// Formats one instruction in the textual assembly grammar.
pub fn format_instruction(insn: &Instruction) -> String {
    let dst = insn.dst();
    let src = insn.src();
    match insn.kind() {
        OpKind::Alu { op, wide, reg_src } => {
            let bits = if wide { 64 } else { 32 };
            let operand = if reg_src {
                src.to_string()
            } else {
                hex(insn.imm().into())
            };
            format!("{}{bits} {dst}, {operand}", alu_name(op))
        }
        OpKind::Neg { wide } => format!("neg{} {dst}", if wide { 64 } else { 32 }),
        OpKind::Swap { to_be } => format!("{}{} {dst}", if to_be { "be" } else { "le" }, insn.imm()),
        OpKind::LoadImm64 => format!("lddw {dst}, {:#x}", insn.wide_imm().unwrap_or_default()),
        OpKind::Load { width } => {
            format!("ldx{} {dst}, {}", width_suffix(width), memory(src, insn.offset()))
        }
        OpKind::Store { width } => format!(
            "st{} {}, {}",
            width_suffix(width),
            memory(dst, insn.offset()),
            hex(insn.imm().into())
        ),
        OpKind::StoreReg { width } => {
            format!("stx{} {}, {src}", width_suffix(width), memory(dst, insn.offset()))
        }
        OpKind::Ja => format!("ja {}", displacement(insn.offset())),
        OpKind::Branch { op, reg_src } => {
            let operand = if reg_src {
                src.to_string()
            } else {
                hex(insn.imm().into())
            };
            format!(
                "{} {dst}, {operand}, {}",
                branch_name(op),
                displacement(insn.offset())
            )
        }
        OpKind::Call if insn.is_local_call() => format!("call local {}", insn.imm()),
        OpKind::Call => format!("call {}", insn.imm()),
        OpKind::Exit => "exit".to_string(),
    }
}

/// One instruction per line, numeric jump displacements, no trailing newline.
pub fn disassemble(program: &Program) -> String {
    program
        .instructions()
        .iter()
        .map(format_instruction)
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{Instruction, Reg};

    #[test]
    fn dummy_listing() {
        let program =
            Program::new(vec![Instruction::mov64_imm(Reg::R0, 1), Instruction::exit()]).unwrap();
        assert_eq!(disassemble(&program), "mov64 r0, 0x1\nexit");
    }

    #[test]
    fn wide_load_is_one_line() {
        let program = Program::new(vec![
            Instruction::lddw(Reg::R1, 0x1_0000_0000),
            Instruction::exit(),
        ])
        .unwrap();
        assert_eq!(disassemble(&program), "lddw r1, 0x100000000\nexit");
    }

    #[test]
    fn operand_styles() {
        let store = Instruction::new(opcode::STXDW, Reg::R10, Reg::R1, -8, 0).unwrap();
        assert_eq!(format_instruction(&store), "stxdw [r10 - 8], r1");
        let load = Instruction::new(opcode::LDXB, Reg::R1, Reg::R2, 0, 0).unwrap();
        assert_eq!(format_instruction(&load), "ldxb r1, [r2]");
        let xor = Instruction::new(0xa7, Reg::R1, Reg::R0, 0, -1).unwrap();
        assert_eq!(format_instruction(&xor), "xor64 r1, -0x1");
        let jsgt = Instruction::new(0x6d, Reg::R1, Reg::R2, -2, 0).unwrap();
        assert_eq!(format_instruction(&jsgt), "jsgt r1, r2, -2");
        assert_eq!(format_instruction(&Instruction::ja(0)), "ja +0");
        assert_eq!(format_instruction(&Instruction::local_call(-1)), "call local -1");
    }
}
