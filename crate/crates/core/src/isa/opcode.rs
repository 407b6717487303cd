// SPDX-License-Identifier: Apache-2.0

//! Operation codes of the supported eBPF subset.
//!
//! An opcode byte packs an instruction class in its three low bits. For
//! arithmetic and jump classes the high nibble selects the operation and bit 3
//! selects the source operand (immediate or register). For memory classes the
//! top three bits are the addressing mode and bits 3-4 the access width.

// Instruction classes.
pub const CLS_LD: u8 = 0x00;
pub const CLS_LDX: u8 = 0x01;
pub const CLS_ST: u8 = 0x02;
pub const CLS_STX: u8 = 0x03;
pub const CLS_ALU: u8 = 0x04;
pub const CLS_JMP: u8 = 0x05;
pub const CLS_JMP32: u8 = 0x06;
pub const CLS_ALU64: u8 = 0x07;
pub const CLS_MASK: u8 = 0x07;

// Source operand selector.
pub const SRC_K: u8 = 0x00;
pub const SRC_X: u8 = 0x08;

// Memory access widths.
pub const SIZE_W: u8 = 0x00;
pub const SIZE_H: u8 = 0x08;
pub const SIZE_B: u8 = 0x10;
pub const SIZE_DW: u8 = 0x18;
pub const SIZE_MASK: u8 = 0x18;

// Addressing modes.
pub const MODE_IMM: u8 = 0x00;
pub const MODE_MEM: u8 = 0x60;

// Arithmetic operations.
pub const OP_ADD: u8 = 0x00;
pub const OP_SUB: u8 = 0x10;
pub const OP_MUL: u8 = 0x20;
pub const OP_DIV: u8 = 0x30;
pub const OP_OR: u8 = 0x40;
pub const OP_AND: u8 = 0x50;
pub const OP_LSH: u8 = 0x60;
pub const OP_RSH: u8 = 0x70;
pub const OP_NEG: u8 = 0x80;
pub const OP_MOD: u8 = 0x90;
pub const OP_XOR: u8 = 0xa0;
pub const OP_MOV: u8 = 0xb0;
pub const OP_ARSH: u8 = 0xc0;
pub const OP_END: u8 = 0xd0;
pub const OP_MASK: u8 = 0xf0;

// Jump operations.
pub const JMP_JA: u8 = 0x00;
pub const JMP_JEQ: u8 = 0x10;
pub const JMP_JGT: u8 = 0x20;
pub const JMP_JGE: u8 = 0x30;
pub const JMP_JSET: u8 = 0x40;
pub const JMP_JNE: u8 = 0x50;
pub const JMP_JSGT: u8 = 0x60;
pub const JMP_JSGE: u8 = 0x70;
pub const JMP_CALL: u8 = 0x80;
pub const JMP_EXIT: u8 = 0x90;
pub const JMP_JLT: u8 = 0xa0;
pub const JMP_JLE: u8 = 0xb0;
pub const JMP_JSLT: u8 = 0xc0;
pub const JMP_JSLE: u8 = 0xd0;

// Complete opcodes used directly by the rest of the crate.
pub const LDDW: u8 = CLS_LD | MODE_IMM | SIZE_DW;
pub const LDXW: u8 = CLS_LDX | MODE_MEM | SIZE_W;
pub const LDXH: u8 = CLS_LDX | MODE_MEM | SIZE_H;
pub const LDXB: u8 = CLS_LDX | MODE_MEM | SIZE_B;
pub const LDXDW: u8 = CLS_LDX | MODE_MEM | SIZE_DW;
pub const STW: u8 = CLS_ST | MODE_MEM | SIZE_W;
pub const STH: u8 = CLS_ST | MODE_MEM | SIZE_H;
pub const STB: u8 = CLS_ST | MODE_MEM | SIZE_B;
pub const STDW: u8 = CLS_ST | MODE_MEM | SIZE_DW;
pub const STXW: u8 = CLS_STX | MODE_MEM | SIZE_W;
pub const STXH: u8 = CLS_STX | MODE_MEM | SIZE_H;
pub const STXB: u8 = CLS_STX | MODE_MEM | SIZE_B;
pub const STXDW: u8 = CLS_STX | MODE_MEM | SIZE_DW;
pub const LE: u8 = CLS_ALU | OP_END | SRC_K;
pub const BE: u8 = CLS_ALU | OP_END | SRC_X;
pub const JA: u8 = CLS_JMP | JMP_JA;
pub const CALL: u8 = CLS_JMP | JMP_CALL;
pub const EXIT: u8 = CLS_JMP | JMP_EXIT;
pub const MOV64_IMM: u8 = CLS_ALU64 | OP_MOV | SRC_K;
pub const MOV64_REG: u8 = CLS_ALU64 | OP_MOV | SRC_X;

/// `src` value of a call instruction that targets a local function rather
/// than a registered helper.
pub const PSEUDO_CALL: u8 = 1;

/// Shape of an opcode, which determines the operand fields it uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    /// Two-operand arithmetic; `wide` selects ALU64, `reg_src` the X form.
    Alu { op: u8, wide: bool, reg_src: bool },
    /// Single-operand negation.
    Neg { wide: bool },
    /// Byte swap to little (`to_be == false`) or big endian.
    Swap { to_be: bool },
    LoadImm64,
    Load { width: u8 },
    Store { width: u8 },
    StoreReg { width: u8 },
    Ja,
    /// Conditional jump.
    Branch { op: u8, reg_src: bool },
    Call,
    Exit,
}

/// Width in bytes encoded by a memory size modifier.
pub fn width_bytes(size: u8) -> u8 {
    match size & SIZE_MASK {
        SIZE_B => 1,
        SIZE_H => 2,
        SIZE_W => 4,
        _ => 8,
    }
}

/// Classifies `opcode`, returning `None` for anything outside the supported
/// subset (atomics, 32-bit jumps, legacy packet loads, unassigned bytes).
pub fn classify(opcode: u8) -> Option<OpKind> {
    let class = opcode & CLS_MASK;
    match class {
        CLS_ALU | CLS_ALU64 => {
            let wide = class == CLS_ALU64;
            let reg_src = opcode & SRC_X != 0;
            match opcode & OP_MASK {
                OP_ADD | OP_SUB | OP_MUL | OP_DIV | OP_OR | OP_AND | OP_LSH | OP_RSH | OP_MOD
                | OP_XOR | OP_MOV | OP_ARSH => Some(OpKind::Alu {
                    op: opcode & OP_MASK,
                    wide,
                    reg_src,
                }),
                OP_NEG if !reg_src => Some(OpKind::Neg { wide }),
                OP_END if !wide => Some(OpKind::Swap { to_be: reg_src }),
                _ => None,
            }
        }
        CLS_LD if opcode == LDDW => Some(OpKind::LoadImm64),
        CLS_LDX if opcode & 0xe0 == MODE_MEM => Some(OpKind::Load {
            width: width_bytes(opcode),
        }),
        CLS_ST if opcode & 0xe0 == MODE_MEM => Some(OpKind::Store {
            width: width_bytes(opcode),
        }),
        CLS_STX if opcode & 0xe0 == MODE_MEM => Some(OpKind::StoreReg {
            width: width_bytes(opcode),
        }),
        CLS_JMP => {
            let reg_src = opcode & SRC_X != 0;
            match opcode & OP_MASK {
                JMP_JA if !reg_src => Some(OpKind::Ja),
                JMP_CALL if !reg_src => Some(OpKind::Call),
                JMP_EXIT if !reg_src => Some(OpKind::Exit),
                JMP_JEQ | JMP_JGT | JMP_JGE | JMP_JSET | JMP_JNE | JMP_JSGT | JMP_JSGE
                | JMP_JLT | JMP_JLE | JMP_JSLT | JMP_JSLE => Some(OpKind::Branch {
                    op: opcode & OP_MASK,
                    reg_src,
                }),
                _ => None,
            }
        }
        _ => None,
    }
}
