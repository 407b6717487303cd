// SPDX-License-Identifier: Apache-2.0

//! In-memory model and bit-exact codec of the eBPF instruction subset.
//!
//! Raw bytecode is a sequence of 8-byte little-endian slots:
//!
//! ```text
//! +--------+--------------+-------------------+--------------------+
//! | opcode | src:4 | dst:4 |  offset (i16 LE)  |   imm (i32 LE)     |
//! +--------+--------------+-------------------+--------------------+
//! ```
//!
//! The only variable-length instruction is `lddw`, which spills the upper 32
//! bits of its immediate into a second slot whose other fields are zero.
//! Signed division, floating point, atomics and the 32-bit jump class have no
//! opcode in the decoder table and fail with [`IsaError::UnknownOpcode`] or
//! [`IsaError::ReservedFieldNonzero`].

pub mod opcode;

use std::fmt;

use thiserror::Error;

pub use opcode::OpKind;

/// Size of one instruction slot in bytes.
pub const SLOT_SIZE: usize = 8;

/// Index of the read-only frame pointer.
pub const FRAME_POINTER: u8 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IsaError {
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("opcode {opcode:#04x}: reserved field `{field}` must be zero")]
    ReservedFieldNonzero { opcode: u8, field: &'static str },
    #[error("lddw is missing its second slot")]
    MissingSecondSlot,
    #[error("register r{0} does not exist")]
    InvalidRegister(u8),
    #[error("byte swap width must be 16, 32 or 64, got {0}")]
    InvalidSwapWidth(i32),
    #[error("bytecode length {len} is not a multiple of 8")]
    TruncatedInput { len: usize },
    #[error("program contains no instructions")]
    EmptyProgram,
    #[error("slot {slot}: {error}")]
    AtSlot {
        slot: usize,
        #[source]
        error: Box<IsaError>,
    },
}

/// One of the eleven registers r0..r10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(u8);

impl Reg {
    pub const R0: Reg = Reg(0);
    pub const R1: Reg = Reg(1);
    pub const R2: Reg = Reg(2);
    pub const R10: Reg = Reg(FRAME_POINTER);

    pub fn new(index: u8) -> Result<Reg, IsaError> {
        if index <= FRAME_POINTER {
            Ok(Reg(index))
        } else {
            Err(IsaError::InvalidRegister(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A decoded instruction. Fields are only reachable through validating
/// constructors, so every value encodes and decodes losslessly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    opcode: u8,
    dst: Reg,
    src: Reg,
    offset: i16,
    imm: i32,
    wide_imm: Option<u64>,
}

impl Instruction {
    /// Builds a single-slot instruction, checking the reserved-field rules of
    /// its opcode.
    pub fn new(opcode: u8, dst: Reg, src: Reg, offset: i16, imm: i32) -> Result<Self, IsaError> {
        let kind = opcode::classify(opcode).ok_or(IsaError::UnknownOpcode(opcode))?;
        if kind == OpKind::LoadImm64 {
            return Err(IsaError::MissingSecondSlot);
        }
        let insn = Instruction {
            opcode,
            dst,
            src,
            offset,
            imm,
            wide_imm: None,
        };
        insn.check_reserved(kind)?;
        Ok(insn)
    }

    /// `lddw dst, value`.
    pub fn lddw(dst: Reg, value: u64) -> Self {
        Instruction {
            opcode: opcode::LDDW,
            dst,
            src: Reg::R0,
            offset: 0,
            imm: value as u32 as i32,
            wide_imm: Some(value),
        }
    }

    pub fn exit() -> Self {
        Instruction {
            opcode: opcode::EXIT,
            dst: Reg::R0,
            src: Reg::R0,
            offset: 0,
            imm: 0,
            wide_imm: None,
        }
    }

    pub fn ja(offset: i16) -> Self {
        Instruction {
            opcode: opcode::JA,
            offset,
            ..Self::exit()
        }
    }

    /// Helper call by registry index.
    pub fn call(index: i32) -> Self {
        Instruction {
            opcode: opcode::CALL,
            imm: index,
            ..Self::exit()
        }
    }

    /// Local (function-to-function) call as emitted by compilers before
    /// relocation: `src = 1`, `imm = -1`.
    pub fn local_call(imm: i32) -> Self {
        Instruction {
            opcode: opcode::CALL,
            src: Reg(opcode::PSEUDO_CALL),
            imm,
            ..Self::exit()
        }
    }

    pub fn mov64_imm(dst: Reg, imm: i32) -> Self {
        Instruction {
            opcode: opcode::MOV64_IMM,
            dst,
            imm,
            ..Self::exit()
        }
    }

    pub fn opcode(&self) -> u8 {
        self.opcode
    }

    pub fn kind(&self) -> OpKind {
        // Constructors guarantee the opcode is classifiable.
        opcode::classify(self.opcode).expect("validated opcode")
    }

    pub fn dst(&self) -> Reg {
        self.dst
    }

    pub fn src(&self) -> Reg {
        self.src
    }

    pub fn offset(&self) -> i16 {
        self.offset
    }

    pub fn imm(&self) -> i32 {
        self.imm
    }

    pub fn wide_imm(&self) -> Option<u64> {
        self.wide_imm
    }

    /// Number of 8-byte slots this instruction occupies.
    pub fn slots(&self) -> usize {
        if self.wide_imm.is_some() {
            2
        } else {
            1
        }
    }

    pub fn is_exit(&self) -> bool {
        self.opcode == opcode::EXIT
    }

    pub fn is_local_call(&self) -> bool {
        self.opcode == opcode::CALL && self.src.0 == opcode::PSEUDO_CALL
    }

    /// True for `ja` and conditional branches, the instructions whose offset
    /// is a control-flow displacement.
    pub fn is_jump(&self) -> bool {
        matches!(self.kind(), OpKind::Ja | OpKind::Branch { .. })
    }

    /// Copy of a jump instruction with a different displacement.
    pub fn with_offset(&self, offset: i16) -> Self {
        Instruction { offset, ..*self }
    }

    fn check_reserved(&self, kind: OpKind) -> Result<(), IsaError> {
        let opcode = self.opcode;
        let zero = |value: i64, field: &'static str| {
            if value == 0 {
                Ok(())
            } else {
                Err(IsaError::ReservedFieldNonzero { opcode, field })
            }
        };
        let src = i64::from(self.src.0);
        let dst = i64::from(self.dst.0);
        let off = i64::from(self.offset);
        let imm = i64::from(self.imm);
        match kind {
            // A nonzero offset on div/mod/mov selects the signed or
            // sign-extending variants, which are not part of the subset.
            OpKind::Alu { reg_src: false, .. } => zero(src, "src").and(zero(off, "offset")),
            OpKind::Alu { reg_src: true, .. } => zero(imm, "imm").and(zero(off, "offset")),
            OpKind::Neg { .. } => zero(src, "src")
                .and(zero(off, "offset"))
                .and(zero(imm, "imm")),
            OpKind::Swap { .. } => {
                zero(src, "src").and(zero(off, "offset"))?;
                match self.imm {
                    16 | 32 | 64 => Ok(()),
                    other => Err(IsaError::InvalidSwapWidth(other)),
                }
            }
            OpKind::LoadImm64 => zero(src, "src").and(zero(off, "offset")),
            OpKind::Load { .. } | OpKind::StoreReg { .. } => zero(imm, "imm"),
            OpKind::Store { .. } => zero(src, "src"),
            OpKind::Ja => zero(dst, "dst").and(zero(src, "src")).and(zero(imm, "imm")),
            OpKind::Branch { reg_src: false, .. } => zero(src, "src"),
            OpKind::Branch { reg_src: true, .. } => zero(imm, "imm"),
            OpKind::Call => {
                zero(dst, "dst").and(zero(off, "offset"))?;
                if self.src.0 > opcode::PSEUDO_CALL {
                    return Err(IsaError::ReservedFieldNonzero { opcode, field: "src" });
                }
                Ok(())
            }
            OpKind::Exit => zero(dst, "dst")
                .and(zero(src, "src"))
                .and(zero(off, "offset"))
                .and(zero(imm, "imm")),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::asm::format_instruction(self))
    }
}

fn read_slot(slot: &[u8; SLOT_SIZE]) -> (u8, u8, u8, i16, i32) {
    let regs = slot[1];
    (
        slot[0],
        regs & 0x0f,
        regs >> 4,
        i16::from_le_bytes([slot[2], slot[3]]),
        i32::from_le_bytes([slot[4], slot[5], slot[6], slot[7]]),
    )
}

/// Decodes one instruction. `next_slot` is consulted only for `lddw`.
pub fn decode_instruction(
    slot: &[u8; SLOT_SIZE],
    next_slot: Option<&[u8; SLOT_SIZE]>,
) -> Result<Instruction, IsaError> {
    let (opcode, dst, src, offset, imm) = read_slot(slot);
    let dst = Reg::new(dst)?;
    let src = Reg::new(src)?;
    if opcode != opcode::LDDW {
        return Instruction::new(opcode, dst, src, offset, imm);
    }
    let next = next_slot.ok_or(IsaError::MissingSecondSlot)?;
    let (next_opcode, next_dst, next_src, next_offset, high) = read_slot(next);
    if next_opcode != 0 || next_dst != 0 || next_src != 0 || next_offset != 0 {
        return Err(IsaError::ReservedFieldNonzero {
            opcode,
            field: "second slot",
        });
    }
    if src != Reg::R0 || offset != 0 {
        return Err(IsaError::ReservedFieldNonzero {
            opcode,
            field: if offset != 0 { "offset" } else { "src" },
        });
    }
    let value = u64::from(imm as u32) | (u64::from(high as u32) << 32);
    Ok(Instruction::lddw(dst, value))
}

/// Encodes into 8 bytes, or 16 for `lddw`.
pub fn encode_instruction(insn: &Instruction) -> Vec<u8> {
    let mut out = Vec::with_capacity(insn.slots() * SLOT_SIZE);
    encode_into(insn, &mut out);
    out
}

fn encode_into(insn: &Instruction, out: &mut Vec<u8>) {
    out.push(insn.opcode);
    out.push(insn.dst.0 | (insn.src.0 << 4));
    out.extend_from_slice(&insn.offset.to_le_bytes());
    out.extend_from_slice(&insn.imm.to_le_bytes());
    if let Some(value) = insn.wide_imm {
        out.extend_from_slice(&[0; 4]);
        out.extend_from_slice(&((value >> 32) as u32).to_le_bytes());
    }
}

/// A non-empty instruction sequence. Jump displacements are measured in
/// slots, so `lddw` counts twice.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    instructions: Vec<Instruction>,
    slot_count: usize,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Result<Self, IsaError> {
        if instructions.is_empty() {
            return Err(IsaError::EmptyProgram);
        }
        let slot_count = instructions.iter().map(Instruction::slots).sum();
        Ok(Program {
            instructions,
            slot_count,
        })
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn into_instructions(self) -> Vec<Instruction> {
        self.instructions
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    /// Iterates `(slot index, instruction)` pairs.
    pub fn slots(&self) -> impl Iterator<Item = (usize, &Instruction)> + '_ {
        self.instructions.iter().scan(0usize, |slot, insn| {
            let at = *slot;
            *slot += insn.slots();
            Some((at, insn))
        })
    }

    /// Slot table where the second half of each `lddw` maps to `None`.
    pub fn slot_map(&self) -> Vec<Option<usize>> {
        let mut map = Vec::with_capacity(self.slot_count);
        for (index, insn) in self.instructions.iter().enumerate() {
            map.push(Some(index));
            if insn.slots() == 2 {
                map.push(None);
            }
        }
        map
    }

    pub fn last(&self) -> &Instruction {
        self.instructions.last().expect("non-empty program")
    }
}

pub fn decode_program(bytes: &[u8]) -> Result<Program, IsaError> {
    if bytes.len() % SLOT_SIZE != 0 {
        return Err(IsaError::TruncatedInput { len: bytes.len() });
    }
    let slots: Vec<&[u8; SLOT_SIZE]> = bytes
        .chunks_exact(SLOT_SIZE)
        .map(|chunk| chunk.try_into().expect("exact chunk"))
        .collect();
    let mut instructions = Vec::with_capacity(slots.len());
    let mut index = 0;
    while index < slots.len() {
        let insn = decode_instruction(slots[index], slots.get(index + 1).copied()).map_err(
            |error| IsaError::AtSlot {
                slot: index,
                error: Box::new(error),
            },
        )?;
        index += insn.slots();
        instructions.push(insn);
    }
    Program::new(instructions)
}

pub fn encode_program(program: &Program) -> Vec<u8> {
    let mut out = Vec::with_capacity(program.slot_count() * SLOT_SIZE);
    for insn in program.instructions() {
        encode_into(insn, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(bytes: [u8; 8]) -> [u8; 8] {
        bytes
    }

    #[test]
    fn decodes_mov_and_exit() {
        let mov = decode_instruction(&slot([0xb7, 0, 0, 0, 1, 0, 0, 0]), None).unwrap();
        assert_eq!(mov, Instruction::mov64_imm(Reg::R0, 1));
        assert_eq!(mov.kind(), OpKind::Alu { op: opcode::OP_MOV, wide: true, reg_src: false });
        let exit = decode_instruction(&slot([0x95, 0, 0, 0, 0, 0, 0, 0]), None).unwrap();
        assert_eq!(exit, Instruction::exit());
    }

    #[test]
    fn unknown_opcode_reports_byte() {
        let err = decode_instruction(&slot([0xff, 0, 0, 0, 0, 0, 0, 0]), None).unwrap_err();
        assert_eq!(err, IsaError::UnknownOpcode(0xff));
    }

    #[test]
    fn encodes_known_layouts() {
        assert_eq!(
            encode_instruction(&Instruction::mov64_imm(Reg::R0, 1)),
            [0xb7, 0, 0, 0, 1, 0, 0, 0]
        );
        assert_eq!(encode_instruction(&Instruction::exit()), [0x95, 0, 0, 0, 0, 0, 0, 0]);
        let wide = encode_instruction(&Instruction::lddw(Reg::R1, 0x1_0000_0000));
        assert_eq!(wide, [0x18, 0x01, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn register_nibbles() {
        // stxdw [r10 - 8], r1
        let insn = decode_instruction(&slot([0x7b, 0x1a, 0xf8, 0xff, 0, 0, 0, 0]), None).unwrap();
        assert_eq!(insn.dst(), Reg::R10);
        assert_eq!(insn.src(), Reg::R1);
        assert_eq!(insn.offset(), -8);
        let bad = decode_instruction(&slot([0xbf, 0x0b, 0, 0, 0, 0, 0, 0]), None).unwrap_err();
        assert_eq!(bad, IsaError::InvalidRegister(11));
    }

    #[test]
    fn reserved_fields_and_signed_variants() {
        // sdiv64 in the newer ISA is div with offset 1.
        let sdiv = decode_instruction(&slot([0x3f, 0x21, 1, 0, 0, 0, 0, 0]), None).unwrap_err();
        assert_eq!(
            sdiv,
            IsaError::ReservedFieldNonzero { opcode: 0x3f, field: "offset" }
        );
        let exit = decode_instruction(&slot([0x95, 0, 0, 0, 3, 0, 0, 0]), None).unwrap_err();
        assert!(matches!(exit, IsaError::ReservedFieldNonzero { field: "imm", .. }));
        let swap = decode_instruction(&slot([0xd4, 1, 0, 0, 8, 0, 0, 0]), None).unwrap_err();
        assert_eq!(swap, IsaError::InvalidSwapWidth(8));
    }

    #[test]
    fn wide_load_needs_second_slot() {
        let first = slot([0x18, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(decode_instruction(&first, None), Err(IsaError::MissingSecondSlot));
        let garbage = slot([0x95, 0, 0, 0, 0, 0, 0, 0]);
        assert!(matches!(
            decode_instruction(&first, Some(&garbage)),
            Err(IsaError::ReservedFieldNonzero { field: "second slot", .. })
        ));
        assert_eq!(
            Instruction::new(opcode::LDDW, Reg::R1, Reg::R0, 0, 0),
            Err(IsaError::MissingSecondSlot)
        );
    }

    #[test]
    fn program_decoding() {
        let bytes = [
            0xb7, 0, 0, 0, 1, 0, 0, 0, //
            0x95, 0, 0, 0, 0, 0, 0, 0,
        ];
        let program = decode_program(&bytes).unwrap();
        assert_eq!(program.instructions().len(), 2);
        assert_eq!(program.slot_count(), 2);
        assert_eq!(encode_program(&program), bytes);

        assert_eq!(decode_program(&bytes[..9]), Err(IsaError::TruncatedInput { len: 9 }));
        assert_eq!(decode_program(&[]), Err(IsaError::EmptyProgram));

        let mut bad = bytes.to_vec();
        bad[8] = 0xff;
        match decode_program(&bad).unwrap_err() {
            IsaError::AtSlot { slot, error } => {
                assert_eq!(slot, 1);
                assert_eq!(*error, IsaError::UnknownOpcode(0xff));
            }
            other => panic!("unexpected {other:?}"),
        }

        // A trailing lddw without its second half.
        let truncated_wide = [0x18, 1, 0, 0, 0, 0, 0, 0];
        assert!(matches!(
            decode_program(&truncated_wide),
            Err(IsaError::AtSlot { slot: 0, .. })
        ));
    }

    #[test]
    fn wide_loads_account_for_extra_slot() {
        let program = Program::new(vec![
            Instruction::lddw(Reg::R1, u64::MAX),
            Instruction::mov64_imm(Reg::R0, 0),
            Instruction::exit(),
        ])
        .unwrap();
        assert_eq!(program.slot_count(), 4);
        assert_eq!(encode_program(&program).len(), 32);
        assert_eq!(program.slot_map(), vec![Some(0), None, Some(1), Some(2)]);
        let slots: Vec<usize> = program.slots().map(|(slot, _)| slot).collect();
        assert_eq!(slots, vec![0, 2, 3]);
        assert_eq!(decode_program(&encode_program(&program)).unwrap(), program);
    }
}
