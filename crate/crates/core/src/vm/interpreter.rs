// SPDX-License-Identifier: Apache-2.0

use super::{ExecutionOutcome, VmError, VmInstance, STACK_BASE, STATIC_MEM_BASE};
use crate::isa::opcode::*;
use crate::isa::FRAME_POINTER;

#[inline]
fn offset_in(address: u64, base: u64, len: usize, width: usize) -> Option<usize> {
    let offset = address.checked_sub(base)?;
    let last = (len as u64).checked_sub(width as u64)?;
    (offset <= last).then_some(offset as usize)
}

impl VmInstance {
    #[inline]
    fn memory(&mut self, address: u64, width: usize, slot: usize) -> Result<&mut [u8], VmError> {
        if let Some(at) = offset_in(address, STACK_BASE, self.stack.len(), width) {
            return Ok(&mut self.stack[at..at + width]);
        }
        if let Some(at) = offset_in(address, STATIC_MEM_BASE, self.static_mem.len(), width) {
            return Ok(&mut self.static_mem[at..at + width]);
        }
        Err(VmError::MemoryOutOfBounds {
            slot,
            address,
            width: width as u8,
        })
    }

    #[inline]
    fn load(&mut self, address: u64, width: usize, slot: usize) -> Result<u64, VmError> {
        let bytes = self.memory(address, width, slot)?;
        let mut buf = [0u8; 8];
        buf[..width].copy_from_slice(bytes);
        Ok(u64::from_le_bytes(buf))
    }

    #[inline]
    fn store(&mut self, address: u64, width: usize, value: u64, slot: usize) -> Result<(), VmError> {
        let bytes = self.memory(address, width, slot)?;
        bytes.copy_from_slice(&value.to_le_bytes()[..width]);
        Ok(())
    }
}

fn width_of(opcode: u8) -> usize {
    usize::from(width_bytes(opcode))
}

pub(super) fn run(mut vm: VmInstance) -> Result<ExecutionOutcome, VmError> {
    let mut pc = 0usize;
    let mut executed = 0u64;
    let limit = vm.fuel_limit.unwrap_or(u64::MAX);
    let code = std::mem::take(&mut vm.code);

    loop {
        if executed == limit {
            return Err(VmError::FuelExhausted { limit });
        }
        let slot = pc;
        let insn = *code.get(pc).ok_or(VmError::PcOutOfBounds { pc })?;
        executed += 1;
        pc += 1;

        let op = insn.opcode();
        let dst = usize::from(insn.dst().index());
        let src = usize::from(insn.src().index());
        let offset = i64::from(insn.offset());
        let imm = insn.imm();
        // Immediates are sign-extended for 64-bit use and reinterpreted for
        // 32-bit use.
        let imm64 = imm as i64 as u64;
        let imm32 = imm as u32;
        let regs = &mut vm.registers;

        let writes_dst = matches!(op & CLS_MASK, CLS_ALU | CLS_ALU64 | CLS_LDX)
            || op == LDDW;
        if writes_dst && dst == usize::from(FRAME_POINTER) {
            return Err(VmError::IllegalWriteToR10 { slot });
        }

        let mut jump = |cond: bool| {
            if cond {
                pc = (pc as i64 + offset) as usize;
            }
        };

        match op {
            // ALU64
            0x07 => regs[dst] = regs[dst].wrapping_add(imm64),
            0x0f => regs[dst] = regs[dst].wrapping_add(regs[src]),
            0x17 => regs[dst] = regs[dst].wrapping_sub(imm64),
            0x1f => regs[dst] = regs[dst].wrapping_sub(regs[src]),
            0x27 => regs[dst] = regs[dst].wrapping_mul(imm64),
            0x2f => regs[dst] = regs[dst].wrapping_mul(regs[src]),
            0x37 | 0x3f | 0x97 | 0x9f => {
                let divisor = if op & SRC_X != 0 { regs[src] } else { imm64 };
                if divisor == 0 {
                    return Err(VmError::DivisionByZero { slot });
                }
                regs[dst] = if op & OP_MASK == OP_DIV {
                    regs[dst] / divisor
                } else {
                    regs[dst] % divisor
                };
            }
            0x47 => regs[dst] |= imm64,
            0x4f => regs[dst] |= regs[src],
            0x57 => regs[dst] &= imm64,
            0x5f => regs[dst] &= regs[src],
            0x67 => regs[dst] <<= imm64 & 63,
            0x6f => regs[dst] <<= regs[src] & 63,
            0x77 => regs[dst] >>= imm64 & 63,
            0x7f => regs[dst] >>= regs[src] & 63,
            0x87 => regs[dst] = regs[dst].wrapping_neg(),
            0xa7 => regs[dst] ^= imm64,
            0xaf => regs[dst] ^= regs[src],
            0xb7 => regs[dst] = imm64,
            0xbf => regs[dst] = regs[src],
            0xc7 => regs[dst] = ((regs[dst] as i64) >> (imm64 & 63)) as u64,
            0xcf => regs[dst] = ((regs[dst] as i64) >> (regs[src] & 63)) as u64,

            // ALU32: operate on the low halves, zero-extend the result.
            0x04 | 0x0c | 0x14 | 0x1c | 0x24 | 0x2c | 0x34 | 0x3c | 0x44 | 0x4c | 0x54 | 0x5c
            | 0x64 | 0x6c | 0x74 | 0x7c | 0x84 | 0x94 | 0x9c | 0xa4 | 0xac | 0xb4 | 0xbc
            | 0xc4 | 0xcc => {
                let lhs = regs[dst] as u32;
                let rhs = if op & SRC_X != 0 { regs[src] as u32 } else { imm32 };
                let result = match op & OP_MASK {
                    OP_ADD => lhs.wrapping_add(rhs),
                    OP_SUB => lhs.wrapping_sub(rhs),
                    OP_MUL => lhs.wrapping_mul(rhs),
                    OP_DIV | OP_MOD => {
                        if rhs == 0 {
                            return Err(VmError::DivisionByZero { slot });
                        }
                        if op & OP_MASK == OP_DIV {
                            lhs / rhs
                        } else {
                            lhs % rhs
                        }
                    }
                    OP_OR => lhs | rhs,
                    OP_AND => lhs & rhs,
                    OP_LSH => lhs << (rhs & 31),
                    OP_RSH => lhs >> (rhs & 31),
                    OP_NEG => lhs.wrapping_neg(),
                    OP_XOR => lhs ^ rhs,
                    OP_MOV => rhs,
                    _ => ((lhs as i32) >> (rhs & 31)) as u32,
                };
                regs[dst] = u64::from(result);
            }

            LE => {
                regs[dst] = match imm {
                    16 => regs[dst] as u16 as u64,
                    32 => regs[dst] as u32 as u64,
                    _ => regs[dst],
                }
            }
            BE => {
                regs[dst] = match imm {
                    16 => (regs[dst] as u16).swap_bytes() as u64,
                    32 => (regs[dst] as u32).swap_bytes() as u64,
                    _ => regs[dst].swap_bytes(),
                }
            }

            LDDW => {
                regs[dst] = insn.wide_imm().unwrap_or_default();
                pc += 1;
            }

            LDXB | LDXH | LDXW | LDXDW => {
                let address = regs[src].wrapping_add(offset as u64);
                let value = vm.load(address, width_of(op), slot)?;
                vm.registers[dst] = value;
            }
            STB | STH | STW | STDW => {
                let address = regs[dst].wrapping_add(offset as u64);
                vm.store(address, width_of(op), imm64, slot)?;
            }
            STXB | STXH | STXW | STXDW => {
                let address = regs[dst].wrapping_add(offset as u64);
                let value = regs[src];
                vm.store(address, width_of(op), value, slot)?;
            }

            JA => jump(true),
            0x15 => jump(regs[dst] == imm64),
            0x1d => jump(regs[dst] == regs[src]),
            0x25 => jump(regs[dst] > imm64),
            0x2d => jump(regs[dst] > regs[src]),
            0x35 => jump(regs[dst] >= imm64),
            0x3d => jump(regs[dst] >= regs[src]),
            0x45 => jump(regs[dst] & imm64 != 0),
            0x4d => jump(regs[dst] & regs[src] != 0),
            0x55 => jump(regs[dst] != imm64),
            0x5d => jump(regs[dst] != regs[src]),
            0x65 => jump((regs[dst] as i64) > (imm64 as i64)),
            0x6d => jump((regs[dst] as i64) > (regs[src] as i64)),
            0x75 => jump((regs[dst] as i64) >= (imm64 as i64)),
            0x7d => jump((regs[dst] as i64) >= (regs[src] as i64)),
            0xa5 => jump(regs[dst] < imm64),
            0xad => jump(regs[dst] < regs[src]),
            0xb5 => jump(regs[dst] <= imm64),
            0xbd => jump(regs[dst] <= regs[src]),
            0xc5 => jump((regs[dst] as i64) < (imm64 as i64)),
            0xcd => jump((regs[dst] as i64) < (regs[src] as i64)),
            0xd5 => jump((regs[dst] as i64) <= (imm64 as i64)),
            0xdd => jump((regs[dst] as i64) <= (regs[src] as i64)),

            CALL => {
                let index = imm as u32;
                let helper = match vm.helpers.get(index) {
                    Some(helper) if !insn.is_local_call() => helper,
                    _ => return Err(VmError::UnknownHelper { slot, index }),
                };
                let r = &vm.registers;
                let result = helper(r[1], r[2], r[3], r[4], r[5]);
                vm.registers[0] = result;
            }
            EXIT => {
                return Ok(ExecutionOutcome {
                    return_value: vm.registers[0],
                    instructions_executed: executed,
                    static_mem_final: std::mem::take(&mut vm.static_mem),
                });
            }
            _ => unreachable!("opcode {op:#04x} passed validation"),
        }
    }
}
