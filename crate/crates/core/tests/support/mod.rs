// SPDX-License-Identifier: Apache-2.0

//! Reference machinery shared by the integration tests and the acceptance
//! target. Nothing here calls into `offload::vm`; the evaluator works from the
//! raw opcode bits so it can serve as an independent oracle.

#![allow(dead_code)]

use offload::isa::{Instruction, Reg};
use offload::patcher::{EbpfObject, FunctionBlock};
use offload::vm::{DEFAULT_STACK_SIZE, STACK_BASE, STATIC_MEM_BASE};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleFault {
    DivByZero,
    OutOfBounds { address: u64, width: u64 },
    Fuel,
    BadOpcode(u8),
    FellOff,
}

/// Machine state of the reference evaluator.
#[derive(Debug, Clone)]
pub struct Machine {
    pub regs: [u64; 11],
    pub stack: Vec<u8>,
    pub mem: Vec<u8>,
}

impl Machine {
    /// Register file as the VM sets it up on entry.
    pub fn new(mem_size: usize, args: &[u64]) -> Self {
        let mut regs = [0u64; 11];
        regs[1] = if mem_size == 0 { 0 } else { STATIC_MEM_BASE };
        regs[2] = mem_size as u64;
        for (i, a) in args.iter().enumerate() {
            regs[3 + i] = *a;
        }
        regs[10] = STACK_BASE + DEFAULT_STACK_SIZE as u64;
        Machine {
            regs,
            stack: vec![0; DEFAULT_STACK_SIZE],
            mem: vec![0; mem_size],
        }
    }

    fn region(&mut self, address: u64, width: u64) -> Result<&mut [u8], OracleFault> {
        let fault = OracleFault::OutOfBounds { address, width };
        let in_range = |base: u64, len: usize| {
            address >= base && (address - base).checked_add(width).is_some_and(|end| end <= len as u64)
        };
        if in_range(STACK_BASE, self.stack.len()) {
            let at = (address - STACK_BASE) as usize;
            return Ok(&mut self.stack[at..at + width as usize]);
        }
        if in_range(STATIC_MEM_BASE, self.mem.len()) {
            let at = (address - STATIC_MEM_BASE) as usize;
            return Ok(&mut self.mem[at..at + width as usize]);
        }
        Err(fault)
    }

    pub fn load(&mut self, address: u64, width: u64) -> Result<u64, OracleFault> {
        let bytes = self.region(address, width)?;
        let mut value = 0u64;
        for (i, b) in bytes.iter().enumerate() {
            value |= u64::from(*b) << (8 * i);
        }
        Ok(value)
    }

    pub fn store(&mut self, address: u64, width: u64, value: u64) -> Result<(), OracleFault> {
        let bytes = self.region(address, width)?;
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = (value >> (8 * i)) as u8;
        }
        Ok(())
    }
}

fn width_of(opcode: u8) -> u64 {
    match (opcode >> 3) & 3 {
        0 => 4,
        1 => 2,
        2 => 1,
        _ => 8,
    }
}

/// Applies an arithmetic opcode. 64-bit forms work in 128-bit space and are
/// truncated; 32-bit forms truncate both operands first.
pub fn alu(opcode: u8, lhs: u64, rhs: u64) -> Result<u64, OracleFault> {
    let wide = opcode & 7 == 7;
    let bits: u32 = if wide { 64 } else { 32 };
    let mask: u128 = (1u128 << bits) - 1;
    let a = u128::from(lhs) & mask;
    let b = u128::from(rhs) & mask;
    let shift = (b % u128::from(bits)) as u32;
    let signed_a: i128 = if a >> (bits - 1) == 1 { a as i128 - (1i128 << bits) } else { a as i128 };
    let out: u128 = match opcode >> 4 {
        0x0 => a + b,
        0x1 => a + (1u128 << bits) - b,
        0x2 => a * b,
        0x3 | 0x9 if b == 0 => return Err(OracleFault::DivByZero),
        0x3 => a / b,
        0x9 => a % b,
        0x4 => a | b,
        0x5 => a & b,
        0x6 => a << shift,
        0x7 => a >> shift,
        0x8 => (1u128 << bits) - a,
        0xa => a ^ b,
        0xb => b,
        0xc => (signed_a >> shift) as u128,
        _ => return Err(OracleFault::BadOpcode(opcode)),
    };
    Ok((out & mask) as u64)
}

fn byte_swap(value: u64, bits: i32, to_be: bool) -> u64 {
    let n = (bits / 8) as usize;
    let bytes = value.to_le_bytes();
    let mut out = [0u8; 8];
    for i in 0..n {
        out[i] = if to_be { bytes[n - 1 - i] } else { bytes[i] };
    }
    u64::from_le_bytes(out)
}

fn branch(opcode: u8, a: u64, b: u64) -> Result<bool, OracleFault> {
    let (sa, sb) = (a as i64, b as i64);
    Ok(match opcode >> 4 {
        0x0 => true,
        0x1 => a == b,
        0x2 => a > b,
        0x3 => a >= b,
        0x4 => a & b != 0,
        0x5 => a != b,
        0x6 => sa > sb,
        0x7 => sa >= sb,
        0xa => a < b,
        0xb => a <= b,
        0xc => sa < sb,
        0xd => sa <= sb,
        _ => return Err(OracleFault::BadOpcode(opcode)),
    })
}

/// What one non-control instruction asks of the interpreter loop.
enum Step {
    Next,
    Jump(i64),
    Call,
    Exit,
}

fn step(m: &mut Machine, insn: &Instruction) -> Result<Step, OracleFault> {
    let op = insn.opcode();
    let dst = usize::from(insn.dst().index());
    let src = usize::from(insn.src().index());
    let imm = insn.imm() as i64 as u64;
    let off = i64::from(insn.offset());
    let class = op & 7;
    let operand = if op & 8 != 0 { m.regs[src] } else { imm };
    match class {
        4 | 7 if op >> 4 == 0xd => {
            let bits = insn.imm();
            m.regs[dst] = match bits {
                16 | 32 | 64 => byte_swap(m.regs[dst], bits, op & 8 != 0),
                _ => return Err(OracleFault::BadOpcode(op)),
            };
        }
        4 | 7 => m.regs[dst] = alu(op, m.regs[dst], operand)?,
        0 => m.regs[dst] = insn.wide_imm().ok_or(OracleFault::BadOpcode(op))?,
        1 => {
            let address = m.regs[src].wrapping_add(off as u64);
            m.regs[dst] = m.load(address, width_of(op))?;
        }
        2 | 3 => {
            let address = m.regs[dst].wrapping_add(off as u64);
            let value = if class == 2 { imm } else { m.regs[src] };
            m.store(address, width_of(op), value)?;
        }
        5 => match op >> 4 {
            0x8 => return Ok(Step::Call),
            0x9 => return Ok(Step::Exit),
            _ => {
                if branch(op, m.regs[dst], operand)? {
                    return Ok(Step::Jump(off));
                }
            }
        },
        _ => return Err(OracleFault::BadOpcode(op)),
    }
    Ok(Step::Next)
}

/// Slot-indexed view of a function.
struct Table {
    slots: Vec<Option<Instruction>>,
    callees: Vec<Option<usize>>,
}

fn table(block: &FunctionBlock, names: &[String]) -> Table {
    let total: usize = block.instructions.iter().map(|i| i.slots()).sum();
    let mut slots = vec![None; total];
    let mut at = 0;
    for insn in &block.instructions {
        slots[at] = Some(*insn);
        at += insn.slots();
    }
    let mut callees = vec![None; total];
    for (slot, name) in &block.call_sites {
        callees[*slot] = names.iter().position(|n| n == name);
    }
    Table { slots, callees }
}

/// Runs a straight-line or branching single function.
pub fn run_function(m: &mut Machine, code: &[Instruction], fuel: u64) -> Result<u64, OracleFault> {
    let block = FunctionBlock {
        name: "main".into(),
        instructions: code.to_vec(),
        call_sites: Vec::new(),
    };
    run_tables(m, &[table(&block, &["main".into()])], 0, fuel)
}

/// Executes `object` with real calls: a return-address stack over one shared
/// register file and one shared stack frame, which is the semantics the
/// inliner must preserve.
pub fn run_object(m: &mut Machine, object: &EbpfObject, fuel: u64) -> Result<u64, OracleFault> {
    let names: Vec<String> = object.functions().iter().map(|f| f.name.clone()).collect();
    let tables: Vec<Table> = object.functions().iter().map(|f| table(f, &names)).collect();
    let entry = names.iter().position(|n| n == object.entry()).expect("entry exists");
    run_tables(m, &tables, entry, fuel)
}

fn run_tables(m: &mut Machine, tables: &[Table], entry: usize, fuel: u64) -> Result<u64, OracleFault> {
    let mut returns: Vec<(usize, usize)> = Vec::new();
    let (mut func, mut pc) = (entry, 0usize);
    let mut used = 0u64;
    loop {
        if used == fuel {
            return Err(OracleFault::Fuel);
        }
        used += 1;
        let t = &tables[func];
        let insn = t.slots.get(pc).copied().flatten().ok_or(OracleFault::FellOff)?;
        let next = pc + insn.slots();
        match step(m, &insn)? {
            Step::Next => pc = next,
            Step::Jump(off) => pc = (next as i64 + off) as usize,
            Step::Call => {
                let callee = t.callees[pc].ok_or(OracleFault::BadOpcode(insn.opcode()))?;
                returns.push((func, next));
                func = callee;
                pc = 0;
            }
            Step::Exit => match returns.pop() {
                Some((f, p)) => {
                    func = f;
                    pc = p;
                }
                None => return Ok(m.regs[0]),
            },
        }
    }
}

pub fn reg(i: u8) -> Reg {
    Reg::new(i).unwrap()
}

pub fn insn(opcode: u8, dst: u8, src: u8, off: i16, imm: i32) -> Instruction {
    Instruction::new(opcode, reg(dst), reg(src), off, imm).unwrap()
}

/// Values around the 32- and 64-bit wrap points.
pub const BOUNDARY: [u64; 12] = [
    0,
    1,
    0x7fff_ffff,
    0x8000_0000,
    0xffff_ffff,
    0x1_0000_0000,
    0x1_ffff_ffff,
    0x7fff_ffff_ffff_ffff,
    0x8000_0000_0000_0000,
    0xffff_ffff_ffff_ffff,
    0xffff_ffff_8000_0000,
    0x0000_0000_ffff_fffe,
];

pub fn interesting_u64(rng: &mut impl Rng) -> u64 {
    if rng.gen_bool(0.4) {
        BOUNDARY[rng.gen_range(0..BOUNDARY.len())]
    } else {
        rng.gen()
    }
}

pub fn interesting_i32(rng: &mut impl Rng) -> i32 {
    match rng.gen_range(0..6) {
        0 => 0,
        1 => -1,
        2 => i32::MIN,
        3 => i32::MAX,
        4 => rng.gen_range(-64..64),
        _ => rng.gen(),
    }
}

const ALU_OPS: [u8; 12] = [0x00, 0x10, 0x20, 0x30, 0x40, 0x50, 0x60, 0x70, 0x90, 0xa0, 0xb0, 0xc0];

/// A random arithmetic instruction writing one of `dsts`. Division and modulo
/// by an immediate use a non-zero immediate; register divisors may be zero.
pub fn random_alu(rng: &mut impl Rng, dsts: &[u8], srcs: &[u8]) -> Instruction {
    let dst = dsts[rng.gen_range(0..dsts.len())];
    let class = if rng.gen_bool(0.5) { 0x07 } else { 0x04 };
    match rng.gen_range(0..20) {
        0 => return insn(0x80 | class, dst, 0, 0, 0),
        1 => {
            let bits = [16, 32, 64][rng.gen_range(0..3)];
            let source = if rng.gen_bool(0.5) { 0x08 } else { 0x00 };
            return insn(0xd4 | source, dst, 0, 0, bits);
        }
        _ => {}
    }
    let op = ALU_OPS[rng.gen_range(0..ALU_OPS.len())];
    if rng.gen_bool(0.5) {
        let src = srcs[rng.gen_range(0..srcs.len())];
        insn(op | class | 0x08, dst, src, 0, 0)
    } else {
        let mut imm = interesting_i32(rng);
        if (op == 0x30 || op == 0x90) && imm == 0 {
            imm = 3;
        }
        insn(op | class, dst, 0, 0, imm)
    }
}

/// Straight-line program: seed r0, r2..r9 with wide constants, apply `len`
/// arithmetic instructions, spill r0..r9 (except r1) to static memory and
/// return r0. Never writes r1, so `[r1 + k]` addresses static memory.
pub fn random_alu_program(rng: &mut impl Rng, len: usize) -> Vec<Instruction> {
    let writable = [0u8, 2, 3, 4, 5, 6, 7, 8, 9];
    let readable = [0u8, 1, 2, 3, 4, 5, 6, 7, 8, 9];
    let mut code = Vec::new();
    for &r in &writable {
        code.push(Instruction::lddw(reg(r), interesting_u64(rng)));
    }
    for _ in 0..len {
        code.push(random_alu(rng, &writable, &readable));
    }
    for (k, &r) in writable.iter().enumerate() {
        code.push(insn(0x7b, 1, r, (8 * k) as i16, 0));
    }
    code.push(Instruction::exit());
    code
}

pub const ALU_PROGRAM_MEM: usize = 72;

/// Callee-saved style registers are not modelled: every function may write
/// any of these.
const OBJ_REGS: [u8; 9] = [0, 2, 3, 4, 5, 6, 7, 8, 9];

enum Piece {
    Insn(Instruction),
    Call(usize),
    /// Conditional forward jump over the next `skip` pieces.
    Skip { opcode: u8, dst: u8, imm: i32, skip: usize },
}

/// A random multi-function object whose call graph is acyclic with call
/// chains of at most `max_depth` edges. Function 0 is the entry.
pub fn random_object(rng: &mut impl Rng, max_depth: usize) -> EbpfObject {
    let count = rng.gen_range(2..=8);
    let mut levels: Vec<usize> = (0..count).map(|_| rng.gen_range(1..=max_depth)).collect();
    levels[0] = 0;
    // Half of the objects get a spine entry -> f1 -> ... -> f{max_depth}.
    let spine = count > max_depth && rng.gen_bool(0.5);
    if spine {
        for (i, level) in levels.iter_mut().enumerate().take(max_depth + 1) {
            *level = i;
        }
    }
    let names: Vec<String> = (0..count)
        .map(|i| if i == 0 { "entry".to_string() } else { format!("f{i}") })
        .collect();
    let mut functions = Vec::new();
    for i in 0..count {
        let callees: Vec<usize> = (0..count).filter(|&j| levels[j] > levels[i]).collect();
        let forced = (spine && i < max_depth).then_some(i + 1);
        functions.push(random_function(rng, &names[i], &names, &callees, forced));
    }
    EbpfObject::new(functions, "entry").expect("generated object is well formed")
}

fn random_function(
    rng: &mut impl Rng,
    name: &str,
    names: &[String],
    callees: &[usize],
    forced: Option<usize>,
) -> FunctionBlock {
    let mut pieces = Vec::new();
    if let Some(callee) = forced {
        pieces.push(Piece::Call(callee));
    }
    let len = rng.gen_range(2..12);
    for _ in 0..len {
        match rng.gen_range(0..10) {
            0 | 1 if !callees.is_empty() => pieces.push(Piece::Call(callees[rng.gen_range(0..callees.len())])),
            2 => {
                let slot = -8 * rng.gen_range(1..=8) as i16;
                let r = OBJ_REGS[rng.gen_range(0..OBJ_REGS.len())];
                pieces.push(Piece::Insn(insn(0x7b, 10, r, slot, 0)));
            }
            3 => {
                let slot = -8 * rng.gen_range(1..=8) as i16;
                let r = OBJ_REGS[rng.gen_range(0..OBJ_REGS.len())];
                pieces.push(Piece::Insn(insn(0x79, r, 10, slot, 0)));
            }
            4 => {
                let ops = [0x15u8, 0x25, 0x35, 0x45, 0x55, 0x65, 0xa5, 0xd5];
                pieces.push(Piece::Skip {
                    opcode: ops[rng.gen_range(0..ops.len())],
                    dst: OBJ_REGS[rng.gen_range(0..OBJ_REGS.len())],
                    imm: rng.gen_range(-8..64),
                    skip: rng.gen_range(1..4),
                });
            }
            5 => {
                // Early exit guarded by a branch.
                pieces.push(Piece::Skip {
                    opcode: 0x55,
                    dst: OBJ_REGS[rng.gen_range(0..OBJ_REGS.len())],
                    imm: rng.gen_range(0..8),
                    skip: 1,
                });
                pieces.push(Piece::Insn(Instruction::exit()));
            }
            6 => pieces.push(Piece::Insn(Instruction::lddw(reg(OBJ_REGS[rng.gen_range(0..9)]), rng.gen()))),
            _ => {
                let mut alu = random_alu(rng, &OBJ_REGS, &OBJ_REGS);
                // Register divisors could be zero; keep faults out of the
                // equivalence runs.
                if matches!(alu.opcode() & 0xf8, 0x38 | 0x98) {
                    alu = insn(alu.opcode() & !0x08, alu.dst().index(), 0, 0, 7);
                }
                pieces.push(Piece::Insn(alu));
            }
        }
    }
    pieces.push(Piece::Insn(Instruction::exit()));

    // Piece index -> slot, then resolve forward skips.
    let mut starts = Vec::with_capacity(pieces.len() + 1);
    let mut slot = 0usize;
    for piece in &pieces {
        starts.push(slot);
        slot += match piece {
            Piece::Insn(i) => i.slots(),
            _ => 1,
        };
    }
    starts.push(slot);
    let mut instructions = Vec::new();
    let mut call_sites = Vec::new();
    for (index, piece) in pieces.iter().enumerate() {
        match piece {
            Piece::Insn(i) => instructions.push(*i),
            Piece::Call(callee) => {
                call_sites.push((starts[index], names[*callee].clone()));
                instructions.push(Instruction::local_call(-1));
            }
            Piece::Skip { opcode, dst, imm, skip } => {
                // Never jump past the final exit.
                let target = (index + 1 + skip).min(pieces.len() - 1);
                let off = (starts[target] - starts[index] - 1) as i16;
                instructions.push(insn(*opcode, *dst, 0, off, *imm));
            }
        }
    }
    FunctionBlock {
        name: name.to_string(),
        instructions,
        call_sites,
    }
}

/// A uniformly chosen supported opcode with random fields, normalized so the
/// fields the opcode ignores are zero.
pub fn random_instruction(rng: &mut impl Rng) -> Instruction {
    use offload::isa::opcode::{classify, LDDW};
    use offload::isa::OpKind;
    let opcodes: Vec<u8> = (0..=255u8).filter(|&op| classify(op).is_some() && op != LDDW).collect();
    if rng.gen_bool(0.05) {
        return Instruction::lddw(reg(rng.gen_range(0..=10)), interesting_u64(rng));
    }
    let op = opcodes[rng.gen_range(0..opcodes.len())];
    let mut dst = rng.gen_range(0..=10u8);
    let mut src = rng.gen_range(0..=10u8);
    let mut off: i16 = rng.gen();
    let mut imm = interesting_i32(rng);
    match classify(op).unwrap() {
        OpKind::Alu { reg_src, .. } | OpKind::Branch { reg_src, .. } => {
            if !matches!(classify(op).unwrap(), OpKind::Branch { .. }) {
                off = 0;
            }
            if reg_src {
                imm = 0;
            } else {
                src = 0;
            }
        }
        OpKind::Neg { .. } => (src, off, imm) = (0, 0, 0),
        OpKind::Swap { .. } => (src, off, imm) = (0, 0, [16, 32, 64][rng.gen_range(0..3)]),
        OpKind::Load { .. } | OpKind::StoreReg { .. } => imm = 0,
        OpKind::Store { .. } => src = 0,
        OpKind::Ja => (dst, src, imm) = (0, 0, 0),
        OpKind::Call => (dst, src, off) = (0, rng.gen_range(0..=1), 0),
        OpKind::Exit => (dst, src, off, imm) = (0, 0, 0, 0),
        OpKind::LoadImm64 => unreachable!(),
    }
    insn(op, dst, src, off, imm)
}

/// A load or store at a random address near a region edge, or anywhere.
pub fn random_access(rng: &mut impl Rng, mem: u64) -> (Vec<Instruction>, u64, u64) {
    let stack_end = STACK_BASE + 512;
    let anchors = [STACK_BASE, stack_end, STATIC_MEM_BASE, STATIC_MEM_BASE + mem, 0, u64::MAX - 7];
    let address = if rng.gen_bool(0.1) {
        rng.gen()
    } else {
        anchors[rng.gen_range(0..anchors.len())].wrapping_add_signed(rng.gen_range(-24..24))
    };
    let size_bits = [0x00u8, 0x08, 0x10, 0x18][rng.gen_range(0..4)];
    let width = [4u64, 2, 1, 8][usize::from(size_bits >> 3)];
    let off: i16 = rng.gen_range(-16..16);
    let base = address.wrapping_sub(off as i64 as u64);
    let mut code = vec![Instruction::lddw(reg(6), base), Instruction::lddw(reg(7), rng.gen())];
    match rng.gen_range(0..3) {
        0 => code.push(insn(0x61 | size_bits, 0, 6, off, 0)),
        1 => {
            code.push(insn(0x63 | size_bits, 6, 7, off, 0));
            code.push(insn(0x61 | size_bits, 0, 6, off, 0));
        }
        _ => {
            code.push(insn(0x62 | size_bits, 6, 0, off, rng.gen()));
            code.push(insn(0x61 | size_bits, 0, 6, off, 0));
        }
    }
    code.push(Instruction::exit());
    (code, address, width)
}

/// True when `address..address + width` lies inside the stack or the
/// `mem`-byte static region.
pub fn access_is_legal(address: u64, width: u64, mem: u64) -> bool {
    let inside = |base: u64, len: u64| len >= width && address >= base && address - base <= len - width;
    inside(STACK_BASE, DEFAULT_STACK_SIZE as u64) || inside(STATIC_MEM_BASE, mem)
}

/// Longest chain of calls starting at the entry, in edges.
pub fn call_depth(object: &EbpfObject) -> usize {
    fn depth(object: &EbpfObject, name: &str) -> usize {
        let f = object.function(name).expect("callee exists");
        f.call_sites.iter().map(|(_, callee)| 1 + depth(object, callee)).max().unwrap_or(0)
    }
    depth(object, object.entry())
}
