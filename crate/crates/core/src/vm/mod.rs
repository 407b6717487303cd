// SPDX-License-Identifier: Apache-2.0

//! Verifier and interpreter for patched programs.
//!
//! Guest addresses are virtual. The stack occupies
//! `[STACK_BASE, STACK_BASE + stack_size)` with `r10` pointing one past its
//! top, and static memory occupies
//! `[STATIC_MEM_BASE, STATIC_MEM_BASE + static_mem_size)`. Every load and
//! store is checked against those two regions; anything else traps with
//! [`VmError::MemoryOutOfBounds`]. Guest memory is little-endian on every
//! host.
//!
//! Entry registers: `r1` holds the static memory base (0 when the program
//! asked for none), `r2` its size in bytes, `r3`-`r5` caller arguments and
//! `r10` the frame pointer.

mod interpreter;
pub mod verifier;

use std::alloc::{alloc_zeroed, Layout};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::asm::PatchedProgramFile;
use crate::isa::{Instruction, Program};

pub use verifier::{
    verify, Diagnostic, DiagnosticCode, LintLevel, Severity, VerificationReport, VerifierPolicy,
};

/// Lowest stack address.
pub const STACK_BASE: u64 = 0x1_0000_0000;
/// Address of the first static memory byte.
pub const STATIC_MEM_BASE: u64 = 0x4_0000_0000;
pub const DEFAULT_STACK_SIZE: usize = 512;
/// Number of scalar arguments passed in r3..r5.
pub const MAX_ARGS: usize = 3;

pub type HelperFn = Arc<dyn Fn(u64, u64, u64, u64, u64) -> u64 + Send + Sync>;

/// Host functions reachable through `call <index>`.
#[derive(Clone, Default)]
pub struct HelperRegistry {
    helpers: BTreeMap<u32, HelperFn>,
}

impl HelperRegistry {
    /// Registers `helper` under `index`, replacing any previous entry.
    pub fn register<F>(&mut self, index: u32, helper: F) -> &mut Self
    where
        F: Fn(u64, u64, u64, u64, u64) -> u64 + Send + Sync + 'static,
    {
        self.helpers.insert(index, Arc::new(helper));
        self
    }

    pub fn contains(&self, index: u32) -> bool {
        self.helpers.contains_key(&index)
    }

    pub fn get(&self, index: u32) -> Option<&HelperFn> {
        self.helpers.get(&index)
    }

    pub fn indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.helpers.keys().copied()
    }
}

impl fmt::Debug for HelperRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.helpers.keys()).finish()
    }
}

#[derive(Debug, Clone)]
pub struct VmConfig {
    pub stack_size: usize,
    /// Maximum retired instructions; `None` runs unmetered.
    pub fuel_limit: Option<u64>,
    pub helpers: HelperRegistry,
    pub verifier_policy: VerifierPolicy,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig {
            stack_size: DEFAULT_STACK_SIZE,
            fuel_limit: None,
            helpers: HelperRegistry::default(),
            verifier_policy: VerifierPolicy::default(),
        }
    }
}

impl VmConfig {
    pub fn with_fuel(mut self, limit: u64) -> Self {
        self.fuel_limit = Some(limit);
        self
    }

    pub fn with_stack_size(mut self, bytes: usize) -> Self {
        self.stack_size = bytes;
        self
    }

    pub fn with_policy(mut self, policy: VerifierPolicy) -> Self {
        self.verifier_policy = policy;
        self
    }

    pub fn with_helper<F>(mut self, index: u32, helper: F) -> Self
    where
        F: Fn(u64, u64, u64, u64, u64) -> u64 + Send + Sync + 'static,
    {
        self.helpers.register(index, helper);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VmError {
    #[error("verification failed:\n{0}")]
    VerificationFailed(VerificationReport),
    #[error("cannot allocate {bytes} bytes of static memory")]
    AllocationFailure { bytes: u64 },
    #[error("stack size must be positive")]
    InvalidStackSize,
    #[error("at most {MAX_ARGS} entry arguments are supported, got {0}")]
    TooManyArgs(usize),
    #[error("static memory access [{offset}, +{len}) outside {size} bytes")]
    OutOfBounds { offset: u64, len: u64, size: u64 },
    #[error("fuel exhausted after {limit} instructions")]
    FuelExhausted { limit: u64 },
    #[error("slot {slot}: {width}-byte access at {address:#x} is out of bounds")]
    MemoryOutOfBounds { slot: usize, address: u64, width: u8 },
    #[error("slot {slot}: division by zero")]
    DivisionByZero { slot: usize },
    #[error("slot {slot}: helper {index} is not registered")]
    UnknownHelper { slot: usize, index: u32 },
    #[error("slot {slot}: r10 is read-only")]
    IllegalWriteToR10 { slot: usize },
    #[error("program counter {pc} left the program")]
    PcOutOfBounds { pc: usize },
}

/// Result of a run that reached `exit`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionOutcome {
    pub return_value: u64,
    pub instructions_executed: u64,
    pub static_mem_final: Vec<u8>,
}

/// A verified program with its memory, ready to run once.
#[derive(Clone)]
pub struct VmInstance {
    /// Indexed by slot; the second half of an lddw holds a never-executed
    /// placeholder.
    code: Vec<Instruction>,
    static_mem: Vec<u8>,
    stack: Vec<u8>,
    registers: [u64; 11],
    fuel_limit: Option<u64>,
    helpers: HelperRegistry,
    report: VerificationReport,
}

impl fmt::Debug for VmInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VmInstance")
            .field("slots", &self.code.len())
            .field("static_mem", &self.static_mem.len())
            .field("stack", &self.stack.len())
            .field("registers", &self.registers)
            .field("fuel_limit", &self.fuel_limit)
            .finish()
    }
}

fn zeroed_buffer(len: u64) -> Result<Vec<u8>, VmError> {
    let failure = VmError::AllocationFailure { bytes: len };
    if len == 0 {
        return Ok(Vec::new());
    }
    let len = usize::try_from(len).map_err(|_| failure.clone())?;
    let layout = Layout::array::<u8>(len).map_err(|_| failure.clone())?;
    // SAFETY: the layout has nonzero size and alignment 1; a non-null block
    // from `alloc_zeroed` of exactly `len` initialized bytes is a valid Vec
    // buffer for the global allocator.
    unsafe {
        let ptr = alloc_zeroed(layout);
        if ptr.is_null() {
            return Err(failure);
        }
        Ok(Vec::from_raw_parts(ptr, len, len))
    }
}

/// Verifies `program` and prepares its memory. `static_mem_size` bytes are
/// zero-filled lazily, so untouched pages cost no resident memory.
pub fn instantiate_program(
    program: &Program,
    static_mem_size: u64,
    config: &VmConfig,
) -> Result<VmInstance, VmError> {
    if config.stack_size == 0 {
        return Err(VmError::InvalidStackSize);
    }
    let report = verify(program, &config.verifier_policy, &config.helpers);
    if !report.ok {
        return Err(VmError::VerificationFailed(report));
    }
    let static_mem = zeroed_buffer(static_mem_size)?;
    let stack = vec![0u8; config.stack_size];

    let mut code = Vec::with_capacity(program.slot_count());
    for insn in program.instructions() {
        code.push(*insn);
        if insn.slots() == 2 {
            code.push(Instruction::exit());
        }
    }

    let mut registers = [0u64; 11];
    registers[1] = if static_mem_size == 0 { 0 } else { STATIC_MEM_BASE };
    registers[2] = static_mem_size;
    registers[10] = STACK_BASE + config.stack_size as u64;

    Ok(VmInstance {
        code,
        static_mem,
        stack,
        registers,
        fuel_limit: config.fuel_limit,
        helpers: config.helpers.clone(),
        report,
    })
}

/// Startup phase: verification plus allocation of static memory.
pub fn instantiate(file: &PatchedProgramFile, config: &VmConfig) -> Result<VmInstance, VmError> {
    instantiate_program(&file.body, file.static_mem_size, config)
}

impl VmInstance {
    pub fn register(&self, index: u8) -> u64 {
        self.registers[usize::from(index)]
    }

    pub fn static_mem(&self) -> &[u8] {
        &self.static_mem
    }

    pub fn stack_size(&self) -> usize {
        self.stack.len()
    }

    /// Report of the verification run at instantiation, including warnings.
    pub fn verification(&self) -> &VerificationReport {
        &self.report
    }

    /// Sets r3.. to `args`.
    pub fn set_args(&mut self, args: &[u64]) -> Result<(), VmError> {
        if args.len() > MAX_ARGS {
            return Err(VmError::TooManyArgs(args.len()));
        }
        for (index, value) in args.iter().enumerate() {
            self.registers[3 + index] = *value;
        }
        Ok(())
    }

    /// Copies `data` into static memory at `offset`.
    pub fn write_static_mem(&mut self, offset: u64, data: &[u8]) -> Result<(), VmError> {
        let range = self.static_range(offset, data.len() as u64)?;
        self.static_mem[range].copy_from_slice(data);
        Ok(())
    }

    pub fn read_static_mem(&self, offset: u64, len: u64) -> Result<&[u8], VmError> {
        let range = self.static_range(offset, len)?;
        Ok(&self.static_mem[range])
    }

    fn static_range(&self, offset: u64, len: u64) -> Result<std::ops::Range<usize>, VmError> {
        let size = self.static_mem.len() as u64;
        match offset.checked_add(len) {
            Some(end) if end <= size => Ok(offset as usize..end as usize),
            _ => Err(VmError::OutOfBounds { offset, len, size }),
        }
    }

    /// Execution phase: runs from slot 0 until `exit`, consuming the
    /// instance.
    pub fn execute(self) -> Result<ExecutionOutcome, VmError> {
        interpreter::run(self)
    }
}

/// Instantiates and runs `file`, comparing r0 with the file's expected
/// output.
pub fn run_patched(
    file: &PatchedProgramFile,
    config: &VmConfig,
) -> Result<(ExecutionOutcome, bool), VmError> {
    let outcome = instantiate(file, config)?.execute()?;
    let matches = outcome.return_value == file.expected_output;
    Ok((outcome, matches))
}
