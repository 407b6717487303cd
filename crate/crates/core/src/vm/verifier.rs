// SPDX-License-Identifier: Apache-2.0

//! Static checks run before a program is instantiated.
//!
//! Structural checks are always errors: the program must end with `exit`,
//! jumps must land on an instruction boundary inside the program, helper
//! calls must name a registered helper, local calls must have been inlined,
//! and division or modulus by a constant zero is rejected.
//!
//! Two lints are configurable. Loops are otherwise allowed, unlike the
//! in-kernel verifier: data-processing programs need them, and fuel bounds
//! their execution instead.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::HelperRegistry;
use crate::isa::opcode::{self, OpKind};
use crate::isa::{Instruction, Program, Reg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintLevel {
    Allow,
    Warn,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierPolicy {
    /// Entry code writes r1 before reading the static-memory pointer it holds.
    pub r1_clobber: LintLevel,
    /// A backward `ja` whose loop body has no way out.
    pub infinite_loop: LintLevel,
}

impl Default for VerifierPolicy {
    fn default() -> Self {
        VerifierPolicy {
            r1_clobber: LintLevel::Warn,
            infinite_loop: LintLevel::Warn,
        }
    }
}

impl VerifierPolicy {
    pub fn strict() -> Self {
        VerifierPolicy {
            r1_clobber: LintLevel::Deny,
            infinite_loop: LintLevel::Deny,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    MissingExit,
    JumpOutOfBounds,
    JumpIntoWideLoad,
    UnknownHelper,
    UnresolvedLocalCall,
    DivisionByZeroConstant,
    R1Clobbered,
    InfiniteLoop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub slot: usize,
    pub code: DiagnosticCode,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{severity}[{:?}] slot {}: {}", self.code, self.slot, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

impl VerificationReport {
    pub fn has(&self, code: DiagnosticCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for diagnostic in &self.diagnostics {
            writeln!(f, "{diagnostic}")?;
        }
        Ok(())
    }
}

struct Collector {
    diagnostics: Vec<Diagnostic>,
}

impl Collector {
    fn error(&mut self, slot: usize, code: DiagnosticCode, message: String) {
        self.diagnostics.push(Diagnostic {
            slot,
            code,
            severity: Severity::Error,
            message,
        });
    }

    fn lint(&mut self, level: LintLevel, slot: usize, code: DiagnosticCode, message: String) {
        let severity = match level {
            LintLevel::Allow => return,
            LintLevel::Warn => Severity::Warning,
            LintLevel::Deny => Severity::Error,
        };
        self.diagnostics.push(Diagnostic {
            slot,
            code,
            severity,
            message,
        });
    }
}

fn jump_target(slot: usize, insn: &Instruction) -> i64 {
    slot as i64 + 1 + i64::from(insn.offset())
}

/// Verifies `program` against `policy`. Never fails; problems are reported as
/// diagnostics.
pub fn verify(program: &Program, policy: &VerifierPolicy, helpers: &HelperRegistry) -> VerificationReport {
    let mut out = Collector {
        diagnostics: Vec::new(),
    };
    let slot_map = program.slot_map();
    let slot_count = program.slot_count();

    if !program.last().is_exit() {
        out.error(
            slot_count - program.last().slots(),
            DiagnosticCode::MissingExit,
            "program does not end with an exit instruction".into(),
        );
    }

    let mut targets = BTreeSet::new();
    for (slot, insn) in program.slots() {
        match insn.kind() {
            OpKind::Ja | OpKind::Branch { .. } => {
                let target = jump_target(slot, insn);
                if target < 0 || target >= slot_count as i64 {
                    out.error(
                        slot,
                        DiagnosticCode::JumpOutOfBounds,
                        format!("jump target {target} outside [0, {slot_count})"),
                    );
                } else if slot_map[target as usize].is_none() {
                    out.error(
                        slot,
                        DiagnosticCode::JumpIntoWideLoad,
                        format!("jump target {target} is the second half of an lddw"),
                    );
                } else {
                    targets.insert(target as usize);
                }
            }
            OpKind::Call if insn.is_local_call() => out.error(
                slot,
                DiagnosticCode::UnresolvedLocalCall,
                "local function calls must be inlined before execution".into(),
            ),
            OpKind::Call => {
                let index = insn.imm() as u32;
                if !helpers.contains(index) {
                    out.error(
                        slot,
                        DiagnosticCode::UnknownHelper,
                        format!("helper {index} is not registered"),
                    );
                }
            }
            OpKind::Alu {
                op: opcode::OP_DIV | opcode::OP_MOD,
                reg_src: false,
                ..
            } if insn.imm() == 0 => out.error(
                slot,
                DiagnosticCode::DivisionByZeroConstant,
                "division or modulus by constant zero".into(),
            ),
            _ => {}
        }
    }

    if let Some(slot) = r1_clobber(program, &targets) {
        out.lint(
            policy.r1_clobber,
            slot,
            DiagnosticCode::R1Clobbered,
            "r1 (static memory pointer) is overwritten before it is read".into(),
        );
    }
    for slot in closed_loops(program) {
        out.lint(
            policy.infinite_loop,
            slot,
            DiagnosticCode::InfiniteLoop,
            "unconditional backward jump over a body with no exit".into(),
        );
    }

    let ok = !out.diagnostics.iter().any(|d| d.severity == Severity::Error);
    VerificationReport {
        ok,
        diagnostics: out.diagnostics,
    }
}

/// Registers read and written by a non-control-flow instruction.
fn reads_writes(insn: &Instruction) -> (Vec<Reg>, Option<Reg>) {
    let dst = insn.dst();
    let src = insn.src();
    match insn.kind() {
        OpKind::Alu {
            op: opcode::OP_MOV,
            reg_src,
            ..
        } => (if reg_src { vec![src] } else { vec![] }, Some(dst)),
        OpKind::Alu { reg_src, .. } => (
            if reg_src { vec![dst, src] } else { vec![dst] },
            Some(dst),
        ),
        OpKind::Neg { .. } | OpKind::Swap { .. } => (vec![dst], Some(dst)),
        OpKind::LoadImm64 => (vec![], Some(dst)),
        OpKind::Load { .. } => (vec![src], Some(dst)),
        OpKind::Store { .. } => (vec![dst], None),
        OpKind::StoreReg { .. } => (vec![dst, src], None),
        _ => (vec![], None),
    }
}

/// First slot of the entry block that writes r1 before any read of it.
fn r1_clobber(program: &Program, targets: &BTreeSet<usize>) -> Option<usize> {
    for (slot, insn) in program.slots() {
        if slot > 0 && targets.contains(&slot) {
            return None;
        }
        if matches!(
            insn.kind(),
            OpKind::Ja | OpKind::Branch { .. } | OpKind::Call | OpKind::Exit
        ) {
            return None;
        }
        let (reads, writes) = reads_writes(insn);
        if reads.contains(&Reg::R1) {
            return None;
        }
        if writes == Some(Reg::R1) {
            return Some(slot);
        }
    }
    None
}

/// Backward `ja` instructions whose loop body contains no control flow at
/// all, so execution can never leave the loop.
fn closed_loops(program: &Program) -> Vec<usize> {
    let slots: Vec<(usize, &Instruction)> = program.slots().collect();
    let mut found = Vec::new();
    for (index, (slot, insn)) in slots.iter().enumerate() {
        if insn.kind() != OpKind::Ja || insn.offset() >= 0 {
            continue;
        }
        let target = jump_target(*slot, insn);
        if target < 0 {
            continue;
        }
        let escapes = slots[..index]
            .iter()
            .rev()
            .take_while(|(s, _)| *s as i64 >= target)
            .any(|(_, body)| {
                matches!(
                    body.kind(),
                    OpKind::Ja | OpKind::Branch { .. } | OpKind::Exit
                )
            });
        if !escapes {
            found.push(*slot);
        }
    }
    found
}
