// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use super::{slot_positions, EbpfObject, PatchError};
use crate::isa::{Instruction, Program};

/// Longest call chain that is expanded before giving up.
pub const MAX_INLINE_DEPTH: usize = 32;

/// Flattens the object into its entry function.
///
/// Each call site receives its own copy of the fully expanded callee, since a
/// static `ja` can only return to one place. The entry's own `exit`
/// instructions are kept.
pub fn inline_calls(object: &EbpfObject) -> Result<Program, PatchError> {
    let mut inliner = Inliner {
        object,
        stack: Vec::new(),
        expanded: HashMap::new(),
    };
    let body = inliner.expand(object.entry())?;
    Ok(Program::new(body)?)
}

struct Inliner<'a> {
    object: &'a EbpfObject,
    stack: Vec<String>,
    expanded: HashMap<String, Vec<Instruction>>,
}

impl Inliner<'_> {
    fn expand(&mut self, name: &str) -> Result<Vec<Instruction>, PatchError> {
        if let Some(pos) = self.stack.iter().position(|n| n == name) {
            let mut cycle = self.stack[pos..].to_vec();
            cycle.push(name.to_string());
            return Err(PatchError::RecursionUnsupported(cycle));
        }
        if self.stack.len() > MAX_INLINE_DEPTH {
            return Err(PatchError::DepthLimitExceeded {
                limit: MAX_INLINE_DEPTH,
            });
        }
        if let Some(done) = self.expanded.get(name) {
            return Ok(done.clone());
        }
        let function = self
            .object
            .function(name)
            .ok_or_else(|| PatchError::MissingEntry(name.to_string()))?;
        self.stack.push(name.to_string());

        let mut out: Vec<Instruction> = Vec::new();
        let mut out_slots = 0usize;
        // old slot -> new slot, defined at instruction starts and at the end
        let mut map = vec![None; function.slot_count() + 1];
        let mut jumps = Vec::new();
        for (slot, insn) in slot_positions(&function.instructions) {
            map[slot] = Some(out_slots);
            let callee = function
                .call_sites
                .iter()
                .find(|(at, _)| *at == slot)
                .map(|(_, callee)| callee.as_str());
            match callee {
                Some(callee) => {
                    let body = self.expand(callee)?;
                    let body = exits_to_fallthrough(body, name, slot)?;
                    out_slots += body.iter().map(Instruction::slots).sum::<usize>();
                    out.extend(body);
                }
                None if insn.is_local_call() => {
                    return Err(PatchError::UnresolvedCall {
                        function: name.to_string(),
                        slot,
                    });
                }
                None => {
                    if insn.is_jump() {
                        jumps.push((out.len(), slot));
                    }
                    out.push(*insn);
                    out_slots += insn.slots();
                }
            }
        }
        map[function.slot_count()] = Some(out_slots);

        for (index, old_slot) in jumps {
            let insn = out[index];
            let bad_target = || PatchError::InvalidJumpTarget {
                function: name.to_string(),
                slot: old_slot,
            };
            let target = old_slot as i64 + 1 + i64::from(insn.offset());
            let new_target = usize::try_from(target)
                .ok()
                .and_then(|t| map.get(t).copied().flatten())
                .ok_or_else(bad_target)?;
            let new_origin = map[old_slot].expect("jump sits at an instruction start") + 1;
            let offset = i16::try_from(new_target as i64 - new_origin as i64).map_err(|_| {
                PatchError::OffsetOverflow {
                    function: name.to_string(),
                    slot: old_slot,
                }
            })?;
            out[index] = insn.with_offset(offset);
        }

        self.stack.pop();
        self.expanded.insert(name.to_string(), out.clone());
        Ok(out)
    }
}

/// Rewrites every `exit` of a spliced callee into a `ja` to the slot after
/// the body; a trailing exit becomes `ja +0`.
fn exits_to_fallthrough(
    body: Vec<Instruction>,
    caller: &str,
    call_slot: usize,
) -> Result<Vec<Instruction>, PatchError> {
    let total: usize = body.iter().map(Instruction::slots).sum();
    let positions: Vec<usize> = slot_positions(&body).map(|(slot, _)| slot).collect();
    body.into_iter()
        .zip(positions)
        .map(|(insn, slot)| {
            if !insn.is_exit() {
                return Ok(insn);
            }
            let offset = i16::try_from(total - slot - 1).map_err(|_| PatchError::OffsetOverflow {
                function: caller.to_string(),
                slot: call_slot,
            })?;
            Ok(Instruction::ja(offset))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::vm::{run_patched, VmConfig};

    fn inline_text(text: &str) -> Result<Program, PatchError> {
        inline_calls(&EbpfObject::from_text(text)?)
    }

    #[test]
    fn leaf_call_becomes_fallthrough() {
        let program = inline_text(".func main\ncall f\nexit\n.func f\nmov64 r0, 7\nexit").unwrap();
        assert_eq!(program, assemble("mov64 r0, 7\nja +0\nexit").unwrap());
        let file = super::super::make_patched(program, 7, 0).unwrap();
        let (outcome, matched) = run_patched(&file, &VmConfig::default()).unwrap();
        assert_eq!(outcome.return_value, 7);
        assert!(matched);
    }

    #[test]
    fn duplicated_per_call_site() {
        let text = "
            .func main
                call f
                mov64 r6, r0
                call f
                add64 r0, r6
                exit
            .func f
                mov64 r0, 3
                exit
        ";
        let program = inline_text(text).unwrap();
        let movs = program
            .instructions()
            .iter()
            .filter(|i| i.to_string() == "mov64 r0, 0x3")
            .count();
        assert_eq!(movs, 2);
        assert_eq!(program.slot_count(), 5 + 2 * 2 - 2);
    }

    #[test]
    fn early_exit_jumps_past_body() {
        let text = "
            .func main
                mov64 r1, 0
                call f
                exit
            .func f
                mov64 r0, 1
                jeq r1, 0, out
                mov64 r0, 2
                exit
            out:
                lddw r2, 0x100000000
                exit
        ";
        let program = inline_text(text).unwrap();
        // body slots: mov, jeq, mov, ja(+3), lddw(2), ja(+0)
        assert_eq!(program.instructions()[4], Instruction::ja(3));
        assert_eq!(program.instructions()[6], Instruction::ja(0));
        let file = super::super::make_patched(program, 1, 0).unwrap();
        assert_eq!(run_patched(&file, &VmConfig::default()).unwrap().0.return_value, 1);
    }

    #[test]
    fn caller_jumps_refixed() {
        let text = "
            .func main
                mov64 r0, 0
                jeq r3, 1, skip
                call f
            skip:
                add64 r0, 1
                jne r0, 0, +0
                ja back
            back:
                exit
            .func f
                mov64 r0, 10
                mov64 r0, 20
                exit
        ";
        let program = inline_text(text).unwrap();
        assert_eq!(program.instructions()[1].offset(), 3);
        assert_eq!(program.instructions()[6].offset(), 0);
    }

    #[test]
    fn backward_jump_over_call() {
        let text = "
            .func main
                mov64 r0, 0
                mov64 r6, 3
            top:
                call f
                sub64 r6, 1
                jne r6, 0, top
                exit
            .func f
                add64 r0, 5
                exit
        ";
        let program = inline_text(text).unwrap();
        let file = super::super::make_patched(program, 15, 0).unwrap();
        let (outcome, matched) = run_patched(&file, &VmConfig::default()).unwrap();
        assert_eq!(outcome.return_value, 15);
        assert!(matched);
    }

    #[test]
    fn recursion_rejected() {
        let err = inline_text(".func f\ncall g\nexit\n.func g\ncall f\nexit").unwrap_err();
        assert_eq!(
            err,
            PatchError::RecursionUnsupported(vec!["f".into(), "g".into(), "f".into()])
        );
        assert!(matches!(
            inline_text(".func f\ncall f\nexit"),
            Err(PatchError::RecursionUnsupported(_))
        ));
    }

    #[test]
    fn single_function_unchanged() {
        let text = ".func main\nmov64 r0, 1\njeq r0, 1, +1\nmov64 r0, 2\nexit";
        let object = EbpfObject::from_text(text).unwrap();
        let program = inline_calls(&object).unwrap();
        assert_eq!(program.instructions(), object.functions()[0].instructions.as_slice());
    }

    #[test]
    fn depth_limit() {
        let mut text = String::new();
        for i in 0..40 {
            text.push_str(&format!(".func f{i}\ncall f{}\nexit\n", i + 1));
        }
        text.push_str(".func f40\nmov64 r0, 1\nexit\n");
        assert_eq!(
            inline_text(&text),
            Err(PatchError::DepthLimitExceeded { limit: MAX_INLINE_DEPTH })
        );
        let mut ok = String::new();
        for i in 0..MAX_INLINE_DEPTH {
            ok.push_str(&format!(".func f{i}\ncall f{}\nexit\n", i + 1));
        }
        ok.push_str(&format!(".func f{MAX_INLINE_DEPTH}\nmov64 r0, 1\nexit\n"));
        assert!(inline_text(&ok).is_ok());
    }

    #[test]
    fn offset_overflow() {
        let mut text = String::from(".func main\nmov64 r0, 0\njeq r3, 0, end\ncall f\nend:\nexit\n.func f\nmov64 r0, 0\njeq r3, 1, +0\n");
        for _ in 0..40_000 {
            text.push_str("add64 r0, 1\n");
        }
        text.push_str("exit\n");
        assert!(matches!(
            inline_text(&text),
            Err(PatchError::OffsetOverflow { .. })
        ));
    }
}
