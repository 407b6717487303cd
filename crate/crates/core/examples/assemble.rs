// SPDX-License-Identifier: Apache-2.0

//! Assembles a small program, prints its bytecode and disassembles it back.
//!
//! ```text
//! cargo run --example assemble
//! ```

use offload::asm::{assemble, disassemble, format_instruction};
use offload::isa::{decode_program, encode_program};

const SOURCE: &str = "\
    mov64 r0, 0
    mov64 r6, 10
loop:
    add64 r0, r6
    sub64 r6, 1
    jne r6, 0, loop
    lddw r7, 0x1122334455667788
    be16 r7
    stxdw [r10 - 8], r7
    exit
";

fn main() -> anyhow::Result<()> {
    let program = assemble(SOURCE)?;
    let bytes = encode_program(&program);
    println!("{} instructions, {} slots, {} bytes", program.instructions().len(), program.slot_count(), bytes.len());
    for (slot, insn) in program.slots() {
        let raw: Vec<String> = bytes[slot * 8..(slot + insn.slots()) * 8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        println!("{slot:3}  {:<48} {}", raw.join(" "), format_instruction(insn));
    }

    // Labels become numeric displacements; the text round-trips from there.
    let text = disassemble(&decode_program(&bytes)?);
    println!("\n{text}");
    assert_eq!(encode_program(&assemble(&text)?), bytes);
    Ok(())
}
