// SPDX-License-Identifier: Apache-2.0

//! Turns a relocatable multi-function object into a patched program and runs
//! it.
//!
//! ```text
//! cargo run --example patch_object [object.o] [args...]
//! ```
//!
//! The default object was built from `tests/fixtures/two_calls.c` with
//! `clang -target bpfel -O2 -c`.

use std::path::PathBuf;

use offload::asm::{parse_patched, serialize_patched};
use offload::patcher::{inline_calls, load_object, make_patched};
use offload::vm::{instantiate, VmConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_calls.bpf.o"));
    let inputs: Vec<u64> = args.map(|a| a.parse()).collect::<Result<_, _>>()?;
    let inputs = if inputs.is_empty() { vec![3, 5] } else { inputs };

    let object = load_object(&std::fs::read(&path)?)?;
    println!("entry `{}`, {} functions:\n{}", object.entry(), object.functions().len(), object.to_module().to_text());

    let program = inline_calls(&object)?;
    // Find the expected value by running once, then write the file with it.
    let mut probe = instantiate(&make_patched(program.clone(), 0, 0)?, &VmConfig::default())?;
    probe.set_args(&inputs)?;
    let value = probe.execute()?.return_value;
    let text = serialize_patched(&make_patched(program, value, 0)?);
    println!("patched program for args {inputs:?}:\n{text}");

    let mut vm = instantiate(&parse_patched(&text)?, &VmConfig::default())?;
    vm.set_args(&inputs)?;
    println!("returns {}", vm.execute()?.return_value);
    Ok(())
}
