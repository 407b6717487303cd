// SPDX-License-Identifier: Apache-2.0

//! WebAssembly adapter: the `addTwo` module, then the summing program with
//! its input passed through the guest's exported allocator.
//!
//! ```text
//! cargo run --example wasm_engine
//! ```

use offload::corpus::{default_corpus_dir, find_program};
use offload::wasm::{invoke_entry, pass_buffer, read_buffer, Engine, ExportNames, WasmBinary, WasmiEngine};

const ADD_TWO: &str = r#"(module
  (func $addTwo (param i32 i32) (result i32)
    local.get 0
    local.get 1
    i32.add)
  (export "addTwo" (func $addTwo)))"#;

fn main() -> anyhow::Result<()> {
    let engine = WasmiEngine::new();
    let binary = WasmBinary::from_wat(ADD_TWO, "addTwo")?;
    let mut instance = engine.instantiate(&binary, &ExportNames::entry("addTwo"))?;
    println!("addTwo(1, 2) = {}", invoke_entry(instance.as_mut(), &[1, 2])?);

    let spec = find_program(&default_corpus_dir(), "summing")?;
    let binary = WasmBinary::load(&spec.wasm_path())?;
    let names = ExportNames::entry(spec.wasm_entry.clone()).with_allocator(spec.allocator.clone());
    let mut instance = WasmiEngine::new().with_fuel(10_000_000).instantiate(&binary, &names)?;
    let input = spec.input_bytes();
    let buffer = pass_buffer(instance.as_mut(), &input)?;
    assert_eq!(read_buffer(instance.as_ref(), buffer)?, input);
    let sum = invoke_entry(instance.as_mut(), &[buffer.guest_ptr, spec.input_len()])?;
    println!(
        "summing: {} bytes at guest {:#x}, result {sum} (expected {}), fuel {:?}",
        buffer.len,
        buffer.guest_ptr,
        spec.expected,
        instance.fuel_consumed()
    );
    Ok(())
}
