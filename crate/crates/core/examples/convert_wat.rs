// SPDX-License-Identifier: Apache-2.0

//! Converts WebAssembly text files to binary modules next to them.
//!
//! ```text
//! cargo run --example convert_wat -- corpus/*/*.wat
//! ```
//!
//! Without arguments every `.wat` fixture of the corpus is regenerated.

use std::path::PathBuf;

use anyhow::Context;
use offload::corpus::{default_corpus_dir, load_corpus};
use offload::wasm::WasmBinary;

fn main() -> anyhow::Result<()> {
    let mut inputs: Vec<PathBuf> = std::env::args_os().skip(1).map(PathBuf::from).collect();
    if inputs.is_empty() {
        inputs = load_corpus(&default_corpus_dir())?
            .iter()
            .map(|spec| spec.wat_path())
            .collect();
    }
    for input in inputs {
        let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
        let binary = WasmBinary::from_wat(&text, input.display().to_string())?;
        let output = input.with_extension("wasm");
        std::fs::write(&output, binary.bytes())?;
        println!("{} -> {} ({} bytes)", input.display(), output.display(), binary.bytes().len());
    }
    Ok(())
}
