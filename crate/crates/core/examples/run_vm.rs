// SPDX-License-Identifier: Apache-2.0

//! Runs corpus programs in the eBPF VM and shows fuel metering.
//!
//! ```text
//! cargo run --example run_vm [program ...]
//! ```

use offload::asm::{assemble, parse_patched};
use offload::corpus::{default_corpus_dir, load_corpus};
use offload::vm::{instantiate, instantiate_program, VmConfig, VmError};

fn main() -> anyhow::Result<()> {
    let wanted: Vec<String> = std::env::args().skip(1).collect();
    for spec in load_corpus(&default_corpus_dir())? {
        if !wanted.is_empty() && !wanted.contains(&spec.name) {
            continue;
        }
        let file = parse_patched(&std::fs::read_to_string(spec.pbpf_path())?)?;
        let mut vm = instantiate(&file, &VmConfig::default())?;
        vm.write_static_mem(0, &spec.input_bytes())?;
        vm.set_args(&spec.args)?;
        let outcome = vm.execute()?;
        println!(
            "{:<13} -> {:>14}  expected {:>14}  {:>9} instructions",
            spec.name, outcome.return_value, file.expected_output, outcome.instructions_executed
        );
    }

    let spin = assemble("ja -1\nexit")?;
    let vm = instantiate_program(&spin, 0, &VmConfig::default().with_fuel(1_000_000))?;
    match vm.execute() {
        Err(VmError::FuelExhausted { limit }) => println!("spin loop stopped after {limit} instructions"),
        other => anyhow::bail!("unexpected: {other:?}"),
    }

    let stray = assemble("lddw r2, 0x1000\nldxdw r0, [r2]\nexit")?;
    let result = instantiate_program(&stray, 0, &VmConfig::default())?.execute();
    println!("stray load: {}", result.unwrap_err());
    Ok(())
}
