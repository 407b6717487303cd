// SPDX-License-Identifier: Apache-2.0

//! Measures the corpus under every engine and prints the relative table.
//!
//! ```text
//! cargo build --release --bin offload
//! cargo run --release --example bench -- [iterations] [runner]
//! ```
//!
//! The runner defaults to the `offload` binary next to this example's build
//! directory.

use std::path::PathBuf;

use offload::harness::{emit_report, run_bench, write_outputs, BenchConfig, ReportFormat, Runner};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().map(|n| n.parse()).transpose()?.unwrap_or(3);
    let runner = match args.next() {
        Some(path) => PathBuf::from(path),
        None => {
            let exe = std::env::current_exe()?;
            let profile_dir = exe.parent().and_then(|p| p.parent()).expect("examples live under the profile dir");
            profile_dir.join("offload")
        }
    };
    anyhow::ensure!(runner.is_file(), "runner {} not built; run `cargo build --bin offload`", runner.display());

    let config = BenchConfig {
        iterations,
        out_dir: std::env::temp_dir().join("offload-bench"),
        ..BenchConfig::default()
    };
    let outcome = run_bench(&config, &Runner::new(runner))?;
    print!("{}", emit_report(&outcome.report, ReportFormat::Markdown));
    for path in write_outputs(&config, &outcome)? {
        println!("wrote {}", path.display());
    }
    for failure in &outcome.failures {
        println!("{}/{}: {}", failure.program, failure.engine, failure.error);
    }
    anyhow::ensure!(outcome.gates_passed, "correctness gate failed");
    Ok(())
}
