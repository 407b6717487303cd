// SPDX-License-Identifier: Apache-2.0

//! Verifier diagnostics under the default and strict policies.
//!
//! ```text
//! cargo run --example verify
//! ```

use offload::asm::assemble;
use offload::vm::{verify, HelperRegistry, VerifierPolicy};

const CASES: &[(&str, &str)] = &[
    ("fine", "mov64 r0, 1\nexit"),
    ("jump out of bounds", "mov64 r0, 1\nja +100\nexit"),
    ("unknown helper", "call 7\nexit"),
    ("constant division by zero", "mov64 r0, 1\ndiv64 r0, 0\nexit"),
    ("r1 overwritten before use", "mov64 r1, 0\nmov64 r0, 1\nexit"),
    ("loop without exit", "top: add64 r0, 1\nja top\nexit"),
];

fn main() -> anyhow::Result<()> {
    let mut helpers = HelperRegistry::default();
    helpers.register(1, |a, b, _, _, _| a.wrapping_add(b));
    for (label, text) in CASES {
        let program = assemble(text)?;
        for (policy_name, policy) in [("default", VerifierPolicy::default()), ("strict", VerifierPolicy::strict())] {
            let report = verify(&program, &policy, &helpers);
            println!("{label} [{policy_name}]: {}", if report.ok { "accepted" } else { "rejected" });
            for diagnostic in &report.diagnostics {
                println!("    {diagnostic}");
            }
        }
    }
    Ok(())
}
