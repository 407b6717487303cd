// SPDX-License-Identifier: Apache-2.0

//! Native baseline: shared libraries built from the corpus C sources and
//! loaded through the dynamic loader.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use super::HarnessError;
use crate::corpus::ProgramSpec;

/// `uint64_t <name>_entry(uint8_t *mem, uint64_t mem_len, uint64_t a, uint64_t b)`
pub type NativeEntry = unsafe extern "C" fn(*mut u8, u64, u64, u64) -> u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NativeRun {
    pub return_value: u64,
    pub startup_ms: f64,
    pub exec_ms: f64,
}

/// Loads `library`, resolves `symbol` and calls it once. Startup covers the
/// load and the symbol lookup.
pub fn native_engine_run(
    library: &Path,
    symbol: &str,
    memory: &mut [u8],
    args: [u64; 2],
) -> Result<NativeRun, HarnessError> {
    let t0 = Instant::now();
    // SAFETY: loading runs the library's initializers; corpus libraries are
    // plain C without constructors.
    let lib = unsafe { libloading::Library::new(library) }
        .map_err(|err| HarnessError::LoadFailure(format!("{}: {err}", library.display())))?;
    // SAFETY: the corpus contract fixes the entry signature to NativeEntry.
    let entry: libloading::Symbol<NativeEntry> = unsafe { lib.get(symbol.as_bytes()) }
        .map_err(|_| HarnessError::SymbolNotFound(symbol.to_string()))?;
    let startup_ms = ms(t0);
    let t1 = Instant::now();
    // SAFETY: `memory` is valid for `memory.len()` bytes for the whole call.
    let return_value = unsafe { entry(memory.as_mut_ptr(), memory.len() as u64, args[0], args[1]) };
    let exec_ms = ms(t1);
    Ok(NativeRun {
        return_value,
        startup_ms,
        exec_ms,
    })
}

pub(crate) fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// C compiler used for native fixtures: `$CC`, else `cc`.
pub fn c_compiler() -> String {
    std::env::var("CC").unwrap_or_else(|_| "cc".to_string())
}

/// Compiles the program's C source into `out_dir/lib<name>.so`.
pub fn build_native(spec: &ProgramSpec, out_dir: &Path) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(out_dir).map_err(|err| HarnessError::Io(err.to_string()))?;
    let output = out_dir.join(format!("lib{}.so", spec.name));
    let compiler = c_compiler();
    let result = Command::new(&compiler)
        .args(["-O2", "-shared", "-fPIC", "-o"])
        .arg(&output)
        .arg(spec.c_path())
        .output()
        .map_err(|err| HarnessError::MissingToolchain(format!("{compiler}: {err}")))?;
    if !result.status.success() {
        return Err(HarnessError::CompileError {
            program: spec.name.clone(),
            stderr: String::from_utf8_lossy(&result.stderr).into_owned(),
        });
    }
    Ok(output)
}
