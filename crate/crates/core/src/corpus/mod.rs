// SPDX-License-Identifier: Apache-2.0

//! Reference oracles and the checked-in benchmark corpus.
//!
//! Every program lives in `corpus/<name>/` next to the workspace root:
//!
//! ```text
//! corpus/summing/
//!     manifest.toml   expected value, memory size, oracle id and arguments
//!     summing.pbpf    patched eBPF program
//!     summing.wat     WebAssembly text, the source of summing.wasm
//!     summing.wasm
//!     summing.c       native baseline, `summing_entry(mem, mem_len, a, b)`
//! ```
//!
//! Programs that read input get it staged at the start of static memory
//! (eBPF, native) or passed through the guest allocator (WASM), in which case
//! the WASM entry is called as `entry(ptr, element_count, args...)`.

mod oracle;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{
    oracle_dummy, oracle_fib, oracle_multifact, oracle_prime_count, oracle_sum, OracleError,
    OracleId, FIB_MAX_N,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest `{path}`: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("program `{program}` is missing its {what} fixture at `{path}`")]
    MissingFixture {
        program: String,
        what: &'static str,
        path: PathBuf,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    name: String,
    expected: u64,
    static_mem_size: u64,
    oracle: OracleId,
    #[serde(default)]
    oracle_args: Vec<u64>,
    #[serde(default)]
    args: Vec<u64>,
    #[serde(default)]
    input_u64_range: Option<[u64; 2]>,
    #[serde(default)]
    wasm_entry: Option<String>,
    #[serde(default)]
    native_entry: Option<String>,
    #[serde(default)]
    allocator: Option<String>,
}

/// One benchmark program with its fixtures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProgramSpec {
    pub name: String,
    pub dir: PathBuf,
    pub expected: u64,
    pub static_mem_size: u64,
    pub oracle: OracleId,
    pub oracle_args: Vec<u64>,
    /// Scalar arguments: r3.. for eBPF, `a`/`b` for native, trailing
    /// parameters for WASM.
    pub args: Vec<u64>,
    /// Inclusive range of u64 values staged as input.
    pub input_u64_range: Option<(u64, u64)>,
    pub wasm_entry: String,
    pub native_entry: String,
    pub allocator: String,
}

impl ProgramSpec {
    pub fn from_manifest(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: Manifest = toml::from_str(&text).map_err(|err| CorpusError::Manifest {
            path: path.to_path_buf(),
            message: err.to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(ProgramSpec {
            wasm_entry: manifest.wasm_entry.unwrap_or_else(|| manifest.name.clone()),
            native_entry: manifest
                .native_entry
                .unwrap_or_else(|| format!("{}_entry", manifest.name)),
            allocator: manifest
                .allocator
                .unwrap_or_else(|| crate::wasm::DEFAULT_ALLOCATOR.to_string()),
            name: manifest.name,
            dir,
            expected: manifest.expected,
            static_mem_size: manifest.static_mem_size,
            oracle: manifest.oracle,
            oracle_args: manifest.oracle_args,
            args: manifest.args,
            input_u64_range: manifest.input_u64_range.map(|[a, b]| (a, b)),
        })
    }

    fn fixture(&self, extension: &str) -> PathBuf {
        self.dir.join(format!("{}.{extension}", self.name))
    }

    pub fn pbpf_path(&self) -> PathBuf {
        self.fixture("pbpf")
    }

    pub fn wat_path(&self) -> PathBuf {
        self.fixture("wat")
    }

    pub fn wasm_path(&self) -> PathBuf {
        self.fixture("wasm")
    }

    pub fn c_path(&self) -> PathBuf {
        self.fixture("c")
    }

    /// Checks that the patched, text and binary WASM fixtures exist.
    pub fn check_fixtures(&self) -> Result<(), CorpusError> {
        for (what, path) in [
            ("patched eBPF", self.pbpf_path()),
            ("WebAssembly text", self.wat_path()),
            ("WebAssembly binary", self.wasm_path()),
            ("C source", self.c_path()),
        ] {
            if !path.is_file() {
                return Err(CorpusError::MissingFixture {
                    program: self.name.clone(),
                    what,
                    path,
                });
            }
        }
        Ok(())
    }

    /// Input bytes to stage, empty when the program takes none.
    pub fn input_bytes(&self) -> Vec<u8> {
        match self.input_u64_range {
            Some((start, end)) => (start..=end).flat_map(u64::to_le_bytes).collect(),
            None => Vec::new(),
        }
    }

    pub fn input_len(&self) -> u64 {
        self.input_u64_range
            .map_or(0, |(start, end)| end.saturating_sub(start) + 1)
    }

    pub fn oracle_value(&self) -> Result<u64, OracleError> {
        self.oracle.evaluate(&self.oracle_args, self.static_mem_size)
    }

    /// Native memory buffer: zeroed `static_mem_size` bytes with the input
    /// at the front.
    pub fn native_memory(&self) -> Vec<u8> {
        let input = self.input_bytes();
        let mut memory = vec![0; (self.static_mem_size as usize).max(input.len())];
        memory[..input.len()].copy_from_slice(&input);
        memory
    }
}

/// The repository corpus directory, overridable with `OFFLOAD_CORPUS`.
pub fn default_corpus_dir() -> PathBuf {
    std::env::var_os("OFFLOAD_CORPUS")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus"))
}

/// Loads every `*/manifest.toml` under `dir`, sorted by name.
pub fn load_corpus(dir: &Path) -> Result<Vec<ProgramSpec>, CorpusError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut programs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let manifest = entry.path().join("manifest.toml");
        if manifest.is_file() {
            programs.push(ProgramSpec::from_manifest(&manifest)?);
        }
    }
    programs.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(programs)
}

pub fn find_program(dir: &Path, name: &str) -> Result<ProgramSpec, CorpusError> {
    ProgramSpec::from_manifest(&dir.join(name).join("manifest.toml"))
}
