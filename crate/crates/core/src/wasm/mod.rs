// SPDX-License-Identifier: Apache-2.0

//! Engine-neutral WebAssembly adapter.
//!
//! An [`Engine`] turns a [`WasmBinary`] into a [`GuestInstance`]; all
//! compilation happens in [`Engine::instantiate`] so that the first call only
//! pays for guest execution. Data reaches the guest through the module's own
//! exported allocator (`malloc` unless configured otherwise): the host calls
//! it with the buffer length, then copies the bytes to the returned address.
//!
//! Two bindings ship with the crate: [`StubEngine`], a scripted fake for
//! tests, and `WasmiEngine` (feature `wasmi`, on by default).

mod stub;
#[cfg(feature = "wasmi")]
mod wasmi_engine;

use std::fmt;
use std::path::Path;

use thiserror::Error;

pub use stub::{StubEngine, StubEvent, StubFn};
#[cfg(feature = "wasmi")]
pub use wasmi_engine::WasmiEngine;

/// `\0asm`
pub const WASM_MAGIC: [u8; 4] = *b"\0asm";

pub const DEFAULT_ALLOCATOR: &str = "malloc";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WasmError {
    #[error("invalid module: {0}")]
    InvalidModule(String),
    #[error("missing export `{0}`")]
    MissingExport(String),
    #[error("allocator returned a null pointer for {len} bytes")]
    AllocatorReturnedNull { len: u64 },
    #[error("{len} bytes at guest address {addr:#x} exceed linear memory")]
    OutOfGuestMemory { addr: u64, len: u64 },
    #[error("read of {len} bytes at guest address {addr:#x} exceeds linear memory")]
    OutOfBoundsGuestRead { addr: u64, len: u64 },
    #[error("guest trapped: {0}")]
    GuestTrap(String),
    #[error("type mismatch calling `{name}`: {message}")]
    TypeMismatch { name: String, message: String },
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

/// Module bytes in binary format plus a note on where they came from.
#[derive(Clone, PartialEq, Eq)]
pub struct WasmBinary {
    bytes: Vec<u8>,
    source: String,
}

impl fmt::Debug for WasmBinary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WasmBinary")
            .field("len", &self.bytes.len())
            .field("source", &self.source)
            .finish()
    }
}

impl WasmBinary {
    pub fn from_bytes(bytes: Vec<u8>, source: impl Into<String>) -> Result<Self, WasmError> {
        if bytes.len() < 8 || bytes[..4] != WASM_MAGIC {
            return Err(WasmError::InvalidModule("missing module magic".into()));
        }
        Ok(WasmBinary {
            bytes,
            source: source.into(),
        })
    }

    /// Converts text format to binary.
    pub fn from_wat(text: &str, source: impl Into<String>) -> Result<Self, WasmError> {
        let bytes = wat::parse_str(text).map_err(|err| WasmError::InvalidModule(err.to_string()))?;
        Self::from_bytes(bytes, source)
    }

    /// Reads a `.wasm` or `.wat` file; anything without the binary magic is
    /// parsed as text.
    pub fn load(path: &Path) -> Result<Self, WasmError> {
        let bytes = std::fs::read(path).map_err(|err| WasmError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        })?;
        let source = path.display().to_string();
        if bytes.starts_with(&WASM_MAGIC) {
            Self::from_bytes(bytes, source)
        } else {
            let text = String::from_utf8(bytes)
                .map_err(|_| WasmError::InvalidModule("neither binary nor UTF-8 text".into()))?;
            Self::from_wat(&text, source)
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Export names an instance must provide. The entry is resolved during
/// instantiation; the allocator only when a buffer is first passed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportNames {
    pub entry: String,
    pub allocator: String,
}

impl ExportNames {
    pub fn entry(name: impl Into<String>) -> Self {
        ExportNames {
            entry: name.into(),
            allocator: DEFAULT_ALLOCATOR.to_string(),
        }
    }

    pub fn with_allocator(mut self, name: impl Into<String>) -> Self {
        self.allocator = name.into();
        self
    }
}

/// A guest region obtained from [`pass_buffer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuestBuffer {
    pub guest_ptr: u64,
    pub len: u64,
}

pub trait Engine {
    fn name(&self) -> &str;

    /// Compiles and instantiates the module. Must not run the entry function.
    fn instantiate(
        &self,
        binary: &WasmBinary,
        exports: &ExportNames,
    ) -> Result<Box<dyn GuestInstance>, WasmError>;
}

/// A live module instance. Single-threaded, but may move between threads.
pub trait GuestInstance: Send {
    fn exports(&self) -> &ExportNames;

    fn has_export(&self, name: &str) -> bool;

    /// Calls an exported function with integer arguments; the result is
    /// widened to u64 (`i32` results are zero-extended).
    fn call(&mut self, name: &str, args: &[u64]) -> Result<u64, WasmError>;

    fn memory_read(&self, addr: u64, len: u64) -> Result<Vec<u8>, WasmError>;

    fn memory_write(&mut self, addr: u64, data: &[u8]) -> Result<(), WasmError>;

    /// Fuel consumed so far, when the runtime meters it.
    fn fuel_consumed(&self) -> Option<u64> {
        None
    }
}

pub fn invoke_entry(instance: &mut dyn GuestInstance, args: &[u64]) -> Result<u64, WasmError> {
    let entry = instance.exports().entry.clone();
    instance.call(&entry, args)
}

/// Allocates `data.len()` bytes with the guest allocator and copies `data`
/// in. The allocator is consulted even for empty buffers; a null result is
/// only an error when bytes were requested.
pub fn pass_buffer(instance: &mut dyn GuestInstance, data: &[u8]) -> Result<GuestBuffer, WasmError> {
    let allocator = instance.exports().allocator.clone();
    if !instance.has_export(&allocator) {
        return Err(WasmError::MissingExport(allocator));
    }
    let len = data.len() as u64;
    let guest_ptr = instance.call(&allocator, &[len])?;
    if guest_ptr == 0 && len > 0 {
        return Err(WasmError::AllocatorReturnedNull { len });
    }
    instance
        .memory_write(guest_ptr, data)
        .map_err(|_| WasmError::OutOfGuestMemory { addr: guest_ptr, len })?;
    Ok(GuestBuffer { guest_ptr, len })
}

pub fn read_buffer(instance: &dyn GuestInstance, buffer: GuestBuffer) -> Result<Vec<u8>, WasmError> {
    instance
        .memory_read(buffer.guest_ptr, buffer.len)
        .map_err(|_| WasmError::OutOfBoundsGuestRead {
            addr: buffer.guest_ptr,
            len: buffer.len,
        })
}

pub(crate) fn checked_range(addr: u64, len: u64, size: usize) -> Option<std::ops::Range<usize>> {
    let end = addr.checked_add(len)?;
    if end > size as u64 {
        return None;
    }
    Some(addr as usize..end as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_magic() {
        assert!(matches!(
            WasmBinary::from_bytes(Vec::new(), "empty"),
            Err(WasmError::InvalidModule(_))
        ));
        let module = WasmBinary::from_wat("(module)", "inline").unwrap();
        assert_eq!(module.bytes(), b"\0asm\x01\0\0\0");
        assert!(matches!(
            WasmBinary::from_wat("(module", "broken"),
            Err(WasmError::InvalidModule(_))
        ));
    }

    #[test]
    fn ranges() {
        assert_eq!(checked_range(0, 0, 0), Some(0..0));
        assert_eq!(checked_range(4, 4, 8), Some(4..8));
        assert_eq!(checked_range(5, 4, 8), None);
        assert_eq!(checked_range(u64::MAX, 2, 8), None);
    }
}
