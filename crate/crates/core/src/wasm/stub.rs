// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use super::{checked_range, Engine, ExportNames, GuestInstance, WasmBinary, WasmError};

/// Behaviour of one stub export: gets the instance memory and the arguments.
pub type StubFn = Arc<dyn Fn(&mut Vec<u8>, &[u64]) -> Result<u64, WasmError> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StubEvent {
    Instantiated { source: String },
    Called { name: String, args: Vec<u64> },
    MemoryRead { addr: u64, len: u64 },
    MemoryWrite { addr: u64, len: u64 },
}

/// Scripted engine for tests. Exports are closures over a plain byte vector;
/// every instantiation, call and memory access is logged.
#[derive(Clone)]
pub struct StubEngine {
    memory_size: usize,
    exports: BTreeMap<String, StubFn>,
    log: Arc<Mutex<Vec<StubEvent>>>,
}

/// Heap cursor of the stub bump allocator lives in the first 8 bytes.
const HEAP_CURSOR: usize = 0;
const HEAP_START: u64 = 16;

impl StubEngine {
    pub fn new(memory_size: usize) -> Self {
        StubEngine {
            memory_size,
            exports: BTreeMap::new(),
            log: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn with_export<F>(mut self, name: &str, f: F) -> Self
    where
        F: Fn(&mut Vec<u8>, &[u64]) -> Result<u64, WasmError> + Send + Sync + 'static,
    {
        self.exports.insert(name.to_string(), Arc::new(f));
        self
    }

    /// Export that always returns `value`.
    pub fn with_canned(self, name: &str, value: u64) -> Self {
        self.with_export(name, move |_, _| Ok(value))
    }

    /// 8-byte aligned bump allocator; returns 0 when memory runs out.
    pub fn with_bump_allocator(self, name: &str) -> Self {
        self.with_export(name, |memory, args| {
            let len = args.first().copied().unwrap_or(0);
            let cursor_bytes: [u8; 8] = memory[HEAP_CURSOR..HEAP_CURSOR + 8].try_into().unwrap();
            let cursor = u64::from_le_bytes(cursor_bytes).max(HEAP_START);
            let Some(end) = cursor.checked_add(len).map(|end| (end + 7) & !7) else {
                return Ok(0);
            };
            if end > memory.len() as u64 {
                return Ok(0);
            }
            memory[HEAP_CURSOR..HEAP_CURSOR + 8].copy_from_slice(&end.to_le_bytes());
            Ok(cursor)
        })
    }

    pub fn events(&self) -> Vec<StubEvent> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear_events(&self) {
        self.log.lock().unwrap().clear();
    }
}

impl Engine for StubEngine {
    fn name(&self) -> &str {
        "stub"
    }

    fn instantiate(
        &self,
        binary: &WasmBinary,
        exports: &ExportNames,
    ) -> Result<Box<dyn GuestInstance>, WasmError> {
        if !self.exports.contains_key(&exports.entry) {
            return Err(WasmError::MissingExport(exports.entry.clone()));
        }
        self.log.lock().unwrap().push(StubEvent::Instantiated {
            source: binary.source().to_string(),
        });
        Ok(Box::new(StubInstance {
            memory: vec![0; self.memory_size.max(HEAP_CURSOR + 8)],
            exports: self.exports.clone(),
            names: exports.clone(),
            log: Arc::clone(&self.log),
        }))
    }
}

struct StubInstance {
    memory: Vec<u8>,
    exports: BTreeMap<String, StubFn>,
    names: ExportNames,
    log: Arc<Mutex<Vec<StubEvent>>>,
}

impl GuestInstance for StubInstance {
    fn exports(&self) -> &ExportNames {
        &self.names
    }

    fn has_export(&self, name: &str) -> bool {
        self.exports.contains_key(name)
    }

    fn call(&mut self, name: &str, args: &[u64]) -> Result<u64, WasmError> {
        let f = self
            .exports
            .get(name)
            .cloned()
            .ok_or_else(|| WasmError::MissingExport(name.to_string()))?;
        self.log.lock().unwrap().push(StubEvent::Called {
            name: name.to_string(),
            args: args.to_vec(),
        });
        f(&mut self.memory, args)
    }

    fn memory_read(&self, addr: u64, len: u64) -> Result<Vec<u8>, WasmError> {
        self.log.lock().unwrap().push(StubEvent::MemoryRead { addr, len });
        let range = checked_range(addr, len, self.memory.len())
            .ok_or(WasmError::OutOfBoundsGuestRead { addr, len })?;
        Ok(self.memory[range].to_vec())
    }

    fn memory_write(&mut self, addr: u64, data: &[u8]) -> Result<(), WasmError> {
        let len = data.len() as u64;
        self.log.lock().unwrap().push(StubEvent::MemoryWrite { addr, len });
        let range = checked_range(addr, len, self.memory.len())
            .ok_or(WasmError::OutOfGuestMemory { addr, len })?;
        self.memory[range].copy_from_slice(data);
        Ok(())
    }
}
