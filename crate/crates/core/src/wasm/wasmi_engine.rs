// SPDX-License-Identifier: Apache-2.0

use wasmi::{CompilationMode, Config, Instance, Linker, Memory, Module, Store, Val, ValType};

use super::{checked_range, Engine, ExportNames, GuestInstance, WasmBinary, WasmError};

/// Production binding backed by the `wasmi` interpreter. Modules are
/// translated eagerly so instantiation carries the whole setup cost.
#[derive(Debug, Clone, Default)]
pub struct WasmiEngine {
    fuel: Option<u64>,
}

impl WasmiEngine {
    pub fn new() -> Self {
        WasmiEngine::default()
    }

    /// Meters guest execution; running out traps the call.
    pub fn with_fuel(mut self, fuel: u64) -> Self {
        self.fuel = Some(fuel);
        self
    }
}

impl Engine for WasmiEngine {
    fn name(&self) -> &str {
        "wasmi"
    }

    fn instantiate(
        &self,
        binary: &WasmBinary,
        exports: &ExportNames,
    ) -> Result<Box<dyn GuestInstance>, WasmError> {
        let mut config = Config::default();
        config.compilation_mode(CompilationMode::Eager);
        config.consume_fuel(self.fuel.is_some());
        let engine = wasmi::Engine::new(&config);
        let module = Module::new(&engine, binary.bytes())
            .map_err(|err| WasmError::InvalidModule(err.to_string()))?;
        let mut store = Store::new(&engine, ());
        if let Some(fuel) = self.fuel {
            store
                .set_fuel(fuel)
                .map_err(|err| WasmError::InvalidModule(err.to_string()))?;
        }
        let linker = Linker::<()>::new(&engine);
        let instance = linker
            .instantiate_and_start(&mut store, &module)
            .map_err(|err| WasmError::InvalidModule(err.to_string()))?;
        if instance.get_func(&store, &exports.entry).is_none() {
            return Err(WasmError::MissingExport(exports.entry.clone()));
        }
        let memory = instance.get_memory(&store, "memory");
        Ok(Box::new(WasmiInstance {
            store,
            instance,
            memory,
            names: exports.clone(),
            fuel: self.fuel,
        }))
    }
}

struct WasmiInstance {
    store: Store<()>,
    instance: Instance,
    memory: Option<Memory>,
    names: ExportNames,
    fuel: Option<u64>,
}

impl WasmiInstance {
    fn memory_size(&self) -> usize {
        self.memory.map_or(0, |m| m.data_size(&self.store))
    }
}

impl GuestInstance for WasmiInstance {
    fn exports(&self) -> &ExportNames {
        &self.names
    }

    fn has_export(&self, name: &str) -> bool {
        self.instance.get_func(&self.store, name).is_some()
    }

    fn call(&mut self, name: &str, args: &[u64]) -> Result<u64, WasmError> {
        let func = self
            .instance
            .get_func(&self.store, name)
            .ok_or_else(|| WasmError::MissingExport(name.to_string()))?;
        let ty = func.ty(&self.store);
        let mismatch = |message: String| WasmError::TypeMismatch {
            name: name.to_string(),
            message,
        };
        if ty.params().len() != args.len() {
            return Err(mismatch(format!(
                "expected {} arguments, got {}",
                ty.params().len(),
                args.len()
            )));
        }
        let inputs = ty
            .params()
            .iter()
            .zip(args)
            .map(|(kind, &arg)| match kind {
                ValType::I32 => Ok(Val::I32(arg as u32 as i32)),
                ValType::I64 => Ok(Val::I64(arg as i64)),
                other => Err(mismatch(format!("unsupported parameter type {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut outputs = match ty.results() {
            [] => vec![],
            [ValType::I32] => vec![Val::I32(0)],
            [ValType::I64] => vec![Val::I64(0)],
            other => return Err(mismatch(format!("unsupported result types {other:?}"))),
        };
        func.call(&mut self.store, &inputs, &mut outputs)
            .map_err(|err| WasmError::GuestTrap(err.to_string()))?;
        Ok(match outputs.first() {
            Some(Val::I32(v)) => *v as u32 as u64,
            Some(Val::I64(v)) => *v as u64,
            _ => 0,
        })
    }

    fn memory_read(&self, addr: u64, len: u64) -> Result<Vec<u8>, WasmError> {
        let range = checked_range(addr, len, self.memory_size())
            .ok_or(WasmError::OutOfBoundsGuestRead { addr, len })?;
        if range.is_empty() {
            return Ok(Vec::new());
        }
        let memory = self.memory.expect("non-empty range implies memory");
        Ok(memory.data(&self.store)[range].to_vec())
    }

    fn memory_write(&mut self, addr: u64, data: &[u8]) -> Result<(), WasmError> {
        let len = data.len() as u64;
        let range = checked_range(addr, len, self.memory_size())
            .ok_or(WasmError::OutOfGuestMemory { addr, len })?;
        if range.is_empty() {
            return Ok(());
        }
        let memory = self.memory.expect("non-empty range implies memory");
        memory.data_mut(&mut self.store)[range].copy_from_slice(data);
        Ok(())
    }

    fn fuel_consumed(&self) -> Option<u64> {
        let limit = self.fuel?;
        let left = self.store.get_fuel().ok()?;
        Some(limit - left)
    }
}
