// SPDX-License-Identifier: Apache-2.0

//! Code that runs inside a runner process: one engine, one program, one call.

use std::path::{Path, PathBuf};
use std::time::Instant;

use super::native::{ms, native_engine_run};
use super::protocol::RunnerMetrics;
use super::{EngineKind, HarnessError};
use crate::asm::parse_patched;
use crate::corpus::ProgramSpec;
use crate::vm::{instantiate, VmConfig};
use crate::wasm::{invoke_entry, pass_buffer, Engine, ExportNames, WasmBinary};

/// What a runner executes: a corpus program directory (or its manifest) or a
/// bare fixture file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunTarget {
    Program(ProgramSpec),
    Fixture(PathBuf),
}

impl RunTarget {
    pub fn resolve(path: &Path) -> Result<Self, HarnessError> {
        let manifest = if path.is_dir() {
            path.join("manifest.toml")
        } else {
            path.to_path_buf()
        };
        if manifest.file_name().is_some_and(|name| name == "manifest.toml") {
            return Ok(RunTarget::Program(ProgramSpec::from_manifest(&manifest)?));
        }
        if !path.is_file() {
            return Err(HarnessError::MissingFile(path.display().to_string()));
        }
        Ok(RunTarget::Fixture(path.to_path_buf()))
    }

    fn stem(&self) -> String {
        match self {
            RunTarget::Program(spec) => spec.name.clone(),
            RunTarget::Fixture(path) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunnerOptions {
    /// Instruction budget for eBPF, fuel for WASM.
    pub fuel: Option<u64>,
    /// Overrides the WASM export or native symbol name.
    pub entry: Option<String>,
    /// Shared library for the native engine.
    pub library: Option<PathBuf>,
    /// Overrides the program's scalar arguments.
    pub args: Vec<u64>,
}

pub fn run_in_process(
    engine: EngineKind,
    target: &RunTarget,
    options: &RunnerOptions,
) -> Result<RunnerMetrics, HarnessError> {
    match engine {
        EngineKind::Ebpf => run_ebpf(target, options),
        EngineKind::Wasm => run_wasm(target, options),
        EngineKind::Native => run_native(target, options),
    }
}

fn inputs(target: &RunTarget, options: &RunnerOptions) -> (Vec<u8>, Vec<u64>) {
    let (input, args) = match target {
        RunTarget::Program(spec) => (spec.input_bytes(), spec.args.clone()),
        RunTarget::Fixture(_) => (Vec::new(), Vec::new()),
    };
    if options.args.is_empty() {
        (input, args)
    } else {
        (input, options.args.clone())
    }
}

fn run_ebpf(target: &RunTarget, options: &RunnerOptions) -> Result<RunnerMetrics, HarnessError> {
    let path = match target {
        RunTarget::Program(spec) => spec.pbpf_path(),
        RunTarget::Fixture(path) => path.clone(),
    };
    let (input, args) = inputs(target, options);
    let t0 = Instant::now();
    let text = std::fs::read_to_string(&path)
        .map_err(|err| HarnessError::Io(format!("{}: {err}", path.display())))?;
    let file = parse_patched(&text)?;
    let mut config = VmConfig::default();
    if let Some(fuel) = options.fuel {
        config = config.with_fuel(fuel);
    }
    let mut instance = instantiate(&file, &config)?;
    let startup_ms = ms(t0);
    instance.write_static_mem(0, &input)?;
    instance.set_args(&args)?;
    let t1 = Instant::now();
    let outcome = instance.execute()?;
    let exec_ms = ms(t1);
    Ok(RunnerMetrics {
        startup_ms,
        exec_ms,
        return_value: outcome.return_value,
        fuel_used: Some(outcome.instructions_executed),
    })
}

/// The WASM runtime compiled into this build.
pub fn default_wasm_engine(fuel: Option<u64>) -> Result<Box<dyn Engine>, HarnessError> {
    #[cfg(feature = "wasmi")]
    {
        let engine = crate::wasm::WasmiEngine::new();
        Ok(Box::new(match fuel {
            Some(fuel) => engine.with_fuel(fuel),
            None => engine,
        }))
    }
    #[cfg(not(feature = "wasmi"))]
    {
        let _ = fuel;
        Err(HarnessError::Unsupported(
            "built without a WebAssembly runtime (enable feature `wasmi`)".into(),
        ))
    }
}

fn run_wasm(target: &RunTarget, options: &RunnerOptions) -> Result<RunnerMetrics, HarnessError> {
    let (path, mut names) = match target {
        RunTarget::Program(spec) => (
            spec.wasm_path(),
            ExportNames::entry(spec.wasm_entry.clone()).with_allocator(spec.allocator.clone()),
        ),
        RunTarget::Fixture(path) => (path.clone(), ExportNames::entry(target.stem())),
    };
    if let Some(entry) = &options.entry {
        names.entry = entry.clone();
    }
    let (input, args) = inputs(target, options);
    let engine = default_wasm_engine(options.fuel)?;
    let t0 = Instant::now();
    let binary = WasmBinary::load(&path)?;
    let mut instance = engine.instantiate(&binary, &names)?;
    let startup_ms = ms(t0);
    let mut call_args = Vec::new();
    if !input.is_empty() {
        let buffer = pass_buffer(instance.as_mut(), &input)?;
        call_args.push(buffer.guest_ptr);
        call_args.push(input.len() as u64 / 8);
    }
    call_args.extend(args);
    let t1 = Instant::now();
    let return_value = invoke_entry(instance.as_mut(), &call_args)?;
    let exec_ms = ms(t1);
    Ok(RunnerMetrics {
        startup_ms,
        exec_ms,
        return_value,
        fuel_used: instance.fuel_consumed(),
    })
}

fn run_native(target: &RunTarget, options: &RunnerOptions) -> Result<RunnerMetrics, HarnessError> {
    let (library, symbol, mut memory) = match target {
        RunTarget::Program(spec) => (
            options
                .library
                .clone()
                .ok_or_else(|| HarnessError::MissingFile(format!("shared library for `{}`", spec.name)))?,
            spec.native_entry.clone(),
            spec.native_memory(),
        ),
        RunTarget::Fixture(path) => {
            let stem = target.stem();
            let name = stem.strip_prefix("lib").unwrap_or(&stem);
            (path.clone(), format!("{name}_entry"), Vec::new())
        }
    };
    let symbol = options.entry.clone().unwrap_or(symbol);
    let (_, args) = inputs(target, options);
    let pair = [
        args.first().copied().unwrap_or(0),
        args.get(1).copied().unwrap_or(0),
    ];
    let run = native_engine_run(&library, &symbol, &mut memory, pair)?;
    Ok(RunnerMetrics {
        startup_ms: run.startup_ms,
        exec_ms: run.exec_ms,
        return_value: run.return_value,
        fuel_used: None,
    })
}
