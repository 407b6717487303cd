// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use offload::asm::{assemble, disassemble, parse_patched, serialize_patched};
use offload::harness::{
    apply_overrides, emit_report, run_bench, run_in_process, write_outputs, BenchConfig, EngineKind,
    MetricReport, ReportFormat, RunTarget, Runner, RunnerOptions,
};
use offload::isa::{decode_program, encode_program, Program};
use offload::patcher::{inline_calls, load_object, load_object_with_entry, make_patched, EbpfObject};
use offload::vm::verifier::{verify, VerifierPolicy};
use offload::vm::HelperRegistry;

#[derive(Parser)]
#[command(name = "offload", version, about = "eBPF VM, WebAssembly adapter and offload benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble text into raw bytecode.
    Asm {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Disassemble raw bytecode, a patched program or a relocatable object.
    Disasm { input: PathBuf },
    /// Run the verifier; fails on any error diagnostic.
    Verify {
        input: PathBuf,
        /// Promote lints to errors.
        #[arg(long)]
        strict: bool,
    },
    /// Inline a multi-function object (ELF or module text) into a patched program.
    Patch {
        input: PathBuf,
        #[arg(long)]
        expected: u64,
        #[arg(long, default_value_t = 0)]
        mem: u64,
        #[arg(long)]
        entry: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Runner: execute a patched program once and print METRIC lines.
    RunEbpf(RunArgs),
    /// Runner: execute a WebAssembly module once and print METRIC lines.
    RunWasm(RunArgs),
    /// Runner: call a native shared library once and print METRIC lines.
    RunNative(RunArgs),
    /// Measure the corpus and write reports.
    Bench(BenchArgs),
    /// Re-emit a saved report.json in another format.
    Report {
        /// Defaults to `<out>/report.json`.
        input: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Corpus program directory, its manifest, or a bare fixture file.
    target: PathBuf,
    #[arg(long)]
    fuel: Option<u64>,
    #[arg(long)]
    entry: Option<String>,
    #[arg(long)]
    library: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    args: Vec<u64>,
    /// Exit non-zero when the result differs from the expected value.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_parser = parse_format)]
    format: Vec<ReportFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_engine)]
    engines: Vec<EngineKind>,
    #[arg(long, value_delimiter = ',')]
    programs: Vec<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    fuel: Option<u64>,
}

fn parse_format(text: &str) -> Result<ReportFormat, String> {
    ReportFormat::parse(text).ok_or_else(|| format!("unknown format `{text}` (csv, md, json)"))
}

fn parse_engine(text: &str) -> Result<EngineKind, String> {
    EngineKind::parse(text).ok_or_else(|| format!("unknown engine `{text}` (native, ebpf-vm, wasm)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Asm { input, output } => {
            let program = assemble(&read_text(&input)?)?;
            let bytes = encode_program(&program);
            match output {
                Some(path) => write(&path, &bytes)?,
                None => {
                    for slot in bytes.chunks(8) {
                        let hex: Vec<String> = slot.iter().map(|b| format!("{b:02x}")).collect();
                        println!("{}", hex.join(" "));
                    }
                }
            }
            Ok(true)
        }
        Command::Disasm { input } => {
            let bytes = std::fs::read(&input).with_context(|| input.display().to_string())?;
            if bytes.starts_with(b"\x7fELF") {
                print!("{}", load_object(&bytes)?.to_module().to_text());
            } else {
                print!("{}", disassemble(&load_program(&input, &bytes)?));
            }
            Ok(true)
        }
        Command::Verify { input, strict } => {
            let bytes = std::fs::read(&input).with_context(|| input.display().to_string())?;
            let program = load_program(&input, &bytes)?;
            let policy = if strict { VerifierPolicy::strict() } else { VerifierPolicy::default() };
            let report = verify(&program, &policy, &HelperRegistry::default());
            print!("{report}");
            println!("{}", if report.ok { "ok" } else { "rejected" });
            Ok(report.ok)
        }
        Command::Patch {
            input,
            expected,
            mem,
            entry,
            output,
        } => {
            let bytes = std::fs::read(&input).with_context(|| input.display().to_string())?;
            let object = if bytes.starts_with(b"\x7fELF") {
                match &entry {
                    Some(entry) => load_object_with_entry(&bytes, entry)?,
                    None => load_object(&bytes)?,
                }
            } else {
                if entry.is_some() {
                    bail!("--entry applies to object files; module text names its entry");
                }
                EbpfObject::from_text(std::str::from_utf8(&bytes).context("module text is not UTF-8")?)?
            };
            let text = serialize_patched(&make_patched(inline_calls(&object)?, expected, mem)?);
            match output {
                Some(path) => write(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
            Ok(true)
        }
        Command::RunEbpf(args) => run(EngineKind::Ebpf, args),
        Command::RunWasm(args) => run(EngineKind::Wasm, args),
        Command::RunNative(args) => run(EngineKind::Native, args),
        Command::Bench(args) => bench(args),
        Command::Report { input, common } => {
            let config = load_config(&common)?;
            let input = input.unwrap_or_else(|| config.out_dir.join("report.json"));
            let report = MetricReport::from_json(&read_text(&input)?)?;
            let formats = if common.format.is_empty() {
                vec![ReportFormat::Markdown]
            } else {
                common.format.clone()
            };
            for format in formats {
                match &common.out {
                    Some(dir) => {
                        let path = dir.join(format!("report.{}", format.extension()));
                        write(&path, emit_report(&report, format).as_bytes())?;
                        println!("wrote {}", path.display());
                    }
                    None => print!("{}", emit_report(&report, format)),
                }
            }
            Ok(true)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| path.display().to_string())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| parent.display().to_string())?;
    }
    std::fs::write(path, bytes).with_context(|| path.display().to_string())
}

/// Patched file, assembly text, or raw little-endian bytecode.
fn load_program(path: &Path, bytes: &[u8]) -> Result<Program> {
    let Ok(text) = std::str::from_utf8(bytes) else {
        return Ok(decode_program(bytes)?);
    };
    let is_patched = text
        .lines()
        .take(2)
        .filter(|line| line.trim().parse::<u64>().is_ok())
        .count()
        == 2;
    if is_patched {
        return Ok(parse_patched(text)?.body);
    }
    match assemble(text) {
        Ok(program) => Ok(program),
        Err(err) if bytes.len() % 8 == 0 && text.contains('\0') => {
            decode_program(bytes).map_err(|_| err.into())
        }
        Err(err) => Err(err).with_context(|| path.display().to_string()),
    }
}

fn run(engine: EngineKind, args: RunArgs) -> Result<bool> {
    let target = RunTarget::resolve(&args.target)?;
    let options = RunnerOptions {
        fuel: args.fuel,
        entry: args.entry,
        library: args.library,
        args: args.args,
    };
    let metrics = run_in_process(engine, &target, &options)?;
    print!("{}", metrics.to_lines());
    if !args.check {
        return Ok(true);
    }
    let expected = match &target {
        RunTarget::Program(spec) => spec.expected,
        RunTarget::Fixture(path) if engine == EngineKind::Ebpf => parse_patched(&read_text(path)?)?.expected_output,
        RunTarget::Fixture(_) => bail!("--check needs an expected value; use a corpus program"),
    };
    if metrics.return_value != expected {
        eprintln!("wrong result: got {}, expected {expected}", metrics.return_value);
        return Ok(false);
    }
    Ok(true)
}

fn load_config(common: &CommonArgs) -> Result<BenchConfig> {
    let mut config = match &common.config {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    apply_overrides(&mut config, |key| std::env::var(key).ok())?;
    if let Some(iterations) = common.iterations {
        config.iterations = iterations;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if !common.format.is_empty() {
        config.formats = common.format.clone();
    }
    config.validate()?;
    Ok(config)
}

fn bench(args: BenchArgs) -> Result<bool> {
    let mut config = load_config(&args.common)?;
    if !args.engines.is_empty() {
        config.engines = args.engines;
    }
    if !args.programs.is_empty() {
        config.programs = args.programs;
    }
    if args.corpus.is_some() {
        config.corpus_dir = args.corpus;
    }
    if args.fuel.is_some() {
        config.fuel_limit = args.fuel;
    }
    let runner = Runner::new(std::env::current_exe().context("locating the runner executable")?);
    let outcome = run_bench(&config, &runner)?;
    for path in write_outputs(&config, &outcome)? {
        eprintln!("wrote {}", path.display());
    }
    print!("{}", emit_report(&outcome.report, ReportFormat::Markdown));
    for failure in &outcome.failures {
        eprintln!(
            "{} {}/{}: {}",
            if failure.gate { "FAILED" } else { "NA" },
            failure.program,
            failure.engine,
            failure.error
        );
    }
    Ok(outcome.gates_passed)
}
