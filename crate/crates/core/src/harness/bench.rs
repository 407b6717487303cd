// SPDX-License-Identifier: Apache-2.0

//! Programs × engines sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    aggregate, binary_size, build_native, emit_report, relativize, run_series, BenchConfig, EngineKind,
    HarnessError, MetricReport, Metrics, ReportRow, RunRequest, RunSample, Runner,
};
use crate::corpus::{default_corpus_dir, load_corpus, ProgramSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub program: String,
    pub engine: EngineKind,
    pub error: String,
    /// The runner produced a wrong value, crashed or broke the protocol.
    pub gate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub report: MetricReport,
    pub samples: Vec<RunSample>,
    pub failures: Vec<BenchFailure>,
    pub gates_passed: bool,
}

fn is_gate_failure(error: &HarnessError) -> bool {
    matches!(
        error,
        HarnessError::WrongResult { .. }
            | HarnessError::RunnerCrashed { .. }
            | HarnessError::ProtocolParseError(_)
            | HarnessError::SpawnFailure(_)
    )
}

struct Measured {
    aggregate: super::Aggregate,
}

/// Runs every configured (program, engine) pair `config.iterations` times.
/// Failed pairs become NA rows; the outcome's gate flag is false if any
/// runner crashed or returned a wrong value.
pub fn run_bench(config: &BenchConfig, runner: &Runner) -> Result<BenchOutcome, HarnessError> {
    config.validate()?;
    let corpus_dir = config.corpus_dir.clone().unwrap_or_else(default_corpus_dir);
    let mut programs = load_corpus(&corpus_dir)?;
    if !config.programs.is_empty() {
        for name in &config.programs {
            if !programs.iter().any(|p| &p.name == name) {
                return Err(HarnessError::Config(format!("unknown program `{name}`")));
            }
        }
        programs.retain(|p| config.programs.contains(&p.name));
    }
    let runner = runner.clone().with_fuel(config.fuel_limit.or(runner.fuel));
    let native_dir = config.out_dir.join("native");

    let mut outcome = BenchOutcome {
        report: MetricReport::default(),
        samples: Vec::new(),
        failures: Vec::new(),
        gates_passed: true,
    };
    for spec in &programs {
        let mut measured: Vec<(EngineKind, Result<Measured, String>)> = Vec::new();
        for &engine in &config.engines {
            let result = measure(spec, engine, &runner, config.iterations, &native_dir, &mut outcome.samples);
            let result = result.map_err(|error| {
                outcome.failures.push(BenchFailure {
                    program: spec.name.clone(),
                    engine,
                    error: error.to_string(),
                    gate: is_gate_failure(&error),
                });
                error.to_string()
            });
            measured.push((engine, result));
        }
        let native = measured.iter().find_map(|(engine, result)| match result {
            Ok(m) if *engine == EngineKind::Native => Some(m.aggregate.mean),
            _ => None,
        });
        for (engine, result) in measured {
            outcome.report.rows.push(match result {
                Ok(m) => row(spec, engine, &m, native.as_ref()),
                Err(note) => ReportRow::na(&spec.name, engine, note),
            });
        }
    }
    outcome.gates_passed = outcome.failures.iter().all(|f| !f.gate);
    Ok(outcome)
}

fn row(spec: &ProgramSpec, engine: EngineKind, m: &Measured, native: Option<&Metrics>) -> ReportRow {
    let (relative, note) = match native.map(|native| relativize(&m.aggregate.mean, native)) {
        Some(Ok(rel)) => (Some(rel), None),
        Some(Err(err)) => (None, Some(err.to_string())),
        None => (None, Some("no native baseline".to_string())),
    };
    ReportRow {
        program: spec.name.clone(),
        engine,
        samples: m.aggregate.n,
        absolute: Some(m.aggregate.mean),
        relative,
        min: Some(m.aggregate.min),
        max: Some(m.aggregate.max),
        note,
    }
}

fn measure(
    spec: &ProgramSpec,
    engine: EngineKind,
    runner: &Runner,
    iterations: usize,
    native_dir: &Path,
    all_samples: &mut Vec<RunSample>,
) -> Result<Measured, HarnessError> {
    let (artifact, library): (PathBuf, Option<PathBuf>) = match engine {
        EngineKind::Native => {
            let library = build_native(spec, native_dir)?;
            (library.clone(), Some(library))
        }
        EngineKind::Ebpf => (spec.pbpf_path(), None),
        EngineKind::Wasm => (spec.wasm_path(), None),
    };
    let size = binary_size(&artifact)?;
    let request = RunRequest::for_program(engine, spec, library.as_deref());
    let samples = match run_series(runner, &request, iterations) {
        Ok(samples) => samples,
        Err(err) => {
            all_samples.extend(err.samples);
            return Err(err.error);
        }
    };
    let metrics: Vec<Metrics> = samples.iter().map(|s| s.metrics(size)).collect();
    all_samples.extend(samples);
    Ok(Measured {
        aggregate: aggregate(&metrics)?,
    })
}

/// Writes `report.<ext>` for each configured format plus `samples.json`
/// into `config.out_dir`; returns the written paths.
pub fn write_outputs(config: &BenchConfig, outcome: &BenchOutcome) -> Result<Vec<PathBuf>, HarnessError> {
    let io = |path: &Path, err: std::io::Error| HarnessError::Io(format!("{}: {err}", path.display()));
    std::fs::create_dir_all(&config.out_dir).map_err(|err| io(&config.out_dir, err))?;
    let mut written = Vec::new();
    for &format in &config.formats {
        let path = config.out_dir.join(format!("report.{}", format.extension()));
        std::fs::write(&path, emit_report(&outcome.report, format)).map_err(|err| io(&path, err))?;
        written.push(path);
    }
    let path = config.out_dir.join("samples.json");
    let text = serde_json::to_string_pretty(&outcome.samples).expect("samples serialize");
    std::fs::write(&path, text).map_err(|err| io(&path, err))?;
    written.push(path);
    Ok(written)
}
