// SPDX-License-Identifier: Apache-2.0

//! Measurement harness.
//!
//! Each sample is one fresh runner process (the crate binary invoked with a
//! `run-*` verb). Inside it the runner takes t0, sets the engine up, takes t1
//! (startup = t1 - t0), times the entry call (exec) and prints the values on
//! the [`protocol`]. The parent measures the whole process lifetime (total)
//! and reads the peak resident set from the kernel's accounting of the reaped
//! child. Samples that return the wrong value fail the correctness gate and
//! are never aggregated.
//!
//! Reports average `n` samples per (program, engine) and divide every metric
//! by the native average of the same program, so the native row is 1.

mod bench;
mod config;
mod native;
mod process;
pub mod protocol;
mod report;
mod runner;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bench::{run_bench, write_outputs, BenchFailure, BenchOutcome};
pub use config::{apply_overrides, BenchConfig, ENV_ITERATIONS, ENV_OUT_DIR};
pub use native::{build_native, c_compiler, native_engine_run, NativeEntry, NativeRun};
pub use process::{is_sequential, run_once, run_series, RunRequest, RunSample, Runner, SeriesError};
pub use report::{emit_report, MetricReport, ReportFormat, ReportRow};
pub use runner::{default_wasm_engine, run_in_process, RunTarget, RunnerOptions};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("cannot spawn runner: {0}")]
    SpawnFailure(String),
    #[error("runner failed ({status}): {stderr}")]
    RunnerCrashed { status: String, stderr: String },
    #[error("wrong result: got {got}, expected {expected}")]
    WrongResult { got: u64, expected: u64 },
    #[error("cannot parse runner output: {0}")]
    ProtocolParseError(String),
    #[error("iteration count must be at least 1")]
    InvalidIterations,
    #[error("native baseline for {metric} is zero")]
    ZeroNativeBaseline { metric: &'static str },
    #[error("no samples to aggregate")]
    NoSamples,
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("not a regular file: {0}")]
    NotAFile(String),
    #[error("cannot load shared library: {0}")]
    LoadFailure(String),
    #[error("symbol `{0}` not found")]
    SymbolNotFound(String),
    #[error("C compiler unavailable: {0}")]
    MissingToolchain(String),
    #[error("compiling `{program}` failed: {stderr}")]
    CompileError { program: String, stderr: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Vm(#[from] crate::vm::VmError),
    #[error(transparent)]
    Wasm(#[from] crate::wasm::WasmError),
    #[error(transparent)]
    Asm(#[from] crate::asm::AsmError),
    #[error("{0}")]
    Corpus(String),
}

impl From<crate::corpus::CorpusError> for HarnessError {
    fn from(err: crate::corpus::CorpusError) -> Self {
        HarnessError::Corpus(err.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EngineKind {
    #[serde(rename = "native")]
    Native,
    #[serde(rename = "ebpf-vm")]
    Ebpf,
    #[serde(rename = "wasm")]
    Wasm,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::Native, EngineKind::Ebpf, EngineKind::Wasm];

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Native => "native",
            EngineKind::Ebpf => "ebpf-vm",
            EngineKind::Wasm => "wasm",
        }
    }

    /// Runner verb of the crate binary.
    pub fn verb(self) -> &'static str {
        match self {
            EngineKind::Native => "run-native",
            EngineKind::Ebpf => "run-ebpf",
            EngineKind::Wasm => "run-wasm",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        EngineKind::ALL
            .into_iter()
            .find(|e| e.name() == text || (text == "ebpf" && *e == EngineKind::Ebpf))
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The reported metrics, in table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MaxRss,
    Startup,
    Exec,
    Total,
    BinarySize,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::MaxRss,
        Metric::Startup,
        Metric::Exec,
        Metric::Total,
        Metric::BinarySize,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MaxRss => "max_rss_bytes",
            Metric::Startup => "startup_ms",
            Metric::Exec => "exec_ms",
            Metric::Total => "total_ms",
            Metric::BinarySize => "binary_size_bytes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub max_rss_bytes: f64,
    pub startup_ms: f64,
    pub exec_ms: f64,
    pub total_ms: f64,
    pub binary_size_bytes: f64,
}

impl Metrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::MaxRss => self.max_rss_bytes,
            Metric::Startup => self.startup_ms,
            Metric::Exec => self.exec_ms,
            Metric::Total => self.total_ms,
            Metric::BinarySize => self.binary_size_bytes,
        }
    }

    pub fn set(&mut self, metric: Metric, value: f64) {
        match metric {
            Metric::MaxRss => self.max_rss_bytes = value,
            Metric::Startup => self.startup_ms = value,
            Metric::Exec => self.exec_ms = value,
            Metric::Total => self.total_ms = value,
            Metric::BinarySize => self.binary_size_bytes = value,
        }
    }

    fn map2(&self, other: &Metrics, f: impl Fn(f64, f64) -> f64) -> Metrics {
        let mut out = Metrics::default();
        for metric in Metric::ALL {
            out.set(metric, f(self.get(metric), other.get(metric)));
        }
        out
    }
}

impl RunSample {
    pub fn metrics(&self, binary_size_bytes: u64) -> Metrics {
        Metrics {
            max_rss_bytes: self.max_rss_bytes as f64,
            startup_ms: self.startup_ms,
            exec_ms: self.exec_ms,
            total_ms: self.total_ms,
            binary_size_bytes: binary_size_bytes as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: Metrics,
    pub min: Metrics,
    pub max: Metrics,
}

/// Per-metric arithmetic mean, minimum and maximum.
pub fn aggregate(samples: &[Metrics]) -> Result<Aggregate, HarnessError> {
    let first = samples.first().ok_or(HarnessError::NoSamples)?;
    let mut sum = Metrics::default();
    let mut min = *first;
    let mut max = *first;
    for sample in samples {
        sum = sum.map2(sample, |a, b| a + b);
        min = min.map2(sample, f64::min);
        max = max.map2(sample, f64::max);
    }
    let n = samples.len() as f64;
    let mean = sum.map2(&sum, |a, _| a / n);
    Ok(Aggregate {
        n: samples.len(),
        mean,
        min,
        max,
    })
}

/// Divides each metric by the native average.
pub fn relativize(engine_avg: &Metrics, native_avg: &Metrics) -> Result<Metrics, HarnessError> {
    for metric in Metric::ALL {
        if native_avg.get(metric) <= 0.0 {
            return Err(HarnessError::ZeroNativeBaseline {
                metric: metric.name(),
            });
        }
    }
    Ok(engine_avg.map2(native_avg, |engine, native| engine / native))
}

pub fn binary_size(path: &Path) -> Result<u64, HarnessError> {
    let metadata =
        std::fs::metadata(path).map_err(|_| HarnessError::MissingFile(path.display().to_string()))?;
    if !metadata.is_file() {
        return Err(HarnessError::NotAFile(path.display().to_string()));
    }
    Ok(metadata.len())
}
