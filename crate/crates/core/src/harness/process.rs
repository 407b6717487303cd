// SPDX-License-Identifier: Apache-2.0

//! Parent side of a measurement: spawn a runner, time its lifetime, reap it
//! with `wait4` to read its peak resident set.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::protocol::parse_metrics;
use super::{EngineKind, HarnessError};
use crate::corpus::ProgramSpec;

/// The executable that understands the `run-*` verbs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Runner {
    pub exe: PathBuf,
    pub fuel: Option<u64>,
}

impl Runner {
    pub fn new(exe: impl Into<PathBuf>) -> Self {
        Runner {
            exe: exe.into(),
            fuel: None,
        }
    }

    pub fn with_fuel(mut self, fuel: Option<u64>) -> Self {
        self.fuel = fuel;
        self
    }
}

/// One runner invocation and the value it must return.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRequest {
    pub engine: EngineKind,
    pub program: String,
    pub target: PathBuf,
    pub expected: u64,
    pub library: Option<PathBuf>,
}

impl RunRequest {
    pub fn for_program(engine: EngineKind, spec: &ProgramSpec, library: Option<&Path>) -> Self {
        RunRequest {
            engine,
            program: spec.name.clone(),
            target: spec.dir.clone(),
            expected: spec.expected,
            library: library.map(Path::to_path_buf),
        }
    }

    pub fn fixture(engine: EngineKind, path: &Path, expected: u64) -> Self {
        RunRequest {
            engine,
            program: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            target: path.to_path_buf(),
            expected,
            library: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSample {
    pub program: String,
    pub engine: EngineKind,
    pub startup_ms: f64,
    pub exec_ms: f64,
    pub total_ms: f64,
    pub max_rss_bytes: u64,
    pub return_value: u64,
    pub fuel_used: Option<u64>,
    /// Milliseconds since the first measurement of this process.
    pub spawned_at_ms: f64,
    pub exited_at_ms: f64,
}

fn epoch() -> Instant {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    *EPOCH.get_or_init(Instant::now)
}

fn since_epoch(at: Instant) -> f64 {
    at.duration_since(epoch()).as_secs_f64() * 1e3
}

/// Spawns a fresh runner for `request` and returns its sample after checking
/// the result against the expected value.
pub fn run_once(runner: &Runner, request: &RunRequest) -> Result<RunSample, HarnessError> {
    let mut command = Command::new(&runner.exe);
    command.arg(request.engine.verb()).arg(&request.target);
    if let Some(library) = &request.library {
        command.arg("--library").arg(library);
    }
    if let (Some(fuel), true) = (runner.fuel, request.engine != EngineKind::Native) {
        command.arg("--fuel").arg(fuel.to_string());
    }
    command
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    epoch();
    let start = Instant::now();
    let mut child = command
        .spawn()
        .map_err(|err| HarnessError::SpawnFailure(format!("{}: {err}", runner.exe.display())))?;
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let out_reader = thread::spawn(move || {
        let mut text = String::new();
        let _ = stdout.read_to_string(&mut text);
        text
    });
    let err_reader = thread::spawn(move || {
        let mut text = String::new();
        let _ = stderr.read_to_string(&mut text);
        text
    });
    let (status, max_rss_bytes) = reap(child.id())?;
    let end = Instant::now();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();

    if !status.success {
        return Err(HarnessError::RunnerCrashed {
            status: status.description,
            stderr,
        });
    }
    let metrics = parse_metrics(&stdout)?;
    if metrics.return_value != request.expected {
        return Err(HarnessError::WrongResult {
            got: metrics.return_value,
            expected: request.expected,
        });
    }
    Ok(RunSample {
        program: request.program.clone(),
        engine: request.engine,
        startup_ms: metrics.startup_ms,
        exec_ms: metrics.exec_ms,
        total_ms: end.duration_since(start).as_secs_f64() * 1e3,
        max_rss_bytes,
        return_value: metrics.return_value,
        fuel_used: metrics.fuel_used,
        spawned_at_ms: since_epoch(start),
        exited_at_ms: since_epoch(end),
    })
}

struct ExitStatus {
    success: bool,
    description: String,
}

/// Waits for `pid` and returns its status with the peak RSS in bytes.
fn reap(pid: u32) -> Result<(ExitStatus, u64), HarnessError> {
    let pid = pid as libc::pid_t;
    let mut status: libc::c_int = 0;
    // SAFETY: rusage is plain data; wait4 fills it in.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    loop {
        // SAFETY: valid pointers to locals; pid is our own unreaped child.
        let reaped = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
        if reaped == pid {
            break;
        }
        let err = std::io::Error::last_os_error();
        if err.kind() != std::io::ErrorKind::Interrupted {
            return Err(HarnessError::SpawnFailure(format!("wait4: {err}")));
        }
    }
    // Linux reports kilobytes, macOS bytes.
    let scale = if cfg!(target_os = "macos") { 1 } else { 1024 };
    let max_rss = (usage.ru_maxrss.max(0) as u64) * scale;
    let exit = if libc::WIFEXITED(status) {
        let code = libc::WEXITSTATUS(status);
        ExitStatus {
            success: code == 0,
            description: format!("exit code {code}"),
        }
    } else if libc::WIFSIGNALED(status) {
        ExitStatus {
            success: false,
            description: format!("killed by signal {}", libc::WTERMSIG(status)),
        }
    } else {
        ExitStatus {
            success: false,
            description: format!("wait status {status:#x}"),
        }
    };
    Ok((exit, max_rss))
}

/// Error of [`run_series`] with the samples collected before it.
#[derive(Debug)]
pub struct SeriesError {
    pub samples: Vec<RunSample>,
    pub error: HarnessError,
}

/// `n` sequential runs; stops at the first failure.
pub fn run_series(runner: &Runner, request: &RunRequest, n: usize) -> Result<Vec<RunSample>, SeriesError> {
    if n == 0 {
        return Err(SeriesError {
            samples: Vec::new(),
            error: HarnessError::InvalidIterations,
        });
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        match run_once(runner, request) {
            Ok(sample) => samples.push(sample),
            Err(error) => return Err(SeriesError { samples, error }),
        }
    }
    Ok(samples)
}

/// True when no two samples' process lifetimes overlap.
pub fn is_sequential(samples: &[RunSample]) -> bool {
    let mut spans: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| (s.spawned_at_ms, s.exited_at_ms))
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    spans.windows(2).all(|w| w[0].1 <= w[1].0)
}
