// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use offload::corpus::{default_corpus_dir, find_program};
use offload::harness::{
    emit_report, is_sequential, relativize, run_bench, run_once, run_series, BenchConfig, EngineKind,
    HarnessError, Metric, MetricReport, ReportFormat, RunRequest, Runner,
};

const MIB: u64 = 1 << 20;

fn runner() -> Runner {
    Runner::new(env!("CARGO_BIN_EXE_offload"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn dummy_sample_under_the_vm() {
    let spec = find_program(&default_corpus_dir(), "dummy").unwrap();
    let sample = run_once(&runner(), &RunRequest::for_program(EngineKind::Ebpf, &spec, None)).unwrap();
    assert_eq!(sample.return_value, 1);
    assert!(sample.startup_ms >= 0.0 && sample.exec_ms >= 0.0 && sample.total_ms > 0.0);
    assert!(sample.max_rss_bytes > 0);
    assert_eq!(sample.fuel_used, Some(2));
}

#[test]
fn touching_64_mib_shows_in_max_rss() {
    let request = RunRequest::fixture(EngineKind::Ebpf, &fixture("memtouch.pbpf"), 16384);
    let sample = run_once(&runner(), &request).unwrap();
    assert!(sample.max_rss_bytes >= 64 * MIB, "{}", sample.max_rss_bytes);
}

#[test]
fn wrong_result_fails_the_gate() {
    let request = RunRequest::fixture(EngineKind::Ebpf, &fixture("wrong.pbpf"), 2);
    assert_eq!(
        run_once(&runner(), &request).unwrap_err(),
        HarnessError::WrongResult { got: 1, expected: 2 }
    );
}

#[test]
fn crashing_runner_reports_stderr() {
    let request = RunRequest::fixture(EngineKind::Ebpf, &fixture("does-not-exist.pbpf"), 1);
    match run_once(&runner(), &request).unwrap_err() {
        HarnessError::RunnerCrashed { stderr, .. } => assert!(stderr.contains("does-not-exist"), "{stderr}"),
        other => panic!("{other}"),
    }
}

#[test]
fn series_are_sequential() {
    let spec = find_program(&default_corpus_dir(), "fibonacci").unwrap();
    let request = RunRequest::for_program(EngineKind::Ebpf, &spec, None);
    let samples = run_series(&runner(), &request, 10).unwrap();
    assert_eq!(samples.len(), 10);
    assert!(is_sequential(&samples));
    assert_eq!(run_series(&runner(), &request, 1).unwrap().len(), 1);
    assert_eq!(run_series(&runner(), &request, 0).unwrap_err().error, HarnessError::InvalidIterations);
}

#[test]
fn fuel_limit_reaches_the_runner() {
    let spec = find_program(&default_corpus_dir(), "summing_loop").unwrap();
    let request = RunRequest::for_program(EngineKind::Ebpf, &spec, None);
    let err = run_once(&runner().with_fuel(Some(1000)), &request).unwrap_err();
    assert!(matches!(&err, HarnessError::RunnerCrashed { stderr, .. } if stderr.contains("fuel")), "{err}");
}

#[test]
fn bench_native_and_vm() {
    let out = tempfile::tempdir().unwrap();
    let config = BenchConfig {
        engines: vec![EngineKind::Native, EngineKind::Ebpf],
        programs: vec!["dummy".into(), "summing".into()],
        iterations: 3,
        out_dir: out.path().to_path_buf(),
        ..BenchConfig::default()
    };
    let outcome = run_bench(&config, &runner()).unwrap();
    if outcome.failures.iter().any(|f| f.engine == EngineKind::Native) {
        eprintln!("no C toolchain; native rows are NA: {:?}", outcome.failures);
        return;
    }
    assert!(outcome.gates_passed, "{:?}", outcome.failures);
    assert_eq!(outcome.report.rows.len(), 4);
    assert_eq!(outcome.samples.len(), 12);
    for row in &outcome.report.rows {
        let relative = row.relative.unwrap();
        let absolute = row.absolute.unwrap();
        let native = outcome.report.row(&row.program, EngineKind::Native).unwrap().absolute.unwrap();
        for metric in Metric::ALL {
            if row.engine == EngineKind::Native {
                assert_eq!(relative.get(metric), 1.0);
            }
            let back = relative.get(metric) * native.get(metric);
            let ulp = absolute.get(metric).abs() * f64::EPSILON;
            assert!((back - absolute.get(metric)).abs() <= ulp, "{} {}", row.program, metric.name());
        }
        assert_eq!(relativize(&absolute, &native).unwrap(), relative);
    }
    let json = emit_report(&outcome.report, ReportFormat::Json);
    assert_eq!(MetricReport::from_json(&json).unwrap(), outcome.report);
}

#[test]
fn missing_runtime_becomes_an_na_row() {
    let out = tempfile::tempdir().unwrap();
    let config = BenchConfig {
        engines: vec![EngineKind::Ebpf],
        programs: vec!["dummy".into()],
        iterations: 1,
        out_dir: out.path().to_path_buf(),
        ..BenchConfig::default()
    };
    let outcome = run_bench(&config, &Runner::new("/nonexistent/offload")).unwrap();
    assert!(!outcome.gates_passed);
    assert!(outcome.report.rows[0].is_na());
    let csv = emit_report(&outcome.report, ReportFormat::Csv);
    assert!(csv.lines().nth(1).unwrap().ends_with(",NA,NA"));
}
