// SPDX-License-Identifier: Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn offload(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_offload")).args(args).output().unwrap()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn corpus(path: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(path).display().to_string()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

#[test]
fn asm_then_disasm() {
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("p.s");
    let binary = dir.path().join("p.bin");
    std::fs::write(&source, "mov64 r0, 1\nja +0\nexit\n").unwrap();
    let out = offload(&["asm", source.to_str().unwrap(), "-o", binary.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&binary).unwrap().len(), 24);
    let out = offload(&["disasm", binary.to_str().unwrap()]);
    assert_eq!(stdout(&out), "mov64 r0, 0x1\nja +0\nexit");
    let out = offload(&["asm", source.to_str().unwrap()]);
    assert!(stdout(&out).starts_with("b7 00 00 00 01 00 00 00\n"));
}

#[test]
fn verify_exit_status() {
    assert!(offload(&["verify", &corpus("prime/prime.pbpf")]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.s");
    std::fs::write(&bad, "mov64 r0, 1\nja +5\nexit\n").unwrap();
    let out = offload(&["verify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("JumpOutOfBounds"));
    let lint = dir.path().join("lint.s");
    std::fs::write(&lint, "mov64 r1, 0\nmov64 r0, 1\nexit\n").unwrap();
    assert!(offload(&["verify", lint.to_str().unwrap()]).status.success());
    assert_eq!(offload(&["verify", "--strict", lint.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn patch_object_then_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("two.pbpf");
    let out = offload(&[
        "patch",
        &fixture("two_calls.bpf.o"),
        "--expected",
        "26",
        "--mem",
        "0",
        "-o",
        out_file.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // leaf(3) + other(5) = 22 + 6; leaf(3) + other(7) = 22 + 4
    let run = offload(&["run-ebpf", out_file.to_str().unwrap(), "--args", "3,5", "--check"]);
    assert!(stdout(&run).contains("METRIC return_value 28"));
    assert_eq!(run.status.code(), Some(1));
    let run = offload(&["run-ebpf", out_file.to_str().unwrap(), "--args", "3,7", "--check"]);
    assert!(run.status.success(), "{}", stdout(&run));
}

#[test]
fn run_verbs_print_metrics() {
    let out = offload(&["run-ebpf", &corpus("summing"), "--check"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("METRIC return_value 5050"), "{text}");
    assert!(text.contains("METRIC startup_ms "));
    let out = offload(&["run-wasm", &corpus("fibonacci/manifest.toml"), "--check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = offload(&["run-native", &corpus("dummy")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_and_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        format!(
            "engines = [\"ebpf-vm\"]\nprograms = [\"dummy\", \"multifact\"]\ncorpus_dir = \"{}\"\nformats = [\"csv\", \"json\"]\n",
            corpus("")
        ),
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_offload"))
        .args(["bench", "--config", config.to_str().unwrap(), "--iterations", "2"])
        .env("OFFLOAD_ITERATIONS", "5")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench-out/report.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("program,engine,metric,absolute,relative"));
    assert_eq!(csv.lines().count(), 1 + 2 * 5);
    // No native baseline was measured, so relative columns are NA.
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",NA")));
    let samples = std::fs::read_to_string(dir.path().join("bench-out/samples.json")).unwrap();
    assert_eq!(samples.matches("\"program\"").count(), 4);

    let json = dir.path().join("bench-out/report.json");
    let out = offload(&["report", json.to_str().unwrap(), "--format", "md"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("| multifact | ebpf-vm | 2 |"));
}

#[test]
fn bad_arguments() {
    assert_eq!(offload(&["bench", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(offload(&["bench", "--iterations", "0"]).status.code(), Some(2));
    assert!(!offload(&["frobnicate"]).status.success());
}
