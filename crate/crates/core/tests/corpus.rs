// SPDX-License-Identifier: Apache-2.0

use offload::asm::parse_patched;
use offload::corpus::{default_corpus_dir, load_corpus, ProgramSpec};
use offload::harness::{build_native, run_in_process, EngineKind, RunTarget, RunnerOptions};
use offload::vm::verifier::{verify, VerifierPolicy};
use offload::vm::HelperRegistry;

fn corpus() -> Vec<ProgramSpec> {
    let programs = load_corpus(&default_corpus_dir()).unwrap();
    let names: Vec<&str> = programs.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["dummy", "fibonacci", "multifact", "prime", "summing", "summing_loop"]);
    programs
}

#[test]
fn headers_manifests_and_oracles_agree() {
    for spec in corpus() {
        spec.check_fixtures().unwrap();
        let file = parse_patched(&std::fs::read_to_string(spec.pbpf_path()).unwrap()).unwrap();
        assert_eq!(file.expected_output, spec.expected, "{}", spec.name);
        assert_eq!(file.static_mem_size, spec.static_mem_size, "{}", spec.name);
        assert_eq!(spec.oracle_value().unwrap(), spec.expected, "{}", spec.name);
    }
}

#[test]
fn patched_fixtures_pass_the_strict_verifier() {
    for spec in corpus() {
        let file = parse_patched(&std::fs::read_to_string(spec.pbpf_path()).unwrap()).unwrap();
        let report = verify(&file.body, &VerifierPolicy::strict(), &HelperRegistry::default());
        assert!(report.ok && report.diagnostics.is_empty(), "{}:\n{report}", spec.name);
    }
}

#[test]
fn ebpf_vm_returns_expected() {
    for spec in corpus() {
        let name = spec.name.clone();
        let expected = spec.expected;
        let metrics = run_in_process(EngineKind::Ebpf, &RunTarget::Program(spec), &RunnerOptions::default()).unwrap();
        assert_eq!(metrics.return_value, expected, "{name}");
        assert!(metrics.fuel_used.unwrap() > 0);
    }
}

#[test]
fn wasm_returns_expected() {
    for spec in corpus() {
        let name = spec.name.clone();
        let expected = spec.expected;
        let metrics = run_in_process(EngineKind::Wasm, &RunTarget::Program(spec), &RunnerOptions::default()).unwrap();
        assert_eq!(metrics.return_value, expected, "{name}");
    }
}

#[test]
fn wasm_binaries_match_their_text() {
    for spec in corpus() {
        let from_text = wat::parse_file(spec.wat_path()).unwrap();
        assert_eq!(std::fs::read(spec.wasm_path()).unwrap(), from_text, "{}", spec.name);
    }
}

#[test]
fn dummy_is_the_smallest_patched_fixture() {
    let sizes: Vec<(String, u64)> = corpus()
        .iter()
        .map(|s| (s.name.clone(), std::fs::metadata(s.pbpf_path()).unwrap().len()))
        .collect();
    let dummy = sizes.iter().find(|(n, _)| n == "dummy").unwrap().1;
    assert_eq!(dummy, 23);
    assert!(sizes.iter().all(|(n, size)| n == "dummy" || *size > dummy), "{sizes:?}");
}

#[test]
fn native_libraries_return_expected() {
    let out = tempfile::tempdir().unwrap();
    for spec in corpus() {
        let library = match build_native(&spec, out.path()) {
            Ok(library) => library,
            Err(err) => {
                eprintln!("skipping native {}: {err}", spec.name);
                return;
            }
        };
        let expected = spec.expected;
        let options = RunnerOptions {
            library: Some(library),
            ..RunnerOptions::default()
        };
        let metrics = run_in_process(EngineKind::Native, &RunTarget::Program(spec), &options).unwrap();
        assert_eq!(metrics.return_value, expected);
    }
}
