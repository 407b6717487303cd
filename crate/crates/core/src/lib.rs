// SPDX-License-Identifier: Apache-2.0

//! Offload runtime and measurement harness for near-data computation.
//!
//! The crate bundles everything needed to ship a small computation to a
//! storage-side runtime and measure what that costs:
//!
//! * [`isa`] - bit-exact codec of the eBPF instruction subset,
//! * [`asm`] - textual assembler/disassembler and the plaintext patched
//!   program format,
//! * [`vm`] - verifier and bounds-checked, fuel-metered interpreter,
//! * [`patcher`] - turns multi-function relocatable objects into single
//!   function patched programs,
//! * [`wasm`] - engine-neutral WebAssembly adapter with the exported
//!   allocator data contract,
//! * [`harness`] - subprocess runner, metrics and relative-to-native reports,
//! * [`corpus`] - reference oracles and checked-in fixtures.

pub mod asm;
pub mod corpus;
pub mod harness;
pub mod isa;
pub mod patcher;
pub mod vm;
pub mod wasm;
