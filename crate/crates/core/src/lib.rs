//! A superoptimizer for the integer subset of WebAssembly.
//!
//! Straight-line regions of each function body are lifted to a dataflow
//! graph, candidate subexpressions are replaced by cheaper verified
//! equivalents, and the result is lowered back to WASM. Zero-argument pure
//! functions are folded to constants by bounded concrete execution.

pub mod dataflow;
pub mod driver;
pub mod interp;
pub mod synth;
pub mod verify;
pub mod wasm;
