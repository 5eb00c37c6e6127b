//! Benchmark-only crate; the targets live in the benches directory.
