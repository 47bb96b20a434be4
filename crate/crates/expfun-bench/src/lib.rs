//! Benchmark-only crate; see benches/sampling.rs.
