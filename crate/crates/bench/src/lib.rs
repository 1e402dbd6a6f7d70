//! Benchmark-only crate; see benches/models.rs.
