// Benchmark-only crate; see benches/engine.rs.
