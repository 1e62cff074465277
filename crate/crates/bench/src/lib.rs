//! Criterion benchmarks for the certens crate; see `benches/`.
