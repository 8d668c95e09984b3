//! Criterion benchmarks for the audit hot paths; see `benches/`.
