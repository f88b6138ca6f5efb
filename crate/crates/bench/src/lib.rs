//! Benchmarks for the qnd-core engine live under `benches/`.
