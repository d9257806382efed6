//! Criterion benchmarks for `fplinq-core` live in `benches/`.
