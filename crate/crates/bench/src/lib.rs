//! Criterion benchmarks for the beamspeech pipeline live in `benches/`.
