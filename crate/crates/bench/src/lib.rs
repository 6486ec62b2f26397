//! Criterion benchmarks for the decoder and the evolutionary loop; see `benches/`.
