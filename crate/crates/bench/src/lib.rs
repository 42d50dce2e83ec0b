//! Benchmarks for the slitkit kernels; see `benches/`.
