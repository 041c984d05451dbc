//! Benchmarks for the front-end and the neural layers live under `benches/`.
