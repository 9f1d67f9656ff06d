//! Criterion benchmarks for the simulators and solvers; see `benches/`.
