//! Criterion benchmarks for the oracle and policy loop; see `benches/`.
