//! Criterion benchmarks for the autograd kernels and a full XCB step; see
//! `benches/kernels.rs`.
