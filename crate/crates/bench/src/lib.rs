//! Benchmark harness lives in benches/.
