//! Benchmarks for mrlscm kernels.
