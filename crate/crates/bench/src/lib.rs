//! Criterion benches for the hot kernels live in `benches/`.
