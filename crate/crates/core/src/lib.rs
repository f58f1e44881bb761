//! Deterministic simulator of a migratory-thread PGAS machine, with SpMV,
//! BFS and graph-alignment kernels and a sweep harness on top.

pub mod bfs;
pub mod dds;
pub mod error;
pub mod graph;
pub mod gsana;
pub mod harness;
pub mod machine;
pub mod spmv;
