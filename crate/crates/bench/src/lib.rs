//! Criterion benchmarks for the eigensolver, the training loop and coupled
//! stability runs. Run with `cargo bench -p dsgd-lab-bench`.
