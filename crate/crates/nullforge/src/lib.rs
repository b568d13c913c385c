//! SVD-based low-rank adapter initialization and analysis.
//!
//! This crate implements five adapter initialization schemes (vanilla LoRA,
//! PiSSA, MiLoRA, knowledge-preserved CorDA, and null-space LoRA), the
//! linear-algebra kernels they need (one-sided Jacobi SVD, symmetric
//! eigendecomposition, PSD pseudo-inverse), spectral diagnostics (effective
//! rank), activation capture over a toy feed-forward model, brute-force
//! oracles for the optimality/non-optimality claims behind the schemes, and
//! a desk-scale two-task continual-learning simulation that measures
//! knowledge forgetting.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --release -p nullforge --example init_schemes
//! cargo run --release -p nullforge --example null_space
//! cargo run --release -p nullforge --example verify_theorems
//! cargo run --release -p nullforge --example forgetting_benchmark
//! ```
//!
//! A thin `nullforge` binary exposes the same functionality as batch
//! subcommands (`init`, `analyze`, `verify`, `simulate`, `project`).

pub mod adapter;
pub mod capture;
pub mod cli;
pub mod error;
pub mod matrix;
pub mod nfm;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod svd;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use svd::{pinv_psd, svd, sym_eigen, truncate_rank, SvdResult};
