//! Hybrid quantum-kernel support vector machines.
//!
//! Classical pixel data is embedded into a simulated two-or-more qubit state by a
//! parameterized ZZ feature map, the resulting fidelity kernel is tuned by
//! maximizing kernel target alignment with SPSA, and the tuned kernel is handed
//! to a soft-margin SVM trained by SMO. An RBF-kernel SVM serves as the
//! classical baseline, and a benchmark harness compares both over repeated
//! train/test splits with a Wilcoxon signed-rank test.
//!
//! Module map:
//!
//! - [`statevector`]: dense statevector simulator (H, RY, RZ, RZZ, CX).
//! - [`featuremap`]: ansatz and ZZ feature map circuits, embedding.
//! - [`qkernel`]: exact and shot-sampled quantum kernel estimation.
//! - [`alignment`]: ideal kernel, target alignment, SPSA.
//! - [`svm`]: SMO solver, RBF baseline, prediction.
//! - [`data`]: pixel tables, patch filtering, sampling, scaling, PCA.
//! - [`stats`]: Wilcoxon signed-rank test and summaries.
//! - [`bench`]: end-to-end experiment over repeated splits.

pub mod alignment;
pub mod bench;
pub mod data;
mod error;
pub mod featuremap;
pub mod fmt;
pub mod labels;
pub mod matrix;
pub mod qkernel;
pub mod seed;
pub mod statevector;
pub mod stats;
pub mod svm;
pub mod synthetic;

pub use error::{Error, Result};
