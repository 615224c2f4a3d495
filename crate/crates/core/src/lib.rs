//! Tensor regression with CPD-factored weights and per-mode graph Laplacian
//! smoothness penalties, together with linear and tensor baselines and the
//! synthetic and financial experiment pipelines used to compare them.

pub mod cpd;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod tensor;

pub use cpd::{CpdDocument, CpdFactors};
pub use error::{Error, Result};
pub use graph::GraphSpec;
pub use model::{GrtrConfig, GrtrModel, Samples, TrainTrace};
pub use tensor::{Contracted, DenseTensor};
