//! Numerics for cross-modal retrieval at desk scale.
//!
//! The crate covers the full path from raw features to evaluated rankings:
//!
//! - [`linalg`]: dense matrices/vectors, softmax/sigmoid, cosine similarity,
//!   and a central-difference gradient oracle.
//! - [`metrics`]: similarity-matrix construction, ranked queries, R@k and mR.
//! - [`rerank`]: multivariate re-ranking of top-k candidates from forward
//!   rank, reverse retrieval, and a significance ratio.
//! - [`graph`]: detection merging, area-rank adjacency enhancement, and the
//!   normalized propagation operator.
//! - [`gcn`]: node featurization and graph-convolution forward passes.
//! - [`fusion`]: self/guided attention, feature interaction, and dynamic
//!   softmax-weighted fusion of global and local features.
//! - [`text`]: a bidirectional gated-recurrent sequence encoder.
//! - [`loss`]: the margin-based triplet objective and its analytic gradient.
//! - [`pipeline`]: synthetic scenes, finite-difference training, inference.
//! - [`io`]: CSV/JSONL/JSON codecs with atomic writes.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the pipeline
//! and the file formats are pinned to `f64`, exposed through the [`Matrix`]
//! and [`Vector`] aliases below.

pub mod error;
pub mod fusion;
pub mod gcn;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod rerank;
pub mod scalar;
pub mod text;

pub use error::CoreError;
pub use scalar::Scalar;

/// Crate-wide result type.
pub type Result<T, E = CoreError> = std::result::Result<T, E>;

/// Dense row-major matrix at the pipeline precision.
pub type Matrix = linalg::RealMatrix<f64>;

/// Dense vector at the pipeline precision.
pub type Vector = linalg::RealVector<f64>;
