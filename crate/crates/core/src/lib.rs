//! Training feed-forward networks layer by layer with a normalized HSIC
//! bottleneck objective, without propagating gradients between layers.
//!
//! The pieces, bottom up: dense matrices ([`linalg`]), Gaussian Gram
//! matrices ([`kernels`]), HSIC estimators and their gradients ([`hsic`]),
//! networks ([`nn`]), trainers ([`train`]), data loading ([`data`]) and
//! read-out ([`eval`]). [`checkpoint`] serializes trained models.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod hsic;
pub mod kernels;
pub mod linalg;
pub mod nn;
pub mod train;

pub use checkpoint::Checkpoint;
pub use data::{Batch, Dataset};
pub use error::{Error, Result};
pub use eval::PermutationMap;
pub use hsic::{BottleneckEval, NhsicCache};
pub use kernels::KernelParams;
pub use linalg::Matrix;
pub use nn::{Activation, Architecture, Block, DenseLayer, Mode, Network};
pub use train::{Ensemble, MetricsRecord, MetricsSink, Phase, Split, TrainConfig};
