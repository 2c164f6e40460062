//! Geometry-first classification: correlation-group features, medoid
//! prototypes, compact SWAP-test distance and angle channels, fusion scoring,
//! contrastive margin features and a small variational classifier.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod cgr;
pub mod data;
pub mod delta;
pub mod error;
pub mod fusion;
pub mod medoid;
pub mod optimizer;
pub mod pipeline;
pub mod quantum;
pub mod vqc;

pub use artifacts::{FusionArtifact, Manifest, VqcArtifact};
pub use cgr::{AnchorModel, CgrConfig, CgrFeatures, Embedding};
pub use data::{CorrelationModel, Dataset, Scaler, Splits};
pub use error::{Error, ErrorKind, Result};
pub use fusion::{FusionParams, Geometry, MetricsReport};
pub use medoid::MedoidSet;
pub use optimizer::{SearchRecord, SearchSettings};
pub use pipeline::{FeatureStage, MedoidParams};
pub use quantum::{GeomPair, GeomSource, Shots, StateVector};
pub use vqc::{VqcModel, VqcSpec};
