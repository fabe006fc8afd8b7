//! Sparse linear surrogate explainers and affine transfers that relate the
//! explanations of one domain to another: a data subspace (translation), a second
//! prediction task (scaling), or a different attribute set (matrix mapping).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this module fix the common `f64` choice.

// `!(x > 0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod blackbox;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod optimize;
pub mod preprocess;
pub mod scalar;
pub mod schema;
pub mod trainer;

pub use algebra::{
    apply_affine, compose, map_factors, map_values, recover_bias, to_homogeneous, AffineTransfer, ExplainerFrame,
    HomogeneousTransform, LinearExplainer, MappingBlock, MappingPartition, TransferKind, TransferParams,
};
pub use blackbox::{train_mlp, Activation, MlpConfig, PredictorSpec};
pub use error::{Error, Result};
pub use explain::{
    explain_instance, export_ui_bundle, format_mapping_formula, format_scale, parse_scale, Explanation, FormulaMode,
    UiBundle,
};
pub use linalg::Matrix;
pub use metrics::{
    correlation_levels, faithfulness_r2, log_ape, log_unfaithfulness, log_woa, ordinal_error, relation_of_factors,
    xai_domain_gap, ResponseRecord,
};
pub use preprocess::{load_dataset, CenteredDataset, Dataset, DatasetManifest, Domain};
pub use scalar::Scalar;
pub use schema::{Attribute, AttributeSchema};
pub use trainer::{fit_single, fit_transfer, fit_transfer_with, FitOptions, TransferFit};

pub type LinearExplainerF64 = LinearExplainer<f64>;
pub type AffineTransferF64 = AffineTransfer<f64>;
pub type HomogeneousTransformF64 = HomogeneousTransform<f64>;
pub type TransferFitF64 = TransferFit<f64>;
pub type CenteredDatasetF64 = CenteredDataset<f64>;
pub type DatasetF64 = Dataset<f64>;
pub type ExplanationF64 = Explanation<f64>;
pub type MatrixF64 = Matrix<f64>;

pub type LinearExplainerF32 = LinearExplainer<f32>;
pub type AffineTransferF32 = AffineTransfer<f32>;
pub type TransferFitF32 = TransferFit<f32>;
pub type CenteredDatasetF32 = CenteredDataset<f32>;
