//! Local intrinsic dimension (LID) estimation with denoising score models.
//!
//! The crate provides:
//!
//! - [`numerics`]: counter-based random streams, dense symmetric eigensolver, k-NN search.
//! - [`manifolds`]: synthetic point clouds with known LID.
//! - [`oracle`]: closed-form Gaussian-smoothed scores for affine Gaussians and point mixtures.
//! - [`model`]: a residual MLP noise predictor with exact reverse- and forward-mode derivatives.
//! - [`estimators`]: DSM-loss, ESM, ISM, FLIPD, normal-bundle and error-bundle estimators.
//! - [`nonparametric`]: Levina–Bickel MLE and TwoNN baselines.
//! - [`bench`]: grid runner behind the `lidkit bench` command.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod estimators;
pub mod io;
pub mod manifolds;
pub mod model;
pub mod nonparametric;
pub mod numerics;
pub mod oracle;

pub use error::{LidError, Result};
pub use estimators::{
    Capabilities, DivergenceMethod, EstimatorKind, EstimatorParams, LidReport, ScoreField,
};
pub use manifolds::{Family, ManifoldSpec, PointCloud};
pub use numerics::{Matrix, RngStream, Spectrum};
