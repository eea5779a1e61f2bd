//! Randomized dimension reduction for fixed-design linear regression.
//!
//! The crate covers principal components regression (PCR), compressed least
//! squares (CLS) with Gaussian or Rademacher sketches, uniform column
//! subsampling and ensembles of sketched fits. Alongside the estimators it
//! evaluates the exact bias/variance decomposition of the excess risk, the
//! known upper bounds for CLS, and a cheap randomized estimator of the tail
//! energy `‖(I − P_{XR})X‖_F²`.
//!
//! # Module map
//!
//! - [`linalg`]: SVD with a fixed sign convention, truncation, projectors and
//!   minimum-norm least squares.
//! - [`sketch`]: reduction matrices and empirical JLT / subspace-embedding checks.
//! - [`regress`]: PCR, CLS and averaged fits.
//! - [`risk`]: excess-risk decomposition and bounds.
//! - [`tail`]: randomized estimation of `δ²_R`.
//! - [`ensemble`]: the averaged projector and its `η` spectrum.
//! - [`datagen`]: synthetic designs with prescribed spectra.
//! - [`pipeline`]: CSV ingestion, preprocessing, sweeps and table output.

pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod regress;
pub mod risk;
pub mod rng;
pub mod sketch;
pub mod tail;

pub use error::{Error, Result};
pub use linalg::{DesignMatrix, OrthoBasis, SvdFactors};
pub use sketch::{SketchKind, SketchMatrix, SketchSpec};
