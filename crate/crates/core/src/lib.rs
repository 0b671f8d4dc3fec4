//! Risk-aware MMSE estimation: the estimator family that trades mean squared error
//! against the variance of the squared error, its efficient frontier, hedgeable
//! risk margins and the skewness functional they induce.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod functionals;
pub mod margin;
pub mod model;
pub mod numerics;
pub mod skewness;
pub mod tradeoff;

pub use error::{Error, Result};
pub use estimators::{EstimateVector, ExtendedMu};
pub use functionals::{Estimator, EvaluatedBatch, FrontierPoint, FunctionalEstimate, Probe};
pub use margin::{MarginReport, RhoOverrides, SpectralStats};
pub use model::{build_model, GenerativeModel, ModelParams, ObservationBatch, PosteriorSummary};
pub use numerics::{RngStream, SymMatrix};
pub use skewness::{RelativeSkewness, SkewnessValue};
pub use tradeoff::{FrontierCurve, LipschitzConstants};
