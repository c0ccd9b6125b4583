//! Dimensional analysis with active subspaces.
//!
//! A [`QuantitySystem`] describes the independent variables and the dependent
//! quantity of an experiment through their units. [`PiBasis`] holds the
//! output scaling `w` and an orthonormal basis `W` of dimensionless groups.
//! Given an [`Experiment`] and a [`RegimeBox`], [`algorithm1`] (response
//! surface) or [`algorithm2`] (finite differences) estimate the matrix `C` of
//! averaged outer products of gradients with respect to the log groups, and
//! rotate `W` by its eigenvectors into groups ranked by relevance.
//!
//! The [`pipeflow`] module provides a reference experiment.

// `!(x > 0.0)` is used on purpose so that NaN is rejected with the bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod dimension;
pub mod error;
pub mod experiment;
pub(crate) mod linalg;
pub mod pipeflow;
pub mod quadrature;
pub mod report;
pub mod subspace;
pub mod surrogate;

pub use algorithms::{algorithm1, algorithm2, full_space_c, AlgorithmConfig, SemiEmpiricalModel};
pub use dimension::{DimensionVector, PiBasis, Quantity, QuantitySystem};
pub use error::{Category, Error, ExperimentError, Result};
pub use experiment::{CountingExperiment, Experiment, ExternalExperiment, FnExperiment};
pub use linalg::normalize_column_signs;
pub use quadrature::{Points, QuadratureRule, QuadratureSpec, RegimeBox};
pub use subspace::SubspaceResult;
pub use surrogate::ResponseSurface;
