//! Local EGOP learning: recursive anisotropic kernel regression with a
//! Mahalanobis metric learned from averaged gradient outer products.

// `!(x > 0.0)` is used on purpose throughout: it rejects NaN along with
// nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod datagen;
pub mod dataset;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod functions;
pub mod linalg;
pub mod local_regression;
pub mod par;
pub mod recurrence;
pub mod smoother;
