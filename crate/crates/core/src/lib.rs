//! Compressive online gradient optimization.
//!
//! Zeroth-order online projected gradient descent where each round's
//! gradient is recovered from a handful of function-value queries by
//! compressive sensing. The crate ships the CONGO-E, CONGO-Z and CONGO-B
//! estimators, the GD / GDSP / NSGD baselines, two benchmark environments
//! (a random sparse quadratic adversary and a Jackson queueing network) and
//! an experiment harness producing CSV tables and SVG plots.
//!
//! Seed-level fan-out uses rayon when the `parallel` feature is enabled (the
//! default); without it every run executes sequentially on the caller's
//! thread with identical results.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod domain;
pub mod env;
pub mod error;
pub mod harness;
pub mod optimizers;
pub mod par;
pub mod recovery;
pub mod rng;
pub mod sensing;

pub use domain::{ConstraintSet, ControlPoint, GradientEstimate, SmoothnessProfile};
pub use error::{CongoError, Result};
pub use optimizers::{run_online, OptimizerConfig, RoundRecord, Variant};
