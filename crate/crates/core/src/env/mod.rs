//! Benchmark environments: the random sparse quadratic adversary and the
//! Jackson queueing network.

pub mod jackson;
pub mod quadratic;

use nalgebra::DVector;

use crate::domain::{ConstraintSet, ControlPoint, SmoothnessProfile};
use crate::error::Result;
use crate::sensing::ValueOracle;

/// An online cost sequence `f_1, f_2, …` revealed one round at a time.
///
/// Randomness is keyed by the seed the environment was built with, so every
/// optimizer run against the same seed faces the same sequence of functions.
pub trait Environment: Send {
    fn dim(&self) -> usize;

    fn constraint_set(&self) -> &ConstraintSet;

    /// Bounds used for the clipping cap when an optimizer does not set its own.
    fn smoothness(&self) -> SmoothnessProfile;

    fn initial_point(&mut self) -> ControlPoint;

    /// Draws or schedules `f_t`. Called once per round before any query.
    fn begin_round(&mut self, t: usize) -> Result<()>;

    /// The cost actually paid at the played point.
    fn incur_cost(&mut self, x: &ControlPoint) -> Result<f64>;

    /// Value oracle for the part of `f_t` whose gradient must be estimated.
    fn oracle(&mut self) -> ValueOracle<'_>;

    /// Analytically known gradient component, added to every estimate.
    fn known_gradient(&self, _x: &ControlPoint) -> Option<DVector<f64>> {
        None
    }

    /// The full gradient of `f_t`, when the environment can compute it.
    fn exact_gradient(&self, _x: &ControlPoint) -> Option<DVector<f64>> {
        None
    }

    /// Returns the correction to add to every coordinate if the current round
    /// turned out unstable, clearing the flag.
    fn take_instability(&mut self) -> Option<f64> {
        None
    }

    /// `min_x Σ_t f_t(x)` over the rounds played so far, when computable.
    fn hindsight_cost(&self) -> Option<f64> {
        None
    }
}
