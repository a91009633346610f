//! Decision vectors, feasible regions and the projected gradient step.

use nalgebra::DVector;

use crate::error::{CongoError, Result};

/// The control chosen for a round. Always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoint(DVector<f64>);

impl ControlPoint {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CongoError::config("control point has non-finite entries"));
        }
        Ok(ControlPoint(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

impl AsRef<DVector<f64>> for ControlPoint {
    fn as_ref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Compact convex feasible region.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Ball {
        center: DVector<f64>,
        radius: f64,
    },
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
}

impl ConstraintSet {
    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(CongoError::config(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(ConstraintSet::Ball { center, radius })
    }

    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(DVector::zeros(dim), radius)
    }

    pub fn cube(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(CongoError::config("box bounds have different lengths"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i])) {
            return Err(CongoError::config(format!(
                "box bound {i}: lower {} is not below upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(ConstraintSet::Box { lower, upper })
    }

    pub fn uniform_box(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::cube(
            DVector::from_element(dim, lower),
            DVector::from_element(dim, upper),
        )
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Ball { center, .. } => center.len(),
            ConstraintSet::Box { lower, .. } => lower.len(),
        }
    }

    /// `sup_{x,y} ½‖x − y‖²` over the set.
    pub fn half_squared_diameter(&self) -> f64 {
        match self {
            ConstraintSet::Ball { radius, .. } => 2.0 * radius * radius,
            ConstraintSet::Box { lower, upper } => 0.5 * (upper - lower).norm_squared(),
        }
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, point: &DVector<f64>) -> Result<ControlPoint> {
        if point.len() != self.dim() {
            return Err(CongoError::config(format!(
                "point has dimension {} but the constraint set has dimension {}",
                point.len(),
                self.dim()
            )));
        }
        let projected = match self {
            ConstraintSet::Ball { center, radius } => {
                let offset = point - center;
                let dist = offset.norm();
                if dist <= *radius {
                    point.clone()
                } else {
                    center + offset * (*radius / dist)
                }
            }
            ConstraintSet::Box { lower, upper } => {
                DVector::from_fn(point.len(), |i, _| point[i].clamp(lower[i], upper[i]))
            }
        };
        ControlPoint::new(projected)
    }

    pub fn contains(&self, point: &DVector<f64>, tol: f64) -> bool {
        if point.len() != self.dim() {
            return false;
        }
        match self {
            ConstraintSet::Ball { center, radius } => (point - center).norm() <= radius + tol,
            ConstraintSet::Box { lower, upper } => point
                .iter()
                .enumerate()
                .all(|(i, &v)| v >= lower[i] - tol && v <= upper[i] + tol),
        }
    }
}

/// Known bounds on the gradient norm and Hessian operator norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessProfile {
    pub lipschitz: f64,
    pub smoothness: f64,
}

impl SmoothnessProfile {
    pub fn new(lipschitz: f64, smoothness: f64) -> Result<Self> {
        if !(lipschitz >= 0.0 && smoothness >= 0.0) {
            return Err(CongoError::config(format!(
                "smoothness bounds must be non-negative (L_f = {lipschitz}, L = {smoothness})"
            )));
        }
        Ok(SmoothnessProfile {
            lipschitz,
            smoothness,
        })
    }
}

/// A gradient estimate. When `clipped` is set the vector is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    vector: DVector<f64>,
    clipped: bool,
}

impl GradientEstimate {
    pub fn new(vector: DVector<f64>) -> Self {
        GradientEstimate {
            vector,
            clipped: false,
        }
    }

    pub fn clipped(dim: usize) -> Self {
        GradientEstimate {
            vector: DVector::zeros(dim),
            clipped: true,
        }
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.vector
    }

    pub fn is_clipped(&self) -> bool {
        self.clipped
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.vector
    }
}

/// One projected gradient descent step `P(x − η·g)`.
pub fn gd_update(
    x: &ControlPoint,
    g: &GradientEstimate,
    eta: f64,
    set: &ConstraintSet,
) -> Result<ControlPoint> {
    if !(eta > 0.0) {
        return Err(CongoError::config(format!(
            "step size must be positive, got {eta}"
        )));
    }
    if g.vector.len() != x.dim() {
        return Err(CongoError::config(
            "gradient and control point dimensions differ",
        ));
    }
    if g.clipped {
        return set.project(x.as_vector());
    }
    set.project(&(x.as_vector() - g.vector() * eta))
}
