//! Random measurement matrices and the simultaneous-perturbation schemes that
//! turn function-value queries into compressed gradient measurements
//! `y ≈ A·∇f(x) + e`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::ControlPoint;
use crate::error::{CongoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixDistribution {
    Gaussian,
    Rademacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    entries: DMatrix<f64>,
    distribution: MatrixDistribution,
}

impl MeasurementMatrix {
    /// Wraps an explicit matrix. Every row must have nonzero norm.
    pub fn from_entries(entries: DMatrix<f64>, distribution: MatrixDistribution) -> Result<Self> {
        if let Some(i) = (0..entries.nrows()).find(|&i| entries.row(i).norm_squared() == 0.0) {
            return Err(CongoError::config(format!("measurement row {i} is zero")));
        }
        Ok(MeasurementMatrix {
            entries,
            distribution,
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn distribution(&self) -> MatrixDistribution {
        self.distribution
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Largest row norm, `G = max_i ‖a_i‖`.
    pub fn max_row_norm(&self) -> f64 {
        (0..self.rows())
            .map(|i| self.entries.row(i).norm())
            .fold(0.0, f64::max)
    }
}

/// Draws a fresh `m × d` matrix. Rows that come out identically zero are
/// redrawn.
pub fn draw_matrix<R: Rng + ?Sized>(
    m: usize,
    d: usize,
    distribution: MatrixDistribution,
    rng: &mut R,
) -> Result<MeasurementMatrix> {
    if m < 1 || m > d {
        return Err(CongoError::config(format!(
            "measurement rows must satisfy 1 <= m <= d (m = {m}, d = {d})"
        )));
    }
    let mut entries = DMatrix::zeros(m, d);
    for i in 0..m {
        loop {
            for j in 0..d {
                entries[(i, j)] = match distribution {
                    MatrixDistribution::Gaussian => rng.sample(StandardNormal),
                    MatrixDistribution::Rademacher => rademacher(rng),
                };
            }
            if entries.row(i).norm_squared() > 0.0 {
                break;
            }
            log::debug!("redrawing degenerate measurement row {i}");
        }
    }
    Ok(MeasurementMatrix {
        entries,
        distribution,
    })
}

pub(crate) fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Finite-difference step size δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParam(f64);

impl SmoothingParam {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(CongoError::config(format!(
                "smoothing parameter must be positive, got {delta}"
            )));
        }
        Ok(SmoothingParam(delta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

type EvalFn<'a> = Box<dyn FnMut(&DVector<f64>) -> f64 + 'a>;

/// Function-value oracle with a query counter.
pub struct ValueOracle<'a> {
    eval: EvalFn<'a>,
    queries: usize,
}

impl<'a> ValueOracle<'a> {
    pub fn new(eval: impl FnMut(&DVector<f64>) -> f64 + 'a) -> Self {
        ValueOracle {
            eval: Box::new(eval),
            queries: 0,
        }
    }

    pub fn query(&mut self, x: &DVector<f64>) -> f64 {
        self.queries += 1;
        (self.eval)(x)
    }

    /// Like [`query`](Self::query) but rejects NaN / infinite values.
    pub fn query_finite(&mut self, x: &DVector<f64>) -> Result<f64> {
        let value = self.query(x);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(CongoError::Measurement(format!(
                "oracle returned {value} on query {}",
                self.queries
            )))
        }
    }

    pub fn queries(&self) -> usize {
        self.queries
    }
}

impl std::fmt::Debug for ValueOracle<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ValueOracle")
            .field("queries", &self.queries)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub y: DVector<f64>,
    pub queries_used: usize,
}

/// One query per row: `y_i = (f(x + δ a_i/‖a_i‖²) − f(x))·‖a_i‖²/δ`.
/// `f(x)` is queried once and shared, `m + 1` queries in total.
pub fn measure_single_row(
    oracle: &mut ValueOracle<'_>,
    x: &ControlPoint,
    a: &MeasurementMatrix,
    delta: SmoothingParam,
) -> Result<MeasurementVector> {
    check_dims(x, a)?;
    let delta = delta.get();
    let start = oracle.queries();
    let base = oracle.query_finite(x.as_vector())?;
    let mut y = DVector::zeros(a.rows());
    for i in 0..a.rows() {
        let row = a.entries().row(i).transpose();
        let norm_sq = row.norm_squared();
        let probe = x.as_vector() + &row * (delta / norm_sq);
        let value = oracle.query_finite(&probe)?;
        y[i] = (value - base) * norm_sq / delta;
    }
    Ok(MeasurementVector {
        y,
        queries_used: oracle.queries() - start,
    })
}

/// Perturbs along `AᵀΔ` for `k` Rademacher draws Δ and averages
/// `y_i = (f(x + δ AᵀΔ/‖AᵀΔ‖²) − f(x))·‖AᵀΔ‖²/(δ Δ_i)`; `k + 1` queries.
pub fn measure_combined<R: Rng + ?Sized>(
    oracle: &mut ValueOracle<'_>,
    x: &ControlPoint,
    a: &MeasurementMatrix,
    delta: SmoothingParam,
    k: usize,
    rng: &mut R,
) -> Result<MeasurementVector> {
    check_dims(x, a)?;
    if k < 1 {
        return Err(CongoError::config(
            "combined measurement needs k >= 1 draws",
        ));
    }
    let delta = delta.get();
    let m = a.rows();
    let start = oracle.queries();
    let base = oracle.query_finite(x.as_vector())?;
    let mut sum = DVector::zeros(m);
    let mut signs = DVector::zeros(m);
    for _ in 0..k {
        let (direction, norm_sq) = loop {
            signs.iter_mut().for_each(|s| *s = rademacher(rng));
            let direction = a.entries().tr_mul(&signs);
            let norm_sq = direction.norm_squared();
            if norm_sq > 0.0 {
                break (direction, norm_sq);
            }
            log::debug!("AᵀΔ vanished; redrawing Δ");
        };
        let probe = x.as_vector() + &direction * (delta / norm_sq);
        let beta = oracle.query_finite(&probe)? - base;
        for i in 0..m {
            sum[i] += beta * norm_sq / (delta * signs[i]);
        }
    }
    Ok(MeasurementVector {
        y: sum / k as f64,
        queries_used: oracle.queries() - start,
    })
}

fn check_dims(x: &ControlPoint, a: &MeasurementMatrix) -> Result<()> {
    if x.dim() != a.cols() {
        return Err(CongoError::config(format!(
            "measurement matrix has {} columns but the control has dimension {}",
            a.cols(),
            x.dim()
        )));
    }
    Ok(())
}

/// Which recovery guarantee the theoretical row count is sized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoryVariant {
    /// Basis pursuit (CONGO-B): `2s log(ed/2s) + log(4T)`.
    BasisPursuit,
    /// CoSaMP (CONGO-Z/E): `4s log(ed/4s) + log(2T)`.
    Cosamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowCountMode {
    /// `⌈2 s ln(d/s)⌉`.
    Practical,
    Theoretical {
        horizon: usize,
        variant: TheoryVariant,
    },
}

/// Number of measurement rows for sparsity `s` in dimension `d`, clamped to
/// `[1, d]`. The theoretical constant is taken as 1.
pub fn prescribe_m(s: usize, d: usize, mode: RowCountMode) -> Result<usize> {
    if s < 1 || s > d {
        return Err(CongoError::config(format!(
            "sparsity must satisfy 1 <= s <= d (s = {s}, d = {d})"
        )));
    }
    let (s_f, d_f) = (s as f64, d as f64);
    let raw = match mode {
        RowCountMode::Practical => 2.0 * s_f * (d_f / s_f).ln(),
        RowCountMode::Theoretical { horizon, variant } => {
            let t = horizon.max(1) as f64;
            match variant {
                TheoryVariant::BasisPursuit => {
                    2.0 * s_f * (std::f64::consts::E * d_f / (2.0 * s_f)).ln() + (4.0 * t).ln()
                }
                TheoryVariant::Cosamp => {
                    4.0 * s_f * (std::f64::consts::E * d_f / (4.0 * s_f)).ln() + (2.0 * t).ln()
                }
            }
        }
    };
    Ok((raw.ceil().max(1.0) as usize).min(d))
}

/// Averaging count for combined-row measurements,
/// `⌈4(m−1)² L_f² G² ln(2mT) / (L² δ²)⌉`, at least 1.
pub fn prescribe_k(
    m: usize,
    lipschitz: f64,
    smoothness: f64,
    delta: f64,
    max_row_norm: f64,
    horizon: usize,
) -> Result<usize> {
    if m < 2 {
        return Err(CongoError::config(format!(
            "averaging count needs m >= 2, got {m}"
        )));
    }
    if !(smoothness > 0.0) || !(delta > 0.0) {
        return Err(CongoError::config(format!(
            "averaging count undefined for L = {smoothness}, delta = {delta}"
        )));
    }
    let mm1 = (m - 1) as f64;
    let k = 4.0
        * mm1
        * mm1
        * lipschitz.powi(2)
        * max_row_norm.powi(2)
        * (2.0 * m as f64 * horizon.max(1) as f64).ln()
        / (smoothness * delta).powi(2);
    Ok((k.ceil() as usize).max(1))
}
