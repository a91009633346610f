//! Sparse gradient recovery from rescaled measurements.
//!
//! CoSaMP backs CONGO-E and CONGO-Z. CONGO-B uses basis pursuit with an extra
//! norm cap, solved with a Chambolle–Pock primal-dual iteration.

use nalgebra::{DMatrix, DVector};

use crate::domain::GradientEstimate;
use crate::error::{CongoError, Result};
use crate::sensing::{MeasurementMatrix, MeasurementVector};

/// Entries at or below this magnitude are treated as zero during support
/// selection.
const SUPPORT_EPS: f64 = 1e-12;

/// CoSaMP stops after this many consecutive non-improving iterations.
const STALL_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecoveryMethod {
    Cosamp,
    BasisPursuit { noise_level: f64, norm_cap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryConfig {
    pub sparsity: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: RecoveryMethod,
}

impl RecoveryConfig {
    pub fn cosamp(sparsity: usize) -> Self {
        RecoveryConfig {
            sparsity,
            tolerance: 0.005,
            max_iterations: 50,
            method: RecoveryMethod::Cosamp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sparsity < 1 {
            return Err(CongoError::config("recovery sparsity must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(CongoError::config("recovery tolerance must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(CongoError::config("recovery needs at least one iteration"));
        }
        if let RecoveryMethod::BasisPursuit {
            noise_level,
            norm_cap,
        } = self.method
        {
            if !(noise_level >= 0.0) || !(norm_cap > 0.0) {
                return Err(CongoError::config(format!(
                    "basis pursuit needs noise_level >= 0 and norm_cap > 0 (got {noise_level}, {norm_cap})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    Infeasible,
    NormExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecoveryOutcome {
    Recovered(DVector<f64>),
    Rejected(RejectReason),
}

/// Scales `A` and `y` by `1/√m`.
pub fn rescale(a: &MeasurementMatrix, y: &MeasurementVector) -> (DMatrix<f64>, DVector<f64>) {
    let scale = 1.0 / (a.rows() as f64).sqrt();
    (a.entries() * scale, &y.y * scale)
}

/// Compressive Sampling Matching Pursuit.
///
/// Each iteration forms the proxy `Aᵀr`, merges its `2s` largest entries with
/// the current support, fits least squares on the merged support, prunes to
/// the `s` largest coefficients and updates the residual. Halts when
/// `‖r‖ ≤ tol·‖y‖`, after `max_iterations`, or when the residual has not
/// improved for three iterations in a row; the best iterate seen is returned.
pub fn cosamp(a: &DMatrix<f64>, y: &DVector<f64>, cfg: &RecoveryConfig) -> Result<DVector<f64>> {
    cfg.validate()?;
    if a.nrows() != y.len() {
        return Err(CongoError::config(
            "measurement matrix and vector lengths differ",
        ));
    }
    let d = a.ncols();
    let s = cfg.sparsity.min(d);
    let y_norm = y.norm();
    let target = cfg.tolerance * y_norm;

    let mut estimate = DVector::zeros(d);
    let mut residual = y.clone();
    let mut residual_norm = y_norm;
    if residual_norm <= target {
        return Ok(estimate);
    }
    let mut best = (residual_norm, estimate.clone());
    let mut stalled = 0;

    for _ in 0..cfg.max_iterations {
        let proxy = a.tr_mul(&residual);
        let mut merged = largest_indices(&proxy, 2 * s);
        merged.extend((0..d).filter(|&j| estimate[j] != 0.0));
        merged.sort_unstable();
        merged.dedup();
        if merged.is_empty() {
            break;
        }

        let sub = a.select_columns(&merged);
        let coeffs = least_squares(&sub, y);

        estimate.fill(0.0);
        for pos in largest_indices(&coeffs, s) {
            estimate[merged[pos]] = coeffs[pos];
        }
        residual = y - a * &estimate;
        let previous = residual_norm;
        residual_norm = residual.norm();

        if residual_norm < best.0 {
            best = (residual_norm, estimate.clone());
        }
        if residual_norm <= target {
            break;
        }
        if residual_norm >= previous {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(best.1)
}

/// Indices of the `count` largest-magnitude entries above [`SUPPORT_EPS`].
/// Ties break towards the lower index.
fn largest_indices(v: &DVector<f64>, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).filter(|&i| v[i].abs() > SUPPORT_EPS).collect();
    idx.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    idx.truncate(count);
    idx
}

/// Least squares via the normal equations, falling back to the SVD
/// minimum-norm solution when the system is rank deficient or wide.
fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    if a.ncols() <= a.nrows() {
        let gram = a.tr_mul(a);
        if let Some(chol) = gram.cholesky() {
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
                (lo.min(v.abs()), hi.max(v.abs()))
            });
            // Squared condition of the Gram factor; beyond ~1e12 the normal
            // equations lose too many digits.
            if lo > 0.0 && hi / lo < 1e6 {
                return chol.solve(&a.tr_mul(y));
            }
        }
    }
    min_norm_solve(a, y)
}

fn min_norm_solve(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let svd = a.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.solve(y, cutoff)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Basis pursuit with a norm cap:
/// `min ‖z‖₁  s.t.  ‖Az − y‖ ≤ noise_level,  ‖z‖ ≤ norm_cap`.
///
/// Chambolle–Pock iterations on `G(z) = ‖z‖₁ + ι{‖z‖ ≤ cap}`,
/// `F(w) = ι{‖w − y‖ ≤ noise_level}`, started from the minimum-norm solution
/// of `Az = y`. The final iterate is pulled back onto the residual constraint
/// along `A⁺`, then both constraints are checked to `tolerance`.
pub fn basis_pursuit(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_level: f64,
    norm_cap: f64,
    cfg: &RecoveryConfig,
) -> Result<RecoveryOutcome> {
    let cfg = RecoveryConfig {
        method: RecoveryMethod::BasisPursuit {
            noise_level,
            norm_cap,
        },
        ..*cfg
    };
    cfg.validate()?;
    if a.nrows() != y.len() {
        return Err(CongoError::config(
            "measurement matrix and vector lengths differ",
        ));
    }
    let d = a.ncols();
    let tol = cfg.tolerance;

    // Zero is feasible whenever the measurements are within the noise level,
    // and it has the smallest possible l1 norm.
    if y.norm() <= noise_level {
        return Ok(RecoveryOutcome::Recovered(DVector::zeros(d)));
    }

    let op_norm = a.clone().singular_values().max();
    if !(op_norm > 0.0) {
        return Ok(RecoveryOutcome::Rejected(RejectReason::Infeasible));
    }
    let step = 0.99 / op_norm;
    let pinv = match a.clone().pseudo_inverse(op_norm * f64::EPSILON * d as f64) {
        Ok(p) => p,
        Err(_) => return Ok(RecoveryOutcome::Rejected(RejectReason::Infeasible)),
    };

    let mut z = project_ball(&pinv * y, norm_cap);
    // Balance the primal and dual steps: the dual optimum has unit scale
    // while the primal one is on the order of the warm start.
    let rho = z.norm().max(1.0);
    let (tau, sigma) = (step * rho, step / rho);
    let mut z_bar = z.clone();
    let mut dual = DVector::zeros(a.nrows());
    for _ in 0..cfg.max_iterations {
        // Dual step: prox of σF* via Moreau, q − σ·P_B(q/σ).
        let q = &dual + a * &z_bar * sigma;
        let inner = project_residual_ball(&(&q / sigma), y, noise_level);
        dual = q - inner * sigma;

        // Primal step: prox of τG is soft-thresholding followed by the
        // projection onto the norm ball.
        let v = &z - a.tr_mul(&dual) * tau;
        let z_next = project_ball(soft_threshold(&v, tau), norm_cap);

        let change = (&z_next - &z).norm();
        z_bar = &z_next * 2.0 - &z;
        z = z_next;

        let resid = (a * &z - y).norm();
        if change <= tol * z.norm().max(1.0) && resid <= noise_level + tol {
            break;
        }
    }

    // Restore the residual constraint along the minimum-norm direction.
    let r = a * &z - y;
    let r_norm = r.norm();
    if r_norm > noise_level {
        z -= &pinv * r * (1.0 - noise_level / r_norm);
    }
    let z_norm = z.norm();
    if z_norm > norm_cap + tol {
        return Ok(RecoveryOutcome::Rejected(RejectReason::Infeasible));
    }
    if z_norm > norm_cap {
        z *= norm_cap / z_norm;
    }
    if (a * &z - y).norm() > noise_level + tol {
        return Ok(RecoveryOutcome::Rejected(RejectReason::Infeasible));
    }
    Ok(RecoveryOutcome::Recovered(z))
}

fn soft_threshold(v: &DVector<f64>, threshold: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - threshold).max(0.0))
}

fn project_ball(v: DVector<f64>, radius: f64) -> DVector<f64> {
    let n = v.norm();
    if n <= radius {
        v
    } else {
        v * (radius / n)
    }
}

fn project_residual_ball(w: &DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let offset = w - center;
    let n = offset.norm();
    if n <= radius {
        w.clone()
    } else {
        center + offset * (radius / n)
    }
}

/// Dispatches on the configured method.
pub fn recover(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &RecoveryConfig,
) -> Result<RecoveryOutcome> {
    match cfg.method {
        RecoveryMethod::Cosamp => cosamp(a, y, cfg).map(RecoveryOutcome::Recovered),
        RecoveryMethod::BasisPursuit {
            noise_level,
            norm_cap,
        } => basis_pursuit(a, y, noise_level, norm_cap, cfg),
    }
}

/// Replaces a rejected recovery or one whose norm exceeds `cap` by the zero
/// vector. The boundary `‖v‖ = cap` is accepted.
pub fn postprocess(raw: RecoveryOutcome, cap: f64, dim: usize) -> GradientEstimate {
    match raw {
        RecoveryOutcome::Recovered(v) if v.norm() <= cap => GradientEstimate::new(v),
        RecoveryOutcome::Recovered(_) | RecoveryOutcome::Rejected(_) => {
            GradientEstimate::clipped(dim)
        }
    }
}
