//! Gradient estimators and the online projected-gradient loop.

use nalgebra::DVector;
use rand::Rng;

use crate::domain::{gd_update, ConstraintSet, ControlPoint, GradientEstimate, SmoothnessProfile};
use crate::env::Environment;
use crate::error::{CongoError, Result};
use crate::recovery::{self, RecoveryConfig, RecoveryMethod};
use crate::rng::{stream, Stream};
use crate::sensing::{
    draw_matrix, measure_combined, measure_single_row, rademacher, MatrixDistribution,
    SmoothingParam, ValueOracle,
};

/// Recovery constant for CoSaMP.
pub const COSAMP_CONSTANT: f64 = 7.21;

/// Tolerance used when checking that iterates stay feasible.
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    CongoE,
    CongoZ,
    CongoB,
    Gd,
    Gdsp,
    Nsgd,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::CongoE,
        Variant::CongoZ,
        Variant::CongoB,
        Variant::Gd,
        Variant::Gdsp,
        Variant::Nsgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::CongoE => "congo-e",
            Variant::CongoZ => "congo-z",
            Variant::CongoB => "congo-b",
            Variant::Gd => "gd",
            Variant::Gdsp => "gdsp",
            Variant::Nsgd => "nsgd",
        }
    }

    pub fn parse(name: &str) -> Option<Variant> {
        let norm = name.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "congo-e" => Some(Variant::CongoE),
            "congo-z" => Some(Variant::CongoZ),
            "congo-b" => Some(Variant::CongoB),
            "gd" => Some(Variant::Gd),
            "gdsp" | "sgdsp" => Some(Variant::Gdsp),
            "nsgd" => Some(Variant::Nsgd),
            _ => None,
        }
    }

    pub fn is_compressive(self) -> bool {
        matches!(self, Variant::CongoE | Variant::CongoZ | Variant::CongoB)
    }

    /// Oracle queries per round in dimension `d`.
    pub fn query_budget(self, m: usize, k: usize, d: usize) -> usize {
        match self {
            Variant::CongoE | Variant::CongoZ => m + 1,
            Variant::CongoB | Variant::Gdsp => k + 1,
            Variant::Nsgd => d + 1,
            Variant::Gd => 0,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningRateSchedule {
    Constant {
        eta: f64,
    },
    /// `η0 / (1 + decay·(t − 1))`.
    InverseDecay {
        eta0: f64,
        decay: f64,
    },
    /// `η0 · factor^⌊(t − 1)/period⌋`.
    StepDecay {
        eta0: f64,
        period: usize,
        factor: f64,
    },
}

impl LearningRateSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearningRateSchedule::Constant { eta } => eta > 0.0,
            LearningRateSchedule::InverseDecay { eta0, decay } => eta0 > 0.0 && decay >= 0.0,
            LearningRateSchedule::StepDecay {
                eta0,
                period,
                factor,
            } => eta0 > 0.0 && period >= 1 && factor > 0.0 && factor <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CongoError::config(format!(
                "invalid learning rate schedule {self:?}"
            )))
        }
    }

    /// Step size for round `t` (1-based).
    pub fn eta(&self, t: usize) -> f64 {
        let i = t.saturating_sub(1);
        match *self {
            LearningRateSchedule::Constant { eta } => eta,
            LearningRateSchedule::InverseDecay { eta0, decay } => eta0 / (1.0 + decay * i as f64),
            LearningRateSchedule::StepDecay {
                eta0,
                period,
                factor,
            } => eta0 * factor.powi((i / period) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub label: String,
    pub variant: Variant,
    pub delta: SmoothingParam,
    /// Measurement rows for the compressive variants.
    pub m: usize,
    /// Averaged draws for CONGO-B and GDSP.
    pub k: usize,
    pub schedule: LearningRateSchedule,
    pub smoothness: SmoothnessProfile,
    pub sparsity: usize,
    pub normalize_gradient: bool,
    /// Tolerance and iteration limit shared by both recovery methods.
    pub recovery: RecoveryConfig,
}

impl OptimizerConfig {
    pub fn new(
        variant: Variant,
        m: usize,
        sparsity: usize,
        smoothness: SmoothnessProfile,
    ) -> Result<Self> {
        Ok(OptimizerConfig {
            label: variant.name().to_string(),
            variant,
            delta: SmoothingParam::new(1e-5)?,
            m,
            k: m,
            schedule: LearningRateSchedule::Constant { eta: 0.1 },
            smoothness,
            sparsity,
            normalize_gradient: false,
            recovery: RecoveryConfig::cosamp(sparsity.max(1)),
        })
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.schedule.validate()?;
        let field = |name: &str, msg: String| {
            CongoError::config(format!("optimizer '{}': {name}: {msg}", self.label))
        };
        if self.variant.is_compressive() {
            if self.m < 1 || self.m > dim {
                return Err(field("m", format!("must be in [1, {dim}], got {}", self.m)));
            }
            if self.sparsity < 1 || self.sparsity > dim {
                return Err(field(
                    "sparsity",
                    format!("must be in [1, {dim}], got {}", self.sparsity),
                ));
            }
        }
        if matches!(self.variant, Variant::CongoB | Variant::Gdsp) && self.k < 1 {
            return Err(field("k", "must be at least 1".into()));
        }
        if !(self.recovery.tolerance > 0.0) || self.recovery.max_iterations < 1 {
            return Err(field(
                "recovery",
                "tolerance must be positive and max_iterations >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Norm cap applied after recovery.
    pub fn clipping_cap(&self) -> f64 {
        let SmoothnessProfile {
            lipschitz,
            smoothness,
        } = self.smoothness;
        let delta = self.delta.get();
        match self.variant {
            Variant::CongoB => lipschitz + 3.0 * smoothness * delta,
            _ => lipschitz + 0.5 * COSAMP_CONSTANT * smoothness * delta,
        }
    }

    pub fn query_budget(&self, dim: usize) -> usize {
        self.variant.query_budget(self.m, self.k, dim)
    }
}

/// One compressive gradient estimate. A non-finite oracle value ends the
/// measurement early and yields a clipped zero estimate.
pub fn congo_step<R: Rng + ?Sized>(
    variant: Variant,
    oracle: &mut ValueOracle<'_>,
    x: &ControlPoint,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<(GradientEstimate, usize)> {
    let d = x.dim();
    let distribution = match variant {
        Variant::CongoE | Variant::CongoB => MatrixDistribution::Gaussian,
        Variant::CongoZ => MatrixDistribution::Rademacher,
        other => {
            return Err(CongoError::config(format!(
                "{other} is not a compressive variant"
            )))
        }
    };
    let start = oracle.queries();
    let a = draw_matrix(cfg.m, d, distribution, rng)?;
    let measured = match variant {
        Variant::CongoB => measure_combined(oracle, x, &a, cfg.delta, cfg.k, rng),
        _ => measure_single_row(oracle, x, &a, cfg.delta),
    };
    let y = match measured {
        Ok(y) => y,
        Err(CongoError::Measurement(msg)) => {
            log::info!("{}: {msg}; skipping gradient step", cfg.label);
            return Ok((GradientEstimate::clipped(d), oracle.queries() - start));
        }
        Err(other) => return Err(other),
    };

    let (a_s, y_s) = recovery::rescale(&a, &y);
    let cap = cfg.clipping_cap();
    let rcfg = RecoveryConfig {
        sparsity: cfg.sparsity,
        method: match variant {
            Variant::CongoB => RecoveryMethod::BasisPursuit {
                noise_level: 3.0 * cfg.smoothness.smoothness * cfg.delta.get(),
                norm_cap: cap,
            },
            _ => RecoveryMethod::Cosamp,
        },
        ..cfg.recovery
    };
    let raw = recovery::recover(&a_s, &y_s, &rcfg)?;
    let estimate = recovery::postprocess(raw, cap, d);
    if estimate.is_clipped() {
        log::debug!("{}: recovered gradient rejected", cfg.label);
    }
    Ok((estimate, y.queries_used))
}

/// Average of `k` one-sided SPSA estimates sharing `f(x)`;
/// `ĝ_j = (f(x + δΔ) − f(x))/(δΔ_j)`. Uses `k + 1` queries.
pub fn gdsp_step<R: Rng + ?Sized>(
    oracle: &mut ValueOracle<'_>,
    x: &ControlPoint,
    cfg: &OptimizerConfig,
    rng: &mut R,
) -> Result<(GradientEstimate, usize)> {
    let d = x.dim();
    let delta = cfg.delta.get();
    let start = oracle.queries();
    let attempt = (|| -> Result<DVector<f64>> {
        let base = oracle.query_finite(x.as_vector())?;
        let mut sum = DVector::zeros(d);
        let mut signs = DVector::zeros(d);
        for _ in 0..cfg.k {
            signs.iter_mut().for_each(|s| *s = rademacher(rng));
            let diff = oracle.query_finite(&(x.as_vector() + &signs * delta))? - base;
            for j in 0..d {
                sum[j] += diff / (delta * signs[j]);
            }
        }
        Ok(sum / cfg.k.max(1) as f64)
    })();
    finish_estimate(attempt, d, oracle.queries() - start, &cfg.label)
}

/// Forward differences along each coordinate; `d + 1` queries.
pub fn nsgd_step(
    oracle: &mut ValueOracle<'_>,
    x: &ControlPoint,
    cfg: &OptimizerConfig,
) -> Result<(GradientEstimate, usize)> {
    let d = x.dim();
    let delta = cfg.delta.get();
    let start = oracle.queries();
    let attempt = (|| -> Result<DVector<f64>> {
        let base = oracle.query_finite(x.as_vector())?;
        let mut g = DVector::zeros(d);
        let mut probe = x.as_vector().clone();
        for i in 0..d {
            probe[i] += delta;
            g[i] = (oracle.query_finite(&probe)? - base) / delta;
            probe[i] = x.as_vector()[i];
        }
        Ok(g)
    })();
    finish_estimate(attempt, d, oracle.queries() - start, &cfg.label)
}

fn finish_estimate(
    attempt: Result<DVector<f64>>,
    d: usize,
    queries: usize,
    label: &str,
) -> Result<(GradientEstimate, usize)> {
    match attempt {
        Ok(g) => Ok((GradientEstimate::new(g), queries)),
        Err(CongoError::Measurement(msg)) => {
            log::info!("{label}: {msg}; skipping gradient step");
            Ok((GradientEstimate::clipped(d), queries))
        }
        Err(other) => Err(other),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub x: ControlPoint,
    pub incurred_cost: f64,
    pub queries_used: usize,
    pub grad_estimate: GradientEstimate,
    /// `‖ĝ − ∇f_t(x_t)‖` when the environment knows the true gradient.
    pub grad_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub records: Vec<RoundRecord>,
    /// `min_x Σ_t f_t(x)` over the constraint set, when computable.
    pub hindsight_cost: Option<f64>,
}

impl RunResult {
    pub fn cumulative_cost(&self) -> f64 {
        self.records.iter().map(|r| r.incurred_cost).sum()
    }

    pub fn regret(&self) -> Option<f64> {
        self.hindsight_cost
            .map(|best| self.cumulative_cost() - best)
    }
}

/// Plays `horizon` rounds against `env`.
///
/// Each round the environment reveals `f_t`, the cost `f_t(x_t)` is incurred,
/// the gradient is estimated with the configured variant and the iterate
/// takes one projected step. The environment's known gradient component, if
/// any, is added to the estimate. An unstable round skips the step and
/// applies the environment's correction instead.
pub fn run_online(
    cfg: &OptimizerConfig,
    env: &mut dyn Environment,
    horizon: usize,
    seed: u64,
) -> Result<RunResult> {
    if horizon < 1 {
        return Err(CongoError::config("horizon must be at least 1 round"));
    }
    let d = env.dim();
    cfg.validate(d)?;
    let set = env.constraint_set().clone();
    let mut rng = stream(seed, Stream::Optimizer);
    let mut x = set.project(env.initial_point().as_vector())?;
    let mut records = Vec::with_capacity(horizon);

    for t in 1..=horizon {
        check_feasible(&set, &x, t)?;
        env.begin_round(t)?;
        let incurred_cost = env.incur_cost(&x)?;
        let exact = env.exact_gradient(&x);

        let (mut estimate, queries_used) = match cfg.variant {
            Variant::Gd => {
                let g = exact.clone().ok_or_else(|| {
                    CongoError::config(format!(
                        "optimizer '{}': gd needs an exact gradient",
                        cfg.label
                    ))
                })?;
                (GradientEstimate::new(g), 0)
            }
            variant => {
                let mut oracle = env.oracle();
                match variant {
                    Variant::Gdsp => gdsp_step(&mut oracle, &x, cfg, &mut rng),
                    Variant::Nsgd => nsgd_step(&mut oracle, &x, cfg),
                    _ => congo_step(variant, &mut oracle, &x, cfg, &mut rng),
                }?
            }
        };
        if !estimate.is_clipped() {
            if let Some(known) = env.known_gradient(&x) {
                estimate = GradientEstimate::new(estimate.into_vector() + known);
            }
        }
        let grad_error = exact.as_ref().map(|g| (estimate.vector() - g).norm());

        let next = if let Some(correction) = env.take_instability() {
            estimate = GradientEstimate::clipped(d);
            set.project(&x.as_vector().add_scalar(correction))?
        } else {
            let step = if cfg.normalize_gradient && !estimate.is_clipped() {
                let n = estimate.vector().norm();
                if n > 0.0 {
                    GradientEstimate::new(estimate.vector() / n)
                } else {
                    estimate.clone()
                }
            } else {
                estimate.clone()
            };
            gd_update(&x, &step, cfg.schedule.eta(t), &set)?
        };

        records.push(RoundRecord {
            round: t,
            x: std::mem::replace(&mut x, next),
            incurred_cost,
            queries_used,
            grad_estimate: estimate,
            grad_error,
        });
    }
    check_feasible(&set, &x, horizon + 1)?;
    Ok(RunResult {
        records,
        hindsight_cost: env.hindsight_cost(),
    })
}

fn check_feasible(set: &ConstraintSet, x: &ControlPoint, t: usize) -> Result<()> {
    if set.contains(x.as_vector(), FEASIBILITY_TOL) {
        Ok(())
    } else {
        Err(CongoError::Invariant(format!(
            "iterate at round {t} left the constraint set"
        )))
    }
}
