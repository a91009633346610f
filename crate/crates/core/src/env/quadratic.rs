//! Random sparse quadratic adversary.
//!
//! Each round draws `f(x) = Σ D_i x_i² + bᵀx + c` where `D` and `b` share a
//! random support of size `s`, `b_i ~ N(−1, 1)`, `D_i ~ |N(−1, 1)|` and
//! `c ~ |N(0, 1)|`. The feasible set is the ball of radius `R` around 0.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Deserialize;

use crate::domain::{ConstraintSet, ControlPoint, SmoothnessProfile};
use crate::env::Environment;
use crate::error::{CongoError, Result};
use crate::rng::{stream, SimRng, Stream};
use crate::sensing::ValueOracle;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum OffsetMode {
    Sampled,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPoint {
    /// Uniform in the feasible ball.
    UniformBall,
    Origin,
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticAdversaryConfig {
    pub dimension: usize,
    pub sparsity: usize,
    pub noise_sigma: f64,
    pub radius: f64,
    pub offset: OffsetMode,
    /// Draw the support once and keep it for every round.
    pub fixed_support: bool,
    /// Draw a single function and replay it every round.
    pub fixed_function: bool,
    /// Give off-support coordinates entries drawn as usual but scaled by `1/d`.
    pub approximate_sparsity: bool,
    pub initial_point: InitialPoint,
}

impl Default for QuadraticAdversaryConfig {
    fn default() -> Self {
        QuadraticAdversaryConfig {
            dimension: 50,
            sparsity: 5,
            noise_sigma: 0.0,
            radius: 100.0,
            offset: OffsetMode::Sampled,
            fixed_support: false,
            fixed_function: false,
            approximate_sparsity: false,
            initial_point: InitialPoint::UniformBall,
        }
    }
}

impl QuadraticAdversaryConfig {
    pub fn new(dimension: usize, sparsity: usize, radius: f64) -> Self {
        QuadraticAdversaryConfig {
            dimension,
            sparsity,
            radius,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sparsity < 1 || self.sparsity > self.dimension {
            return Err(CongoError::config(format!(
                "environment sparsity must satisfy 1 <= s <= d (s = {}, d = {})",
                self.sparsity, self.dimension
            )));
        }
        if !(self.radius > 0.0) {
            return Err(CongoError::config("environment radius must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(CongoError::config("noise_sigma must be non-negative"));
        }
        if let OffsetMode::Fixed(c) = self.offset {
            if !(c >= 0.0) {
                return Err(CongoError::config("fixed offset must be non-negative"));
            }
        }
        if let InitialPoint::Point(p) = &self.initial_point {
            if p.len() != self.dimension {
                return Err(CongoError::config("initial point has the wrong dimension"));
            }
        }
        Ok(())
    }

    /// Expected-value bounds `L_f = R√(2 ln s) + 2√s` and `L = √(2 ln s)`,
    /// with `s` floored at 2.
    pub fn smoothness_bounds(&self) -> SmoothnessProfile {
        let s = self.sparsity.max(2) as f64;
        let l = (2.0 * s.ln()).sqrt();
        SmoothnessProfile {
            lipschitz: self.radius * l + 2.0 * s.sqrt(),
            smoothness: l,
        }
    }
}

/// `f(x) = Σ D_i x_i² + bᵀx + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFunction {
    pub diag: DVector<f64>,
    pub linear: DVector<f64>,
    pub offset: f64,
}

impl QuadraticFunction {
    /// Draws one round's function. `support` overrides the random support.
    pub fn sample<R: Rng + ?Sized>(
        cfg: &QuadraticAdversaryConfig,
        support: Option<&[usize]>,
        rng: &mut R,
    ) -> Self {
        let d = cfg.dimension;
        let shifted: Normal<f64> = Normal::new(-1.0, 1.0).expect("unit variance");
        let drawn;
        let support = match support {
            Some(s) => s,
            None => {
                drawn = sample(rng, d, cfg.sparsity).into_vec();
                &drawn
            }
        };
        let mut diag = DVector::zeros(d);
        let mut linear = DVector::zeros(d);
        for &i in support {
            linear[i] = shifted.sample(rng);
            diag[i] = shifted.sample(rng).abs();
        }
        if cfg.approximate_sparsity {
            let scale = 1.0 / d as f64;
            for i in 0..d {
                if !support.contains(&i) {
                    linear[i] = scale * shifted.sample(rng);
                    diag[i] = scale * shifted.sample(rng).abs();
                }
            }
        }
        let offset = match cfg.offset {
            OffsetMode::Sampled => rng.sample::<f64, _>(StandardNormal).abs(),
            OffsetMode::Fixed(c) => c,
        };
        QuadraticFunction {
            diag,
            linear,
            offset,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.diag
            .iter()
            .zip(x.iter())
            .map(|(d, v)| d * v * v)
            .sum::<f64>()
            + self.linear.dot(x)
            + self.offset
    }

    /// Value plus `N(0, σ²)` noise.
    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        noise_sigma: f64,
        rng: &mut R,
    ) -> f64 {
        let noise = if noise_sigma > 0.0 {
            noise_sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        self.value(x) + noise
    }

    /// `2 D∘x + b`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.diag.component_mul(x) * 2.0 + &self.linear
    }
}

/// Minimises `Σ D_i x_i² + bᵀx + c` over `‖x‖ ≤ R` (all `D_i ≥ 0`).
///
/// The minimiser is `x_i = −b_i / (2(D_i + λ))` for the smallest `λ ≥ 0`
/// keeping it inside the ball; `λ` is found by bisection.
pub fn minimize_over_ball(f: &QuadraticFunction, radius: f64) -> (DVector<f64>, f64) {
    let point = |lambda: f64| {
        DVector::from_fn(f.diag.len(), |i, _| {
            let denom = 2.0 * (f.diag[i] + lambda);
            if f.linear[i] == 0.0 || denom <= 0.0 {
                0.0
            } else {
                -f.linear[i] / denom
            }
        })
    };
    let unbounded = (0..f.diag.len()).any(|i| f.diag[i] <= 0.0 && f.linear[i] != 0.0);
    let free = point(0.0);
    if !unbounded && free.norm() <= radius {
        let v = f.value(&free);
        return (free, v);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while point(hi).norm() > radius {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if point(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = point(hi);
    let v = f.value(&x);
    (x, v)
}

/// The quadratic adversary as an [`Environment`].
#[derive(Debug)]
pub struct QuadraticEnvironment {
    cfg: QuadraticAdversaryConfig,
    set: ConstraintSet,
    env_rng: SimRng,
    noise_rng: SimRng,
    init_rng: SimRng,
    support: Option<Vec<usize>>,
    current: Option<QuadraticFunction>,
    total: QuadraticFunction,
}

impl QuadraticEnvironment {
    pub fn new(cfg: QuadraticAdversaryConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dimension;
        let set = ConstraintSet::centered_ball(d, cfg.radius)?;
        let mut env_rng = stream(seed, Stream::Environment);
        let support = cfg
            .fixed_support
            .then(|| sample(&mut env_rng, d, cfg.sparsity).into_vec());
        Ok(QuadraticEnvironment {
            set,
            env_rng,
            noise_rng: stream(seed, Stream::Noise),
            init_rng: stream(seed, Stream::Initialization),
            support,
            current: None,
            total: QuadraticFunction {
                diag: DVector::zeros(d),
                linear: DVector::zeros(d),
                offset: 0.0,
            },
            cfg,
        })
    }

    pub fn config(&self) -> &QuadraticAdversaryConfig {
        &self.cfg
    }

    pub fn current(&self) -> Option<&QuadraticFunction> {
        self.current.as_ref()
    }

    fn current_or_panic(&self) -> &QuadraticFunction {
        self.current
            .as_ref()
            .expect("begin_round must be called before querying")
    }
}

impl Environment for QuadraticEnvironment {
    fn dim(&self) -> usize {
        self.cfg.dimension
    }

    fn constraint_set(&self) -> &ConstraintSet {
        &self.set
    }

    fn smoothness(&self) -> SmoothnessProfile {
        self.cfg.smoothness_bounds()
    }

    fn initial_point(&mut self) -> ControlPoint {
        let d = self.cfg.dimension;
        let v = match &self.cfg.initial_point {
            InitialPoint::Origin => DVector::zeros(d),
            InitialPoint::Point(p) => DVector::from_column_slice(p),
            InitialPoint::UniformBall => {
                let rng = &mut self.init_rng;
                let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let r = self.cfg.radius * rng.random::<f64>().powf(1.0 / d as f64);
                let n = dir.norm();
                if n > 0.0 {
                    dir * (r / n)
                } else {
                    DVector::zeros(d)
                }
            }
        };
        ControlPoint::new(v).expect("initial point is finite")
    }

    fn begin_round(&mut self, _t: usize) -> Result<()> {
        let f = match (&self.current, self.cfg.fixed_function) {
            (Some(f), true) => f.clone(),
            _ => QuadraticFunction::sample(&self.cfg, self.support.as_deref(), &mut self.env_rng),
        };
        self.total.diag += &f.diag;
        self.total.linear += &f.linear;
        self.total.offset += f.offset;
        self.current = Some(f);
        Ok(())
    }

    fn incur_cost(&mut self, x: &ControlPoint) -> Result<f64> {
        Ok(self.current_or_panic().value(x.as_vector()))
    }

    fn oracle(&mut self) -> ValueOracle<'_> {
        let f = self
            .current
            .as_ref()
            .expect("begin_round must be called before querying");
        let sigma = self.cfg.noise_sigma;
        let rng = &mut self.noise_rng;
        ValueOracle::new(move |x: &DVector<f64>| f.evaluate(x, sigma, rng))
    }

    fn exact_gradient(&self, x: &ControlPoint) -> Option<DVector<f64>> {
        self.current.as_ref().map(|f| f.gradient(x.as_vector()))
    }

    fn hindsight_cost(&self) -> Option<f64> {
        self.current.as_ref()?;
        Some(minimize_over_ball(&self.total, self.cfg.radius).1)
    }
}
