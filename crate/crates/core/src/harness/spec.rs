//! Experiment spec files.
//!
//! A spec is a TOML document with an `[experiment]` table, an
//! `[environment]` table tagged by `kind`, optional `[defaults]` shared by
//! every optimizer, one `[[optimizer]]` table per run series and an optional
//! `[sweep]`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::domain::SmoothnessProfile;
use crate::env::jackson::{JacksonEnvironment, JacksonScenario};
use crate::env::quadratic::{QuadraticAdversaryConfig, QuadraticEnvironment};
use crate::env::Environment;
use crate::error::{CongoError, Result};
use crate::optimizers::{LearningRateSchedule, OptimizerConfig, Variant};
use crate::sensing::{prescribe_m, RowCountMode, SmoothingParam};

/// Parses a seed list: `"0..50"`, `"0..=49"`, `"1,2,3"` or `"7"`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    let bad = || CongoError::config(format!("seeds: cannot parse '{text}'"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = text.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(CongoError::config(format!("seeds: '{text}' is empty")));
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SeedsField {
    List(Vec<u64>),
    Text(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    name: String,
    #[serde(default)]
    description: String,
    rounds: usize,
    seeds: SeedsField,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum EnvironmentSection {
    Quadratic {
        #[serde(flatten)]
        config: QuadraticAdversaryConfig,
    },
    Jackson {
        scenario: PathBuf,
        warmup_seconds: Option<f64>,
        measure_seconds: Option<f64>,
        max_events: Option<usize>,
    },
}

/// Per-optimizer settings. Unset fields fall back to `[defaults]`, then to
/// values derived from the environment.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub variant: Option<String>,
    pub label: Option<String>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    /// `k = k_multiplier · m`.
    pub k_multiplier: Option<usize>,
    pub sparsity: Option<usize>,
    pub delta: Option<f64>,
    pub learning_rate: Option<f64>,
    /// `constant`, `inverse` (`η₀ / (1 + decay·(t−1))`) or `step`.
    pub schedule: Option<String>,
    pub decay: Option<f64>,
    pub decay_period: Option<usize>,
    pub decay_factor: Option<f64>,
    pub normalize: Option<bool>,
    pub recovery_tolerance: Option<f64>,
    pub recovery_iterations: Option<usize>,
    pub lipschitz: Option<f64>,
    pub smoothness: Option<f64>,
}

impl OptimizerSettings {
    /// Fields set in `self` win over those in `base`.
    pub fn overlay(&self, base: &OptimizerSettings) -> OptimizerSettings {
        macro_rules! pick {
            ($($f:ident),*) => { OptimizerSettings { $($f: self.$f.clone().or_else(|| base.$f.clone())),* } };
        }
        pick!(
            variant,
            label,
            m,
            k,
            k_multiplier,
            sparsity,
            delta,
            learning_rate,
            schedule,
            decay,
            decay_period,
            decay_factor,
            normalize,
            recovery_tolerance,
            recovery_iterations,
            lipschitz,
            smoothness
        )
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// `m`, `k`, `sparsity`, `delta`, `env.sparsity`, `env.dimension` or
    /// `env.noise_sigma`.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Labels the optimizer-level override applies to; all when empty.
    #[serde(default)]
    pub optimizers: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    experiment: ExperimentSection,
    environment: EnvironmentSection,
    #[serde(default)]
    defaults: OptimizerSettings,
    #[serde(default)]
    optimizer: Vec<OptimizerSettings>,
    sweep: Option<SweepSpec>,
}

/// The environment an experiment runs against, with scenario files resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentSpec {
    Quadratic(QuadraticAdversaryConfig),
    Jackson(Box<JacksonScenario>),
}

impl EnvironmentSpec {
    pub fn dim(&self) -> usize {
        match self {
            EnvironmentSpec::Quadratic(c) => c.dimension,
            EnvironmentSpec::Jackson(s) => s.topology.queues,
        }
    }

    pub fn smoothness(&self) -> SmoothnessProfile {
        match self {
            EnvironmentSpec::Quadratic(c) => c.smoothness_bounds(),
            EnvironmentSpec::Jackson(s) => SmoothnessProfile {
                lipschitz: s.smoothness.lipschitz,
                smoothness: s.smoothness.smoothness,
            },
        }
    }

    /// The true sparsity, when the environment has one.
    pub fn sparsity(&self) -> Option<usize> {
        match self {
            EnvironmentSpec::Quadratic(c) => Some(c.sparsity),
            EnvironmentSpec::Jackson(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvironmentSpec::Quadratic(c) => c.validate(),
            EnvironmentSpec::Jackson(s) => s.validate(),
        }
    }

    /// A fresh environment instance for one run.
    pub fn build(&self, seed: u64) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvironmentSpec::Quadratic(c) => Box::new(QuadraticEnvironment::new(c.clone(), seed)?),
            EnvironmentSpec::Jackson(s) => Box::new(JacksonEnvironment::new((**s).clone(), seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub description: String,
    pub rounds: usize,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    pub environment: EnvironmentSpec,
    /// Settings per optimizer with `[defaults]` already applied.
    pub optimizers: Vec<OptimizerSettings>,
    pub sweep: Option<SweepSpec>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CongoError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    /// Parses a spec. Relative scenario paths resolve against the directory
    /// of `origin`.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).map_err(|e| CongoError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let environment = match file.environment {
            EnvironmentSection::Quadratic { config } => EnvironmentSpec::Quadratic(config),
            EnvironmentSection::Jackson {
                scenario,
                warmup_seconds,
                measure_seconds,
                max_events,
            } => {
                let base = origin.parent().unwrap_or(Path::new("."));
                let mut s = JacksonScenario::load(&base.join(scenario))?;
                if let Some(v) = warmup_seconds {
                    s.simulation.warmup_seconds = v;
                }
                if let Some(v) = measure_seconds {
                    s.simulation.measure_seconds = v;
                }
                if let Some(v) = max_events {
                    s.simulation.max_events = v;
                }
                EnvironmentSpec::Jackson(Box::new(s))
            }
        };
        let seeds = match file.experiment.seeds {
            SeedsField::List(v) => v,
            SeedsField::Text(t) => parse_seeds(&t)?,
        };
        let spec = ExperimentSpec {
            name: file.experiment.name,
            description: file.experiment.description,
            rounds: file.experiment.rounds,
            seeds,
            output_dir: file.experiment.output_dir,
            environment,
            optimizers: file
                .optimizer
                .iter()
                .map(|o| o.overlay(&file.defaults))
                .collect(),
            sweep: file.sweep,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(CongoError::config("experiment.rounds: must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(CongoError::config(
                "experiment.seeds: need at least one seed",
            ));
        }
        if self.optimizers.is_empty() {
            return Err(CongoError::config(
                "optimizer: need at least one [[optimizer]] table",
            ));
        }
        self.environment.validate()?;
        let configs = self.optimizer_configs()?;
        for (i, c) in configs.iter().enumerate() {
            if configs[..i].iter().any(|o| o.label == c.label) {
                return Err(CongoError::config(format!(
                    "optimizer.label: '{}' appears twice",
                    c.label
                )));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(CongoError::config("sweep.values: need at least one value"));
            }
            for label in &sweep.optimizers {
                if !configs.iter().any(|c| &c.label == label) {
                    return Err(CongoError::config(format!(
                        "sweep.optimizers: no optimizer labelled '{label}'"
                    )));
                }
            }
            for &v in &sweep.values {
                self.with_sweep_value(sweep, v)?;
            }
        }
        Ok(())
    }

    pub fn optimizer_configs(&self) -> Result<Vec<OptimizerConfig>> {
        self.optimizers
            .iter()
            .enumerate()
            .map(|(i, o)| resolve_optimizer(o, i, &self.environment))
            .collect()
    }

    /// The spec a single sweep point runs.
    pub fn with_sweep_value(&self, sweep: &SweepSpec, value: f64) -> Result<ExperimentSpec> {
        let field = |msg: &str| {
            CongoError::config(format!(
                "sweep.values: {} = {value}: {msg}",
                sweep.parameter
            ))
        };
        let as_count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(field("must be a positive integer"))
            }
        };
        let mut out = self.clone();
        out.sweep = None;
        match sweep.parameter.as_str() {
            p @ ("env.sparsity" | "env.dimension" | "env.noise_sigma") => {
                let EnvironmentSpec::Quadratic(cfg) = &mut out.environment else {
                    return Err(field("only the quadratic environment has this parameter"));
                };
                match p {
                    "env.sparsity" => cfg.sparsity = as_count()?,
                    "env.dimension" => cfg.dimension = as_count()?,
                    _ => cfg.noise_sigma = value,
                }
                out.environment
                    .validate()
                    .map_err(|e| field(&e.to_string()))?;
            }
            p @ ("m" | "k" | "sparsity" | "delta") => {
                let count = if p == "delta" { 0 } else { as_count()? };
                for (i, o) in out.optimizers.iter_mut().enumerate() {
                    let label = resolve_label(o, i)?;
                    if !sweep.optimizers.is_empty() && !sweep.optimizers.contains(&label) {
                        continue;
                    }
                    match p {
                        "m" => o.m = Some(count),
                        "k" => {
                            o.k = Some(count);
                            o.k_multiplier = None;
                        }
                        "sparsity" => o.sparsity = Some(count),
                        _ => o.delta = Some(value),
                    }
                }
            }
            other => {
                return Err(CongoError::config(format!(
                    "sweep.parameter: unknown parameter '{other}'"
                )))
            }
        }
        Ok(out)
    }
}

fn resolve_label(o: &OptimizerSettings, index: usize) -> Result<String> {
    let variant = resolve_variant(o, index)?;
    Ok(o.label
        .clone()
        .unwrap_or_else(|| variant.name().to_string()))
}

fn resolve_variant(o: &OptimizerSettings, index: usize) -> Result<Variant> {
    let name = o
        .variant
        .as_deref()
        .ok_or_else(|| CongoError::config(format!("optimizer[{index}].variant: missing")))?;
    Variant::parse(name).ok_or_else(|| {
        let known: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
        CongoError::config(format!(
            "optimizer[{index}].variant: unknown variant '{name}' (expected one of {})",
            known.join(", ")
        ))
    })
}

fn resolve_optimizer(
    o: &OptimizerSettings,
    index: usize,
    env: &EnvironmentSpec,
) -> Result<OptimizerConfig> {
    let variant = resolve_variant(o, index)?;
    let label = resolve_label(o, index)?;
    let field =
        |name: &str, msg: String| CongoError::config(format!("optimizer '{label}': {name}: {msg}"));
    let d = env.dim();

    let sparsity = match (o.sparsity, env.sparsity()) {
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) if variant.is_compressive() => {
            return Err(field("sparsity", "required for this environment".into()));
        }
        (None, None) => 1,
    };
    let m = match o.m {
        Some(m) => m,
        None if variant.is_compressive() || variant == Variant::Gdsp => {
            prescribe_m(sparsity.min(d), d, RowCountMode::Practical)
                .map_err(|e| field("m", e.to_string()))?
        }
        None => 1,
    };
    let k = match (o.k, o.k_multiplier) {
        (Some(_), Some(_)) => {
            return Err(field("k", "set either k or k_multiplier, not both".into()))
        }
        (Some(k), None) => k,
        (None, Some(c)) => c * m,
        // One-sided SPSA with the shared base value uses m + 2 queries,
        // one more than the single-row compressive variants.
        (None, None) if variant == Variant::Gdsp => m + 1,
        (None, None) => m,
    };

    let mut smoothness = env.smoothness();
    if let Some(v) = o.lipschitz {
        smoothness.lipschitz = v;
    }
    if let Some(v) = o.smoothness {
        smoothness.smoothness = v;
    }
    let smoothness = SmoothnessProfile::new(smoothness.lipschitz, smoothness.smoothness)
        .map_err(|e| field("lipschitz/smoothness", e.to_string()))?;

    let mut cfg = OptimizerConfig::new(variant, m, sparsity, smoothness)?;
    cfg.label = label.clone();
    cfg.k = k;
    if let Some(delta) = o.delta {
        cfg.delta = SmoothingParam::new(delta).map_err(|e| field("delta", e.to_string()))?;
    }
    let eta0 = o.learning_rate.unwrap_or(0.1);
    cfg.schedule = match o.schedule.as_deref().unwrap_or("constant") {
        "constant" => LearningRateSchedule::Constant { eta: eta0 },
        "inverse" => LearningRateSchedule::InverseDecay {
            eta0,
            decay: o
                .decay
                .ok_or_else(|| field("decay", "required by the inverse schedule".into()))?,
        },
        "step" => LearningRateSchedule::StepDecay {
            eta0,
            period: o
                .decay_period
                .ok_or_else(|| field("decay_period", "required by the step schedule".into()))?,
            factor: o
                .decay_factor
                .ok_or_else(|| field("decay_factor", "required by the step schedule".into()))?,
        },
        other => return Err(field("schedule", format!("unknown schedule '{other}'"))),
    };
    cfg.normalize_gradient = o.normalize.unwrap_or(false);
    cfg.recovery.sparsity = sparsity.max(1);
    if let Some(tol) = o.recovery_tolerance {
        cfg.recovery.tolerance = tol;
    }
    if let Some(it) = o.recovery_iterations {
        cfg.recovery.max_iterations = it;
    }
    cfg.validate(d)?;
    Ok(cfg)
}
