//! Discrete-event Jackson network simulator.
//!
//! Jobs arrive as a Poisson stream, draw a type from the round's workload
//! distribution and visit that type's route of queues in order. Every queue
//! is a single FIFO server with exponential service at rate `x_i + 0.1`,
//! where `x` is the allocation being evaluated. Each evaluation simulates a
//! fresh network: a warm-up period, then a measurement window over which the
//! end-to-end sojourn times of departing jobs are averaged.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::path::Path;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp, Exp1};
use serde::Deserialize;

use crate::domain::{ConstraintSet, ControlPoint, SmoothnessProfile};
use crate::env::Environment;
use crate::error::{CongoError, Result};
use crate::rng::{seeded, stream, SimRng, Stream};
use crate::sensing::ValueOracle;

/// Service rate offset: queue `i` serves at `x_i + SERVICE_OFFSET`.
pub const SERVICE_OFFSET: f64 = 0.1;

const MAX_ROUTE_LEN: usize = 7;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub queues: usize,
    pub entry: usize,
    pub routes: Vec<Vec<usize>>,
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if self.routes.is_empty() {
            return Err(CongoError::config(
                "topology.routes: at least one job type is required",
            ));
        }
        for (j, route) in self.routes.iter().enumerate() {
            if route.is_empty() || route.len() > MAX_ROUTE_LEN {
                return Err(CongoError::config(format!(
                    "topology.routes[{j}]: length must be between 1 and {MAX_ROUTE_LEN}"
                )));
            }
            if route[0] != self.entry {
                return Err(CongoError::config(format!(
                    "topology.routes[{j}]: must start at the entry queue {}",
                    self.entry
                )));
            }
            if let Some(&q) = route.iter().find(|&&q| q >= self.queues) {
                return Err(CongoError::config(format!(
                    "topology.routes[{j}]: queue {q} out of range for {} queues",
                    self.queues
                )));
            }
        }
        Ok(())
    }

    pub fn job_types(&self) -> usize {
        self.routes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatePhase {
    /// First and last round of the phase, inclusive.
    pub rounds: (usize, usize),
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSchedule {
    Fixed {
        rate: f64,
        distribution: Vec<f64>,
    },
    VariableArrival {
        phases: Vec<RatePhase>,
        distribution: Vec<f64>,
    },
    /// Moves linearly from `initial` to `final` between the two transition
    /// rounds.
    VariableJobType {
        rate: f64,
        initial: Vec<f64>,
        #[serde(rename = "final")]
        final_distribution: Vec<f64>,
        transition: (usize, usize),
    },
}

impl WorkloadSchedule {
    pub fn validate(&self, job_types: usize) -> Result<()> {
        let check_dist = |name: &str, dist: &[f64]| -> Result<()> {
            if dist.len() != job_types {
                return Err(CongoError::config(format!(
                    "workload.{name}: expected {job_types} entries, got {}",
                    dist.len()
                )));
            }
            if dist.iter().any(|p| !(*p >= 0.0)) || (dist.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(CongoError::config(format!(
                    "workload.{name}: probabilities must be non-negative and sum to 1"
                )));
            }
            Ok(())
        };
        let check_rate = |rate: f64| -> Result<()> {
            if rate > 0.0 && rate.is_finite() {
                Ok(())
            } else {
                Err(CongoError::config(format!(
                    "workload: arrival rate must be positive, got {rate}"
                )))
            }
        };
        match self {
            WorkloadSchedule::Fixed { rate, distribution } => {
                check_rate(*rate)?;
                check_dist("distribution", distribution)
            }
            WorkloadSchedule::VariableArrival {
                phases,
                distribution,
            } => {
                if phases.is_empty() {
                    return Err(CongoError::config(
                        "workload.phases: at least one phase is required",
                    ));
                }
                for p in phases {
                    check_rate(p.rate)?;
                    if p.rounds.0 > p.rounds.1 {
                        return Err(CongoError::config(
                            "workload.phases: round range is reversed",
                        ));
                    }
                }
                check_dist("distribution", distribution)
            }
            WorkloadSchedule::VariableJobType {
                rate,
                initial,
                final_distribution,
                transition,
            } => {
                check_rate(*rate)?;
                check_dist("initial", initial)?;
                check_dist("final", final_distribution)?;
                if transition.0 > transition.1 {
                    return Err(CongoError::config(
                        "workload.transition: round range is reversed",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Arrival rate and job-type distribution for round `t` (1-based).
    pub fn at_round(&self, t: usize) -> (f64, Vec<f64>) {
        match self {
            WorkloadSchedule::Fixed { rate, distribution } => (*rate, distribution.clone()),
            WorkloadSchedule::VariableArrival {
                phases,
                distribution,
            } => {
                let rate = phases
                    .iter()
                    .find(|p| p.rounds.0 <= t && t <= p.rounds.1)
                    .or_else(|| phases.iter().rev().find(|p| p.rounds.0 <= t))
                    .unwrap_or(&phases[0])
                    .rate;
                (rate, distribution.clone())
            }
            WorkloadSchedule::VariableJobType {
                rate,
                initial,
                final_distribution,
                transition: (start, end),
            } => {
                let w = if t <= *start {
                    0.0
                } else if t >= *end {
                    1.0
                } else {
                    (t - start) as f64 / (end - start) as f64
                };
                let dist = initial
                    .iter()
                    .zip(final_distribution)
                    .map(|(a, b)| (1.0 - w) * a + w * b)
                    .collect();
                (*rate, dist)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub warmup_seconds: f64,
    pub measure_seconds: f64,
    pub resource_weight: f64,
    pub correction_factor: f64,
    /// Event budget per window; exceeding it marks the window unstable.
    pub max_events: usize,
    /// Replay the same arrival and service streams in every window of a
    /// round, so queries within a round differ only through the allocation.
    pub common_random_numbers: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            warmup_seconds: 30.0,
            measure_seconds: 10.0,
            resource_weight: 1.0,
            correction_factor: 1.0,
            max_events: 2_000_000,
            common_random_numbers: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_seconds >= 0.0 && self.measure_seconds > 0.0) {
            return Err(CongoError::config(
                "simulation: warmup_seconds must be >= 0 and measure_seconds > 0",
            ));
        }
        if !(self.resource_weight >= 0.0 && self.correction_factor >= 0.0) {
            return Err(CongoError::config(
                "simulation: resource_weight and correction_factor must be non-negative",
            ));
        }
        if self.max_events < 1 {
            return Err(CongoError::config(
                "simulation: max_events must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyObservation {
    /// Mean sojourn time of jobs departing in the measurement window.
    pub mean_latency: Option<f64>,
    pub departures: usize,
    /// External arrivals over the whole window, warm-up included.
    pub arrivals: usize,
    /// Mean age of jobs still in the network when the window closes.
    pub in_system_age: Option<f64>,
    pub unstable: bool,
}

/// One completed service, for trace-level checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceRecord {
    pub job: usize,
    pub queue: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Arrival,
    Completion(usize),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

struct Job {
    job_type: usize,
    hop: usize,
    arrived: f64,
}

/// Simulates one window on a fresh, empty network.
///
/// Allocations may be any non-negative values; the box is enforced by the
/// environment, not here.
pub fn simulate_window<R: Rng + ?Sized>(
    topology: &Topology,
    rate: f64,
    distribution: &[f64],
    allocation: &[f64],
    cfg: &SimConfig,
    rng: &mut R,
    mut trace: Option<&mut Vec<ServiceRecord>>,
) -> Result<LatencyObservation> {
    if allocation.len() != topology.queues {
        return Err(CongoError::config(format!(
            "allocation has {} entries for {} queues",
            allocation.len(),
            topology.queues
        )));
    }
    if allocation.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(CongoError::config(
            "allocations must be finite and non-negative",
        ));
    }
    let types = WeightedIndex::new(distribution)
        .map_err(|e| CongoError::config(format!("invalid job distribution: {e}")))?;
    let interarrival =
        Exp::new(rate).map_err(|e| CongoError::config(format!("invalid arrival rate: {e}")))?;
    let service_rate: Vec<f64> = allocation.iter().map(|x| x + SERVICE_OFFSET).collect();

    // Arrivals and each queue's service times come from separate streams so
    // that two allocations simulated from the same generator state see the
    // same arrivals and the same sequence of unit service demands per queue.
    let base: u64 = rng.random();
    let mut arrival_rng = SimRng::seed_from_u64(base);
    let mut service_rngs: Vec<SimRng> = (0..topology.queues)
        .map(|q| {
            let mut r = SimRng::seed_from_u64(base);
            r.set_stream(q as u64 + 1);
            r
        })
        .collect();

    let warmup = cfg.warmup_seconds;
    let horizon = cfg.warmup_seconds + cfg.measure_seconds;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<Event>, time: f64, kind: EventKind| {
        heap.push(Event { time, seq, kind });
        seq += 1;
    };

    let mut jobs: Vec<Job> = Vec::new();
    let mut live = 0usize;
    let mut queues: Vec<VecDeque<usize>> = vec![VecDeque::new(); topology.queues];
    let mut service_start = vec![0.0; topology.queues];
    let mut arrivals = 0;
    let mut departures = 0;
    let mut sojourn_sum = 0.0;
    let mut events = 0usize;
    let mut overflow = false;

    push(
        &mut heap,
        interarrival.sample(&mut arrival_rng),
        EventKind::Arrival,
    );

    while let Some(event) = heap.pop() {
        if event.time > horizon {
            break;
        }
        events += 1;
        if events > cfg.max_events {
            overflow = true;
            break;
        }
        let now = event.time;
        match event.kind {
            EventKind::Arrival => {
                arrivals += 1;
                let job_type = types.sample(&mut arrival_rng);
                let id = jobs.len();
                jobs.push(Job {
                    job_type,
                    hop: 0,
                    arrived: now,
                });
                live += 1;
                let q = topology.routes[job_type][0];
                queues[q].push_back(id);
                if queues[q].len() == 1 {
                    service_start[q] = now;
                    let d: f64 = service_rngs[q].sample(Exp1);
                    push(
                        &mut heap,
                        now + d / service_rate[q],
                        EventKind::Completion(q),
                    );
                }
                push(
                    &mut heap,
                    now + interarrival.sample(&mut arrival_rng),
                    EventKind::Arrival,
                );
            }
            EventKind::Completion(q) => {
                let id = queues[q].pop_front().expect("completion at an empty queue");
                if let Some(t) = trace.as_deref_mut() {
                    t.push(ServiceRecord {
                        job: id,
                        queue: q,
                        start: service_start[q],
                        end: now,
                    });
                }
                if !queues[q].is_empty() {
                    service_start[q] = now;
                    let d: f64 = service_rngs[q].sample(Exp1);
                    push(
                        &mut heap,
                        now + d / service_rate[q],
                        EventKind::Completion(q),
                    );
                }
                let job = &mut jobs[id];
                job.hop += 1;
                let route = &topology.routes[job.job_type];
                if job.hop == route.len() {
                    live -= 1;
                    if now >= warmup {
                        departures += 1;
                        sojourn_sum += now - job.arrived;
                    }
                } else {
                    let nq = route[job.hop];
                    queues[nq].push_back(id);
                    if queues[nq].len() == 1 {
                        service_start[nq] = now;
                        let d: f64 = service_rngs[nq].sample(Exp1);
                        push(
                            &mut heap,
                            now + d / service_rate[nq],
                            EventKind::Completion(nq),
                        );
                    }
                }
            }
        }
    }

    let end = if overflow { f64::NAN } else { horizon };
    let in_system_age = (live > 0 && !overflow).then(|| {
        let total: f64 = queues
            .iter()
            .flatten()
            .map(|&id| end - jobs[id].arrived)
            .sum();
        total / live as f64
    });
    let unstable = overflow || departures == 0;
    Ok(LatencyObservation {
        mean_latency: (!unstable).then(|| sojourn_sum / departures as f64),
        departures,
        arrivals,
        in_system_age,
        unstable,
    })
}

/// `mean_latency + w·Σx_i`; `None` for an unstable observation.
pub fn round_cost(
    observation: &LatencyObservation,
    allocation: &[f64],
    resource_weight: f64,
) -> Option<f64> {
    observation
        .mean_latency
        .map(|latency| latency + resource_weight * allocation.iter().sum::<f64>())
}

/// Adds `correction_factor` to every coordinate and projects onto `set`.
pub fn apply_instability_correction(
    allocation: &ControlPoint,
    correction_factor: f64,
    set: &ConstraintSet,
) -> Result<ControlPoint> {
    set.project(&allocation.as_vector().add_scalar(correction_factor))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationBounds {
    pub lower: f64,
    pub upper: f64,
    pub initial_entry: f64,
    pub initial_other: f64,
}

/// A complete scenario: network layout, workload, allocation range and
/// simulation settings.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacksonScenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub topology: Topology,
    pub workload: WorkloadSchedule,
    pub allocation: AllocationBounds,
    #[serde(default)]
    pub simulation: SimConfig,
    /// Bounds feeding the clipping cap.
    pub smoothness: SmoothnessSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessSpec {
    pub lipschitz: f64,
    pub smoothness: f64,
}

impl JacksonScenario {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let scenario: JacksonScenario = toml::from_str(text).map_err(|e| CongoError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CongoError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.workload.validate(self.topology.job_types())?;
        self.simulation.validate()?;
        let a = &self.allocation;
        if !(a.lower >= 0.0 && a.lower < a.upper) {
            return Err(CongoError::config("allocation: need 0 <= lower < upper"));
        }
        for (name, v) in [
            ("initial_entry", a.initial_entry),
            ("initial_other", a.initial_other),
        ] {
            if !(a.lower..=a.upper).contains(&v) {
                return Err(CongoError::config(format!(
                    "allocation.{name} lies outside [lower, upper]"
                )));
            }
        }
        SmoothnessProfile::new(self.smoothness.lipschitz, self.smoothness.smoothness)?;
        Ok(())
    }

    pub fn constraint_set(&self) -> ConstraintSet {
        ConstraintSet::uniform_box(
            self.topology.queues,
            self.allocation.lower,
            self.allocation.upper,
        )
        .expect("validated bounds")
    }

    pub fn initial_allocation(&self) -> ControlPoint {
        let a = &self.allocation;
        let v = DVector::from_fn(self.topology.queues, |i, _| {
            if i == self.topology.entry {
                a.initial_entry
            } else {
                a.initial_other
            }
        });
        ControlPoint::new(v).expect("finite bounds")
    }
}

/// The queueing network as an [`Environment`]. The oracle returns mean
/// latency only; the resource term `w·Σx` enters through the known gradient.
#[derive(Debug)]
pub struct JacksonEnvironment {
    scenario: JacksonScenario,
    set: ConstraintSet,
    rng: SimRng,
    rate: f64,
    distribution: Vec<f64>,
    unstable: bool,
    windows: usize,
    round_seed: u64,
}

impl JacksonEnvironment {
    pub fn new(scenario: JacksonScenario, seed: u64) -> Result<Self> {
        scenario.validate()?;
        let (rate, distribution) = scenario.workload.at_round(1);
        Ok(JacksonEnvironment {
            set: scenario.constraint_set(),
            rng: stream(seed, Stream::Simulator),
            rate,
            distribution,
            unstable: false,
            windows: 0,
            round_seed: 0,
            scenario,
        })
    }

    pub fn scenario(&self) -> &JacksonScenario {
        &self.scenario
    }

    /// Windows simulated so far, one per query plus one per incurred cost.
    pub fn windows_simulated(&self) -> usize {
        self.windows
    }

    fn observe(&mut self, x: &DVector<f64>) -> Result<LatencyObservation> {
        self.windows += 1;
        let mut replay;
        let rng: &mut SimRng = if self.scenario.simulation.common_random_numbers {
            replay = seeded(self.round_seed);
            &mut replay
        } else {
            &mut self.rng
        };
        let obs = simulate_window(
            &self.scenario.topology,
            self.rate,
            &self.distribution,
            x.as_slice(),
            &self.scenario.simulation,
            rng,
            None,
        )?;
        if obs.unstable {
            self.unstable = true;
        }
        Ok(obs)
    }
}

impl Environment for JacksonEnvironment {
    fn dim(&self) -> usize {
        self.scenario.topology.queues
    }

    fn constraint_set(&self) -> &ConstraintSet {
        &self.set
    }

    fn smoothness(&self) -> SmoothnessProfile {
        SmoothnessProfile {
            lipschitz: self.scenario.smoothness.lipschitz,
            smoothness: self.scenario.smoothness.smoothness,
        }
    }

    fn initial_point(&mut self) -> ControlPoint {
        self.scenario.initial_allocation()
    }

    fn begin_round(&mut self, t: usize) -> Result<()> {
        let (rate, distribution) = self.scenario.workload.at_round(t);
        self.rate = rate;
        self.distribution = distribution;
        self.unstable = false;
        if self.scenario.simulation.common_random_numbers {
            self.round_seed = self.rng.random();
        }
        Ok(())
    }

    /// An unstable window has no measured latency; the cost then uses the
    /// mean age of the jobs left in the network, a lower bound on their
    /// eventual latency.
    fn incur_cost(&mut self, x: &ControlPoint) -> Result<f64> {
        let obs = self.observe(x.as_vector())?;
        let w = self.scenario.simulation.resource_weight;
        let resources = w * x.as_vector().sum();
        Ok(match obs.mean_latency {
            Some(latency) => latency + resources,
            None => obs.in_system_age.unwrap_or(0.0) + resources,
        })
    }

    fn oracle(&mut self) -> ValueOracle<'_> {
        ValueOracle::new(move |x: &DVector<f64>| match self.observe(x) {
            Ok(obs) => obs.mean_latency.unwrap_or(f64::NAN),
            Err(err) => {
                log::warn!("simulation failed: {err}");
                f64::NAN
            }
        })
    }

    fn known_gradient(&self, _x: &ControlPoint) -> Option<DVector<f64>> {
        Some(DVector::from_element(
            self.dim(),
            self.scenario.simulation.resource_weight,
        ))
    }

    fn take_instability(&mut self) -> Option<f64> {
        std::mem::take(&mut self.unstable).then_some(self.scenario.simulation.correction_factor)
    }
}
