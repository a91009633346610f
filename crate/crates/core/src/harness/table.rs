//! Run fan-out, result tables and CSV output.

use std::path::Path;

use crate::error::{CongoError, Result};
use crate::harness::spec::ExperimentSpec;
use crate::optimizers::{run_online, RunResult};
use crate::par::Fanout;

pub const RAW_HEADER: [&str; 8] = [
    "optimizer",
    "seed",
    "round",
    "cost",
    "cum_cost",
    "queries",
    "grad_error",
    "clipped",
];
pub const AGGREGATE_HEADER: [&str; 4] = ["optimizer", "round", "mean_cum_cost", "std_cum_cost"];

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub optimizer: String,
    pub seed: u64,
    pub round: usize,
    pub cost: f64,
    pub cum_cost: f64,
    pub queries: usize,
    pub grad_error: Option<f64>,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub optimizer: String,
    pub round: usize,
    pub mean_cum_cost: f64,
    /// Population standard deviation over seeds.
    pub std_cum_cost: f64,
}

/// Summary of one (optimizer, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub optimizer: String,
    pub seed: u64,
    pub cumulative_cost: f64,
    pub regret: Option<f64>,
    pub queries: usize,
    pub clipped_rounds: usize,
    pub mean_grad_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub optimizer: String,
    pub seed: u64,
    pub message: String,
}

/// Per-round results of every run, ordered by optimizer (spec order), seed
/// (spec order) and round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub optimizers: Vec<String>,
    pub rows: Vec<RawRow>,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
}

impl ResultTable {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_run(&mut self, optimizer: &str, seed: u64, run: &RunResult) {
        if !self.optimizers.iter().any(|o| o == optimizer) {
            self.optimizers.push(optimizer.to_string());
        }
        let mut cum = 0.0;
        let mut errors = Vec::new();
        for r in &run.records {
            cum += r.incurred_cost;
            errors.extend(r.grad_error);
            self.rows.push(RawRow {
                optimizer: optimizer.to_string(),
                seed,
                round: r.round,
                cost: r.incurred_cost,
                cum_cost: cum,
                queries: r.queries_used,
                grad_error: r.grad_error,
                clipped: r.grad_estimate.is_clipped(),
            });
        }
        self.runs.push(RunSummary {
            optimizer: optimizer.to_string(),
            seed,
            cumulative_cost: cum,
            regret: run.regret(),
            queries: run.records.iter().map(|r| r.queries_used).sum(),
            clipped_rounds: run
                .records
                .iter()
                .filter(|r| r.grad_estimate.is_clipped())
                .count(),
            mean_grad_error: (!errors.is_empty())
                .then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        });
    }

    /// Mean and population std of the cumulative cost over seeds, per
    /// (optimizer, round).
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out = Vec::new();
        for name in &self.optimizers {
            let mut per_round: Vec<Vec<f64>> = Vec::new();
            for row in self.rows.iter().filter(|r| &r.optimizer == name) {
                if per_round.len() < row.round {
                    per_round.resize(row.round, Vec::new());
                }
                per_round[row.round - 1].push(row.cum_cost);
            }
            for (i, values) in per_round.iter().enumerate().filter(|(_, v)| !v.is_empty()) {
                let (mean, std) = mean_std(values);
                out.push(AggregateRow {
                    optimizer: name.clone(),
                    round: i + 1,
                    mean_cum_cost: mean,
                    std_cum_cost: std,
                });
            }
        }
        out
    }

    pub fn runs_of<'a>(&'a self, optimizer: &'a str) -> impl Iterator<Item = &'a RunSummary> + 'a {
        self.runs.iter().filter(move |r| r.optimizer == optimizer)
    }

    /// Mean final cumulative cost over the seeds of one optimizer.
    pub fn mean_final_cost(&self, optimizer: &str) -> Option<f64> {
        let costs: Vec<f64> = self.runs_of(optimizer).map(|r| r.cumulative_cost).collect();
        (!costs.is_empty()).then(|| mean_std(&costs).0)
    }

    /// Mean gradient error over all rounds and seeds of one optimizer.
    pub fn mean_grad_error(&self, optimizer: &str) -> Option<f64> {
        let errs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.optimizer == optimizer)
            .filter_map(|r| r.grad_error)
            .collect();
        (!errs.is_empty()).then(|| mean_std(&errs).0)
    }

    /// Mean cumulative cost per round.
    pub fn mean_trajectory(&self, optimizer: &str) -> Vec<f64> {
        self.aggregate()
            .into_iter()
            .filter(|a| a.optimizer == optimizer)
            .map(|a| a.mean_cum_cost)
            .collect()
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every (optimizer, seed) pair. A failed run is recorded and logged;
/// the others continue.
pub fn run_experiment(spec: &ExperimentSpec, fanout: Fanout) -> Result<ResultTable> {
    spec.validate()?;
    let configs = spec.optimizer_configs()?;
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|i| spec.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = fanout.map(&jobs, |&(i, seed)| {
        let mut env = spec.environment.build(seed)?;
        run_online(&configs[i], env.as_mut(), spec.rounds, seed)
    });

    let mut table = ResultTable {
        optimizers: configs.iter().map(|c| c.label.clone()).collect(),
        ..ResultTable::default()
    };
    for (&(i, seed), result) in jobs.iter().zip(results) {
        let label = &configs[i].label;
        match result {
            Ok(run) => table.push_run(label, seed, &run),
            Err(err) => {
                log::warn!("{}: run {label} seed {seed} failed: {err}", spec.name);
                table.failures.push(RunFailure {
                    optimizer: label.clone(),
                    seed,
                    message: err.to_string(),
                });
            }
        }
    }
    Ok(table)
}

pub(crate) fn csv_error(path: &Path, err: csv::Error) -> CongoError {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => CongoError::io(path, e),
        other => CongoError::Invariant(format!("csv write to {}: {other:?}", path.display())),
    }
}

fn write_records<I>(path: &Path, header: &[&str], records: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for rec in records {
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CongoError::io(path, e))
}

/// Writes the raw per-round table.
pub fn emit_raw_csv(table: &ResultTable, path: &Path) -> Result<()> {
    if table.is_empty() {
        return Err(CongoError::config(
            "result table is empty; nothing to write",
        ));
    }
    write_records(
        path,
        &RAW_HEADER,
        table.rows.iter().map(|r| {
            vec![
                r.optimizer.clone(),
                r.seed.to_string(),
                r.round.to_string(),
                r.cost.to_string(),
                r.cum_cost.to_string(),
                r.queries.to_string(),
                r.grad_error.map(|e| e.to_string()).unwrap_or_default(),
                r.clipped.to_string(),
            ]
        }),
    )
}

/// Writes the per-round mean and std of the cumulative cost.
pub fn emit_aggregate_csv(table: &ResultTable, path: &Path) -> Result<()> {
    if table.is_empty() {
        return Err(CongoError::config(
            "result table is empty; nothing to write",
        ));
    }
    write_records(
        path,
        &AGGREGATE_HEADER,
        table.aggregate().into_iter().map(|a| {
            vec![
                a.optimizer,
                a.round.to_string(),
                a.mean_cum_cost.to_string(),
                a.std_cum_cost.to_string(),
            ]
        }),
    )
}

/// Writes `raw.csv` and `aggregate.csv` into `dir`.
pub fn emit_csv(table: &ResultTable, dir: &Path) -> Result<()> {
    if table.is_empty() {
        return Err(CongoError::config(
            "result table is empty; nothing to write",
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| CongoError::io(dir, e))?;
    emit_raw_csv(table, &dir.join("raw.csv"))?;
    emit_aggregate_csv(table, &dir.join("aggregate.csv"))
}
