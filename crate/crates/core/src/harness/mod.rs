//! Experiment specs, fan-out over seeds, CSV and SVG output.

mod plot;
mod spec;
mod table;

use std::path::{Path, PathBuf};

pub use plot::{emit_plot, render_svg};
pub use spec::{parse_seeds, EnvironmentSpec, ExperimentSpec, OptimizerSettings, SweepSpec};
pub use table::{
    emit_aggregate_csv, emit_csv, emit_raw_csv, mean_std, run_experiment, AggregateRow, RawRow,
    ResultTable, RunFailure, RunSummary, AGGREGATE_HEADER, RAW_HEADER,
};

use crate::error::{CongoError, Result};
use crate::par::Fanout;

/// Environment variable that overrides the preset search path.
pub const PRESET_DIR_VAR: &str = "CONGO_PRESET_DIR";

pub const SWEEP_SUMMARY_HEADER: [&str; 8] = [
    "value",
    "optimizer",
    "runs",
    "failed",
    "mean_final_cum_cost",
    "std_final_cum_cost",
    "mean_grad_error",
    "mean_queries_per_round",
];

/// Directory searched for presets: `$CONGO_PRESET_DIR`, else the `presets/`
/// directory shipped with the workspace.
pub fn preset_dir() -> PathBuf {
    match std::env::var_os(PRESET_DIR_VAR) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => {
            let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
            shipped.canonicalize().unwrap_or(shipped)
        }
    }
}

/// Resolves a spec argument: an existing path, or a preset name with or
/// without the `.toml` extension.
pub fn resolve_spec_path(name: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return Ok(direct);
    }
    let dir = preset_dir();
    for candidate in [dir.join(name), dir.join(format!("{name}.toml"))] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(CongoError::config(format!(
        "no spec file or preset named '{name}' (searched {})",
        dir.display()
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetInfo {
    pub name: String,
    pub path: PathBuf,
    pub description: String,
    pub has_sweep: bool,
}

/// Experiment presets in [`preset_dir`], sorted by name. Files that do not
/// parse as experiment specs (scenario files, for instance) are skipped.
pub fn list_presets() -> Result<Vec<PresetInfo>> {
    let dir = preset_dir();
    let entries = std::fs::read_dir(&dir).map_err(|e| CongoError::io(&dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CongoError::io(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        match ExperimentSpec::load(&path) {
            Ok(spec) => out.push(PresetInfo {
                name: path
                    .file_stem()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned(),
                description: spec.description,
                has_sweep: spec.sweep.is_some(),
                path,
            }),
            Err(err) => log::debug!("skipping {}: {err}", path.display()),
        }
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Writes `raw.csv`, `aggregate.csv` and, unless disabled, `plot.svg`.
pub fn write_outputs(table: &ResultTable, title: &str, dir: &Path, plot: bool) -> Result<()> {
    emit_csv(table, dir)?;
    if plot {
        emit_plot(table, title, &dir.join("plot.svg"))?;
    }
    Ok(())
}

/// Results of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub table: ResultTable,
}

/// Directory name for one sweep point, e.g. `m=12`.
pub fn sweep_point_dir(parameter: &str, value: f64) -> String {
    format!("{parameter}={value}")
}

/// Runs every point of the spec's sweep.
pub fn run_sweep(spec: &ExperimentSpec, fanout: Fanout) -> Result<Vec<SweepPoint>> {
    let sweep = spec
        .sweep
        .as_ref()
        .ok_or_else(|| CongoError::config(format!("{}: spec has no [sweep] section", spec.name)))?;
    sweep
        .values
        .iter()
        .map(|&value| {
            let point = spec.with_sweep_value(sweep, value)?;
            log::info!("{}: {} = {value}", spec.name, sweep.parameter);
            Ok(SweepPoint {
                value,
                table: run_experiment(&point, fanout)?,
            })
        })
        .collect()
}

/// Writes each point into its own subdirectory plus `sweep_summary.csv`.
pub fn write_sweep(
    spec: &ExperimentSpec,
    points: &[SweepPoint],
    dir: &Path,
    plot: bool,
) -> Result<()> {
    let parameter = spec
        .sweep
        .as_ref()
        .map(|s| s.parameter.as_str())
        .unwrap_or("value");
    std::fs::create_dir_all(dir).map_err(|e| CongoError::io(dir, e))?;
    let mut summary = Vec::new();
    for p in points {
        let sub = dir.join(sweep_point_dir(parameter, p.value));
        if p.table.is_empty() {
            log::warn!(
                "{}: every run at {parameter} = {} failed",
                spec.name,
                p.value
            );
        } else {
            let title = format!("{} ({parameter} = {})", spec.name, p.value);
            write_outputs(&p.table, &title, &sub, plot)?;
        }
        for name in &p.table.optimizers {
            let runs: Vec<&RunSummary> = p.table.runs_of(name).collect();
            let failed = p
                .table
                .failures
                .iter()
                .filter(|f| &f.optimizer == name)
                .count();
            let costs: Vec<f64> = runs.iter().map(|r| r.cumulative_cost).collect();
            let (mean, std) = if costs.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_std(&costs)
            };
            let queries = p
                .table
                .rows
                .iter()
                .filter(|r| &r.optimizer == name)
                .map(|r| r.queries as f64);
            let rounds = p.table.rows.iter().filter(|r| &r.optimizer == name).count();
            let mean_queries = queries.sum::<f64>() / rounds.max(1) as f64;
            summary.push(vec![
                p.value.to_string(),
                name.clone(),
                runs.len().to_string(),
                failed.to_string(),
                if costs.is_empty() {
                    String::new()
                } else {
                    mean.to_string()
                },
                if costs.is_empty() {
                    String::new()
                } else {
                    std.to_string()
                },
                p.table
                    .mean_grad_error(name)
                    .map(|e| e.to_string())
                    .unwrap_or_default(),
                mean_queries.to_string(),
            ]);
        }
    }
    let path = dir.join("sweep_summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| table::csv_error(&path, e))?;
    w.write_record(SWEEP_SUMMARY_HEADER)
        .map_err(|e| table::csv_error(&path, e))?;
    for rec in summary {
        w.write_record(&rec)
            .map_err(|e| table::csv_error(&path, e))?;
    }
    w.flush().map_err(|e| CongoError::io(&path, e))
}
