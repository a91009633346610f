//! `congo` command-line experiment runner.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use congo::harness::{self, ExperimentSpec};
use congo::par::Fanout;

#[derive(Debug, Parser)]
#[command(name = "congo", version, about = "Run CONGO optimizer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment spec (a file path or a preset name).
    Run {
        spec: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run every point of the spec's [sweep] section.
    Sweep {
        spec: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// List the experiment presets.
    ListPresets,
    /// Parse and check a spec without running it.
    Validate { spec: String },
}

#[derive(Debug, Args)]
struct RunOpts {
    /// Seeds to run, e.g. `0..5`, `0..=4` or `1,2,3`. Overrides the spec.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory. Defaults to the spec's output_dir, else results/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the run fan-out; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
    /// Skip the SVG plot.
    #[arg(long)]
    no_plot: bool,
}

fn load(spec: &str) -> Result<(PathBuf, ExperimentSpec)> {
    let path = harness::resolve_spec_path(spec)?;
    let parsed =
        ExperimentSpec::load(&path).with_context(|| format!("invalid spec {}", path.display()))?;
    Ok((path, parsed))
}

fn prepare(spec: &str, opts: &RunOpts) -> Result<(ExperimentSpec, PathBuf, Fanout)> {
    let (_, mut parsed) = load(spec)?;
    if let Some(seeds) = &opts.seeds {
        parsed.seeds = harness::parse_seeds(seeds).context("--seeds")?;
    }
    if opts.jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    let out = opts
        .out
        .clone()
        .or_else(|| parsed.output_dir.clone())
        .unwrap_or_else(|| Path::new("results").join(&parsed.name));
    Ok((parsed, out, Fanout::from_jobs(opts.jobs)))
}

fn report_failures(table: &harness::ResultTable) {
    for f in &table.failures {
        eprintln!("run failed: {} seed {}: {}", f.optimizer, f.seed, f.message);
    }
}

fn run(spec: &str, opts: &RunOpts) -> Result<bool> {
    let (parsed, out, fanout) = prepare(spec, opts)?;
    if parsed.sweep.is_some() {
        log::warn!(
            "{}: ignoring [sweep]; use `congo sweep` to run it",
            parsed.name
        );
    }
    let table = harness::run_experiment(&parsed, fanout)?;
    report_failures(&table);
    if table.is_empty() {
        bail!("every run failed; nothing written");
    }
    harness::write_outputs(&table, &parsed.name, &out, !opts.no_plot)?;
    println!("{:<12} {:>16} {:>8}", "optimizer", "mean_cum_cost", "runs");
    for name in &table.optimizers {
        if let Some(cost) = table.mean_final_cost(name) {
            println!("{name:<12} {cost:>16.4} {:>8}", table.runs_of(name).count());
        }
    }
    println!("wrote {}", out.display());
    Ok(table.failures.is_empty())
}

fn sweep(spec: &str, opts: &RunOpts) -> Result<bool> {
    let (parsed, out, fanout) = prepare(spec, opts)?;
    let points = harness::run_sweep(&parsed, fanout)?;
    let mut clean = true;
    for p in &points {
        report_failures(&p.table);
        clean &= p.table.failures.is_empty();
    }
    harness::write_sweep(&parsed, &points, &out, !opts.no_plot)?;
    println!("wrote {} sweep points to {}", points.len(), out.display());
    Ok(clean)
}

fn list_presets() -> Result<bool> {
    let presets = harness::list_presets()?;
    if presets.is_empty() {
        println!("no presets in {}", harness::preset_dir().display());
    }
    for p in presets {
        let kind = if p.has_sweep { "sweep" } else { "run" };
        println!("{:<22} {kind:<6} {}", p.name, p.description);
    }
    Ok(true)
}

fn validate(spec: &str) -> Result<bool> {
    let (path, parsed) = load(spec)?;
    let configs = parsed.optimizer_configs()?;
    println!(
        "{}: ok ({} optimizers, {} seeds, {} rounds, dimension {})",
        path.display(),
        configs.len(),
        parsed.seeds.len(),
        parsed.rounds,
        parsed.environment.dim()
    );
    for c in &configs {
        println!(
            "  {:<12} {:<8} m={:<3} k={:<4} queries/round={}",
            c.label,
            c.variant.name(),
            c.m,
            c.k,
            c.query_budget(parsed.environment.dim())
        );
    }
    if let Some(s) = &parsed.sweep {
        println!("  sweep {} over {} values", s.parameter, s.values.len());
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { spec, opts } => run(spec, opts),
        Command::Sweep { spec, opts } => sweep(spec, opts),
        Command::ListPresets => list_presets(),
        Command::Validate { spec } => validate(spec),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
