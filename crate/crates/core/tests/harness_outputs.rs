//! End-to-end checks of the experiment harness: CSV layout, aggregation,
//! determinism, SVG structure, sweeps and failure handling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use congo::harness::{self, ExperimentSpec, ResultTable};
use congo::par::Fanout;

fn quadratic_spec(optimizers: &[&str], seeds: &str, rounds: usize, extra: &str) -> String {
    let mut text = format!(
        "[experiment]\nname = \"t\"\nrounds = {rounds}\nseeds = \"{seeds}\"\n\n\
         [environment]\nkind = \"quadratic\"\ndimension = 20\nsparsity = 3\nradius = 10.0\n\n\
         [defaults]\nlearning_rate = 0.05\n"
    );
    for v in optimizers {
        text += &format!("\n[[optimizer]]\nvariant = \"{v}\"\n");
    }
    text + extra
}

fn parse(text: &str, dir: &Path) -> ExperimentSpec {
    let path = dir.join("spec.toml");
    std::fs::write(&path, text).unwrap();
    ExperimentSpec::load(&path).unwrap()
}

fn run_to_dir(spec: &ExperimentSpec, fanout: Fanout, dir: &Path) -> ResultTable {
    let table = harness::run_experiment(spec, fanout).unwrap();
    harness::write_outputs(&table, &spec.name, dir, true).unwrap();
    table
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            headers
                .iter()
                .map(String::from)
                .zip(r.iter().map(String::from))
                .collect()
        })
        .collect()
}

#[test]
fn one_optimizer_one_seed_three_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse(&quadratic_spec(&["congo-e"], "0", 3, ""), dir.path());
    run_to_dir(&spec, Fanout::Sequential, dir.path());
    let raw = read_csv(&dir.path().join("raw.csv"));
    assert_eq!(raw.len(), 3);
    assert_eq!(raw[2]["round"], "3");
}

#[test]
fn row_counts_and_layout() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse(
        &quadratic_spec(&["gd", "congo-e"], "0..2", 5, ""),
        dir.path(),
    );
    run_to_dir(&spec, Fanout::Parallel, dir.path());
    let text = std::fs::read_to_string(dir.path().join("raw.csv")).unwrap();
    assert!(text.starts_with("optimizer,seed,round,cost,cum_cost,queries,grad_error,clipped\n"));
    let raw = read_csv(&dir.path().join("raw.csv"));
    let agg = read_csv(&dir.path().join("aggregate.csv"));
    assert_eq!(raw.len(), 20);
    assert_eq!(agg.len(), 10);
    let order: Vec<(String, String, String)> = raw
        .iter()
        .map(|r| {
            (
                r["optimizer"].clone(),
                r["seed"].clone(),
                r["round"].clone(),
            )
        })
        .collect();
    assert_eq!(order[0], ("gd".into(), "0".into(), "1".into()));
    assert_eq!(order[5], ("gd".into(), "1".into(), "1".into()));
    assert_eq!(order[10], ("congo-e".into(), "0".into(), "1".into()));
    for r in raw.iter().filter(|r| r["optimizer"] == "gd") {
        assert_eq!(r["queries"], "0");
        assert_eq!(r["grad_error"], "0");
    }
    for r in raw.iter().filter(|r| r["optimizer"] == "congo-e") {
        assert_eq!(r["queries"], "13");
    }
}

#[test]
fn cumulative_cost_is_running_sum() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse(&quadratic_spec(&["gdsp"], "3", 10, ""), dir.path());
    run_to_dir(&spec, Fanout::Sequential, dir.path());
    let mut sum = 0.0;
    for r in read_csv(&dir.path().join("raw.csv")) {
        sum += r["cost"].parse::<f64>().unwrap();
        let cum: f64 = r["cum_cost"].parse().unwrap();
        assert!((cum - sum).abs() <= 1e-9 * sum.abs().max(1.0));
    }
}

#[test]
fn aggregate_matches_independent_recompute() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse(
        &quadratic_spec(&["congo-e", "gdsp", "congo-b"], "0..4", 12, ""),
        dir.path(),
    );
    run_to_dir(&spec, Fanout::Parallel, dir.path());
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in read_csv(&dir.path().join("raw.csv")) {
        groups
            .entry((r["optimizer"].clone(), r["round"].parse().unwrap()))
            .or_default()
            .push(r["cum_cost"].parse().unwrap());
    }
    let agg = read_csv(&dir.path().join("aggregate.csv"));
    assert_eq!(agg.len(), groups.len());
    for a in agg {
        let values = &groups[&(a["optimizer"].clone(), a["round"].parse().unwrap())];
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        let (m, s): (f64, f64) = (
            a["mean_cum_cost"].parse().unwrap(),
            a["std_cum_cost"].parse().unwrap(),
        );
        assert!(
            (m - mean).abs() <= 1e-9 * mean.abs().max(1.0),
            "{m} vs {mean}"
        );
        assert!(
            (s - std).abs() <= 1e-9 * mean.abs().max(1.0),
            "{s} vs {std}"
        );
    }
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse(
        &quadratic_spec(&["congo-z", "nsgd", "gdsp"], "0..3", 8, ""),
        dir.path(),
    );
    let outputs: Vec<(Vec<u8>, Vec<u8>)> = [Fanout::Parallel, Fanout::Parallel, Fanout::Sequential]
        .into_iter()
        .enumerate()
        .map(|(i, fanout)| {
            let out = dir.path().join(format!("run{i}"));
            run_to_dir(&spec, fanout, &out);
            (
                std::fs::read(out.join("raw.csv")).unwrap(),
                std::fs::read(out.join("aggregate.csv")).unwrap(),
            )
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

fn svg_doc(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn count_class(doc: &roxmltree::Document, class: &str) -> usize {
    doc.descendants()
        .filter(|n| n.attribute("class") == Some(class))
        .count()
}

#[test]
fn svg_is_well_formed_with_one_series_per_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse(
        &quadratic_spec(
            &["gd", "gdsp", "congo-b", "congo-z", "congo-e"],
            "0..2",
            6,
            "",
        ),
        dir.path(),
    );
    run_to_dir(&spec, Fanout::Parallel, dir.path());
    let text = svg_doc(&dir.path().join("plot.svg"));
    let doc = roxmltree::Document::parse(&text).expect("well-formed XML");
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    assert_eq!(
        doc.descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .count(),
        5
    );
    assert_eq!(count_class(&doc, "band"), 5);
    let legend: Vec<&str> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("legend-entry"))
        .filter_map(|n| {
            n.descendants()
                .find(|c| c.has_tag_name("text"))
                .and_then(|t| t.text())
        })
        .collect();
    assert_eq!(legend, vec!["gd", "gdsp", "congo-b", "congo-z", "congo-e"]);
    for class in ["xlabel", "ylabel"] {
        assert_eq!(count_class(&doc, class), 1);
    }
    for band in doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("band"))
    {
        assert!(
            band.attribute("fill-opacity")
                .unwrap()
                .parse::<f64>()
                .unwrap()
                < 1.0
        );
    }
}

#[test]
fn svg_single_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let spec = parse(&quadratic_spec(&["congo-e"], "0", 4, ""), dir.path());
    run_to_dir(&spec, Fanout::Sequential, dir.path());
    let text = svg_doc(&dir.path().join("plot.svg"));
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(
        doc.descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .count(),
        1
    );
    assert_eq!(count_class(&doc, "band"), 1);
    assert_eq!(count_class(&doc, "legend-entry"), 1);
}

fn jackson_fixture(dir: &Path) -> PathBuf {
    let scenario = r#"
name = "tiny"
[topology]
queues = 4
entry = 0
routes = [[0, 1], [0, 2, 3]]
[workload]
kind = "fixed"
rate = 2.0
distribution = [0.5, 0.5]
[allocation]
lower = 1.0
upper = 20.0
initial_entry = 6.0
initial_other = 4.0
[simulation]
warmup_seconds = 5.0
measure_seconds = 5.0
[smoothness]
lipschitz = 100.0
smoothness = 10.0
"#;
    std::fs::write(dir.join("tiny.toml"), scenario).unwrap();
    let spec = r#"
[experiment]
name = "tiny-jackson"
rounds = 4
seeds = [1, 2]

[environment]
kind = "jackson"
scenario = "tiny.toml"

[defaults]
sparsity = 2
m = 3
delta = 0.5
normalize = true
learning_rate = 0.5

[[optimizer]]
variant = "congo-e"

[[optimizer]]
variant = "gd"
"#;
    let path = dir.join("spec.toml");
    std::fs::write(&path, spec).unwrap();
    path
}

#[test]
fn jackson_grad_error_is_empty_and_failed_runs_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::load(&jackson_fixture(dir.path())).unwrap();
    let table = harness::run_experiment(&spec, Fanout::Parallel).unwrap();
    // gd needs an exact gradient the queueing network cannot provide.
    assert_eq!(table.failures.len(), 2);
    assert!(table
        .failures
        .iter()
        .all(|f| f.optimizer == "gd" && f.message.contains("exact gradient")));
    assert_eq!(table.runs.len(), 2);
    harness::emit_csv(&table, dir.path()).unwrap();
    let raw = read_csv(&dir.path().join("raw.csv"));
    assert_eq!(raw.len(), 8);
    assert!(raw.iter().all(|r| r["grad_error"].is_empty()));
    assert!(raw
        .iter()
        .all(|r| r["queries"].parse::<usize>().unwrap() <= 4));
}

#[test]
fn sweep_writes_points_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = "\n[sweep]\nparameter = \"m\"\nvalues = [4, 8]\noptimizers = [\"congo-e\"]\n";
    let spec = parse(
        &quadratic_spec(&["congo-e", "gdsp"], "0..2", 3, sweep),
        dir.path(),
    );
    let points = harness::run_sweep(&spec, Fanout::Parallel).unwrap();
    assert_eq!(points.len(), 2);
    harness::write_sweep(&spec, &points, dir.path(), false).unwrap();
    for sub in ["m=4", "m=8"] {
        assert!(dir.path().join(sub).join("raw.csv").is_file());
        assert!(!dir.path().join(sub).join("plot.svg").exists());
    }
    let summary = read_csv(&dir.path().join("sweep_summary.csv"));
    assert_eq!(summary.len(), 4);
    let congo: Vec<&str> = summary
        .iter()
        .filter(|r| r["optimizer"] == "congo-e")
        .map(|r| r["mean_queries_per_round"].as_str())
        .collect();
    assert_eq!(congo, vec!["5", "9"]);
}

#[test]
fn shipped_presets_all_parse() {
    let presets = harness::list_presets().unwrap();
    let names: Vec<&str> = presets.iter().map(|p| p.name.as_str()).collect();
    for expected in [
        "fig2-left",
        "fig2-center",
        "fig2-right",
        "jackson-complex-fixed",
        "jackson-complex-var",
        "jackson-complex-vjt",
        "jackson-large-fixed",
        "jackson-large-var",
        "jackson-large-vjt",
        "m-sweep",
        "s-robustness",
        "approx-sparsity",
        "wrong-s",
    ] {
        assert!(names.contains(&expected), "missing preset {expected}");
    }
    for p in &presets {
        let spec = ExperimentSpec::load(&p.path).unwrap();
        assert!(!spec.optimizer_configs().unwrap().is_empty());
        if let Some(sweep) = &spec.sweep {
            for &v in &sweep.values {
                spec.with_sweep_value(sweep, v).unwrap();
            }
        }
    }
}
