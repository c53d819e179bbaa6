//! Experiment orchestration and output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ccc_dht::churn::{self, RunOutput};
use ccc_dht::metrics::{self, fmt_g, MetricsSnapshot};

use crate::spec::{ExperimentSpec, Scenario};

pub const SPEC_FILE: &str = "resolved-spec.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

pub const SUMMARY_COLUMNS: &[&str] = &[
    "n",
    "dimension",
    "samples",
    "live_peers",
    "coverage",
    "avg_coverage",
    "avg_degree",
    "max_degree",
    "bfs_diameter_est",
    "random_path_len",
    "search_success_rate",
];

pub const CONVERGENCE_COLUMNS: &[&str] = &[
    "time",
    "live_peers",
    "avg_dimension",
    "fraction_at_majority_dim",
    "fraction_at_final_dim",
    "random_path_len",
    "random_path_failures",
];

/// Steady-state means over the stable rows of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadySummary {
    pub n: f64,
    pub dimension: u8,
    pub samples: usize,
    pub live_peers: f64,
    pub coverage: f64,
    pub avg_coverage: f64,
    pub avg_degree: f64,
    pub max_degree: usize,
    pub bfs_diameter_est: f64,
    pub random_path_len: f64,
    pub search_success_rate: f64,
}

pub fn summarize(n: f64, rows: &[MetricsSnapshot]) -> SteadySummary {
    let stable: Vec<&MetricsSnapshot> = rows.iter().filter(|r| r.stable).collect();
    let mean = |f: &dyn Fn(&MetricsSnapshot) -> f64| {
        let xs: Vec<f64> = stable
            .iter()
            .map(|r| f(r))
            .filter(|x| !x.is_nan())
            .collect();
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    SteadySummary {
        n,
        dimension: stable.last().map_or(0, |r| r.dimension),
        samples: stable.len(),
        live_peers: mean(&|r| r.live_peers as f64),
        coverage: mean(&|r| r.coverage),
        avg_coverage: mean(&|r| r.avg_coverage),
        avg_degree: mean(&|r| r.avg_degree),
        max_degree: stable.iter().map(|r| r.max_degree).max().unwrap_or(0),
        bfs_diameter_est: mean(&|r| r.bfs_diameter_est as f64),
        random_path_len: mean(&|r| r.random_path_len),
        search_success_rate: mean(&|r| r.search_success_rate),
    }
}

fn summary_row(s: &SteadySummary) -> String {
    [
        fmt_g(s.n),
        s.dimension.to_string(),
        s.samples.to_string(),
        fmt_g(s.live_peers),
        fmt_g(s.coverage),
        fmt_g(s.avg_coverage),
        fmt_g(s.avg_degree),
        s.max_degree.to_string(),
        fmt_g(s.bfs_diameter_est),
        fmt_g(s.random_path_len),
        fmt_g(s.search_success_rate),
    ]
    .join(",")
}

/// Convergence rows: the fraction of peers at the run's final majority
/// dimension alongside the per-sample majority fraction.
pub fn convergence_rows(rows: &[MetricsSnapshot]) -> Vec<String> {
    let final_dim = rows.last().map(|r| r.dimension);
    rows.iter()
        .map(|r| {
            let at_final = match final_dim {
                Some(d) if r.live_peers > 0 => {
                    *r.dims.get(&d).unwrap_or(&0) as f64 / r.live_peers as f64
                }
                _ => 0.0,
            };
            [
                fmt_g(r.time),
                r.live_peers.to_string(),
                fmt_g(r.avg_dimension),
                fmt_g(r.fraction_at_majority_dim),
                fmt_g(at_final),
                fmt_g(r.random_path_len),
                r.random_path_failures.to_string(),
            ]
            .join(",")
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_metrics(path: &Path, rows: &[MetricsSnapshot]) -> Result<()> {
    let mut w = create(path)?;
    metrics::write_csv(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

fn write_lines(path: &Path, header: &[&str], rows: &[String]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by one experiment.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub files: Vec<PathBuf>,
    pub summaries: Vec<SteadySummary>,
}

fn run_one(spec: &ExperimentSpec, n: f64) -> Result<RunOutput> {
    let config = spec.churn_config(n);
    log::info!(
        "running N = {n}, lambda = {}, horizon = {}, seed = {}",
        config.lambda,
        config.horizon,
        config.seed
    );
    churn::run(config).with_context(|| format!("simulation at N = {n} failed"))
}

/// Runs the experiment described by `spec` and writes its artifacts.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Artifacts> {
    let out = &spec.out;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut artifacts = Artifacts::default();
    let spec_path = out.join(SPEC_FILE);
    fs::write(&spec_path, spec.render())
        .with_context(|| format!("cannot write {}", spec_path.display()))?;
    artifacts.files.push(spec_path);

    if let Some(sizes) = &spec.sweep {
        // Independent single-threaded runs, one per size.
        let results: Vec<Result<RunOutput>> = std::thread::scope(|s| {
            let handles: Vec<_> = sizes
                .iter()
                .map(|&n| s.spawn(move || run_one(spec, n)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });
        let mut rows = Vec::new();
        for (&n, result) in sizes.iter().zip(results) {
            let output = result?;
            let path = out.join(format!("metrics-n{}.csv", fmt_g(n)));
            write_metrics(&path, &output.snapshots)?;
            artifacts.files.push(path);
            let summary = summarize(n, &output.snapshots);
            rows.push(summary_row(&summary));
            artifacts.summaries.push(summary);
        }
        let path = out.join(SUMMARY_FILE);
        write_lines(&path, SUMMARY_COLUMNS, &rows)?;
        artifacts.files.push(path);
        return Ok(artifacts);
    }

    let output = run_one(spec, spec.n)?;
    let path = out.join(METRICS_FILE);
    write_metrics(&path, &output.snapshots)?;
    artifacts.files.push(path);
    let summary = summarize(spec.n, &output.snapshots);
    let path = out.join(SUMMARY_FILE);
    write_lines(&path, SUMMARY_COLUMNS, &[summary_row(&summary)])?;
    artifacts.files.push(path);
    artifacts.summaries.push(summary);
    if let Scenario::RateChange { .. } = spec.scenario {
        let path = out.join(CONVERGENCE_FILE);
        write_lines(
            &path,
            CONVERGENCE_COLUMNS,
            &convergence_rows(&output.snapshots),
        )?;
        artifacts.files.push(path);
    }
    Ok(artifacts)
}
