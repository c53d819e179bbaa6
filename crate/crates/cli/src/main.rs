use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use ccc_sim::run_experiment;
use ccc_sim::spec::{parse_file, ExperimentSpec};
use ccc_sim::verify::{run_verify, MAX_VERIFY_DIM};
use clap::Parser;

/// Churn simulator for a cube-connected-cycles DHT.
///
/// Settings come from built-in defaults, then an optional key=value file
/// (`--config`), then flags. Keys in the file use the flag names with
/// underscores, e.g. `horizon_multiple=30`.
#[derive(Debug, Parser)]
#[command(name = "ccc-sim", version)]
struct Cli {
    /// Key=value configuration file; `#` starts a comment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Expected stable network size N = lambda * mean session.
    #[arg(long)]
    n: Option<f64>,
    /// Arrival rate in peers per time unit [default: 10].
    #[arg(long)]
    lambda: Option<f64>,
    /// Session distribution: weibull:K, lognormal[:SIGMA] or exp [default: weibull:0.59].
    #[arg(long)]
    session: Option<String>,
    /// Horizon in units of N [default: 30].
    #[arg(long)]
    horizon_multiple: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Time between metric samples [default: N/10].
    #[arg(long)]
    sample_interval: Option<f64>,
    /// steady or rate_change.
    #[arg(long)]
    scenario: Option<String>,
    /// Time of the rate change.
    #[arg(long)]
    tau: Option<f64>,
    /// Stable size after the rate change.
    #[arg(long)]
    n_prime: Option<f64>,
    /// Comma-separated stable sizes to sweep.
    #[arg(long)]
    sweep: Option<String>,
    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Batch arrivals per unit cycle instead of a continuous stream.
    #[arg(long)]
    per_cycle_mode: bool,
    /// Template dimension; derived from N when omitted.
    #[arg(long)]
    dim: Option<u8>,
    /// Enable or disable dimension adjustment [default: on for rate_change].
    #[arg(long)]
    resize: Option<bool>,
    #[arg(long)]
    resize_start: Option<f64>,
    #[arg(long)]
    stable_degree: Option<f64>,
    #[arg(long)]
    buffer: Option<f64>,
    #[arg(long)]
    inspect_interval: Option<f64>,
    #[arg(long)]
    suggestion_threshold: Option<usize>,
    #[arg(long)]
    sample_size: Option<usize>,
    /// Cycle position rule on dimension change: spread or clamp [default: spread].
    #[arg(long)]
    boundary: Option<String>,
    /// Warm-up length in units of N [default: 5].
    #[arg(long)]
    warmup_multiple: Option<f64>,
    /// Inserts and searches per stable sample [default: 0].
    #[arg(long)]
    data_ops: Option<usize>,
    /// Maintain the spanning tree during the run.
    #[arg(long)]
    track_tree: bool,
    /// Check invariants every this many events; violations exit nonzero.
    #[arg(long)]
    self_check: Option<u64>,
    /// Run the oracle suite at this dimension (default 4) and exit.
    #[arg(long, num_args = 0..=1, default_missing_value = "4")]
    verify: Option<u8>,
}

impl Cli {
    fn overrides(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("n", self.n.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("session", self.session.clone());
        put(
            "horizon_multiple",
            self.horizon_multiple.map(|v| v.to_string()),
        );
        put("seed", self.seed.map(|v| v.to_string()));
        put(
            "sample_interval",
            self.sample_interval.map(|v| v.to_string()),
        );
        put("scenario", self.scenario.clone());
        put("tau", self.tau.map(|v| v.to_string()));
        put("n_prime", self.n_prime.map(|v| v.to_string()));
        put("sweep", self.sweep.clone());
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put(
            "per_cycle_mode",
            self.per_cycle_mode.then(|| "true".to_string()),
        );
        put("dim", self.dim.map(|v| v.to_string()));
        put("resize", self.resize.map(|v| v.to_string()));
        put("resize_start", self.resize_start.map(|v| v.to_string()));
        put("stable_degree", self.stable_degree.map(|v| v.to_string()));
        put("buffer", self.buffer.map(|v| v.to_string()));
        put(
            "inspect_interval",
            self.inspect_interval.map(|v| v.to_string()),
        );
        put(
            "suggestion_threshold",
            self.suggestion_threshold.map(|v| v.to_string()),
        );
        put("sample_size", self.sample_size.map(|v| v.to_string()));
        put("boundary", self.boundary.clone());
        put(
            "warmup_multiple",
            self.warmup_multiple.map(|v| v.to_string()),
        );
        put("data_ops", self.data_ops.map(|v| v.to_string()));
        put("track_tree", self.track_tree.then(|| "true".to_string()));
        put("self_check", self.self_check.map(|v| v.to_string()));
        m
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    if let Some(dim) = cli.verify {
        if !(1..=MAX_VERIFY_DIM).contains(&dim) {
            eprintln!("error: --verify dimension must lie in 1..={MAX_VERIFY_DIM}");
            return ExitCode::from(2);
        }
        let results = run_verify(dim, cli.seed.unwrap_or(1));
        for r in &results {
            println!("{r}");
        }
        return if results.iter().all(|r| r.passed) {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        };
    }

    let file = match &cli.config {
        None => BTreeMap::new(),
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            };
            match parse_file(&text) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
        }
    };
    let spec = match ExperimentSpec::resolve(file, cli.overrides()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&spec) {
        Ok(artifacts) => {
            for f in &artifacts.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
