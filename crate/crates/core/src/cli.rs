//! Command-line entry point.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{load_config, RunConfig};
use crate::experiments::{run_batch, run_compare};
use crate::fmt_float;
use crate::heuristic::{sweep, SweepOptions};
use crate::keyrate::{secure_key_rate, Regime};
use crate::milp::{build_demands, build_model, solve, solve_with_fixed_cooling, ModelOptions};
use crate::topology::{generate, NetworkGraph};

#[derive(Debug, Parser)]
#[command(name = "qkd-cooling", version, about = "QKD network cooling placement")]
struct Cli {
    /// JSON config overriding the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for independent solves.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Seed for every random choice; batches use it as their base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeChoice {
    Warm,
    Cold,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Key rate against fibre length.
    KeyrateCurve {
        #[arg(long, value_enum)]
        regime: RegimeChoice,
        #[arg(long)]
        max_km: f64,
        #[arg(long)]
        step_km: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random network with annotated capacities.
    Generate {
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimal equipping and cooling of a saved graph.
    Optimize {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        cooling_cost: f64,
        /// Comma-separated node ids to cool; cooling is then not a decision.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        fixed_cooling: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Degree-ranked cooling sweep and its cost envelope.
    Heuristic {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Critical cooling cost over a batch of random instances.
    CriticalCost {
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal against heuristic cost over a batch of random instances.
    Compare {
        /// Output directory; defaults to `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, err: impl std::fmt::Display) -> Self {
        Self {
            kind,
            message: err.to_string(),
        }
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on runtime failure and 2 on usage errors.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            let line = serde_json::json!({ "error": f.kind, "message": f.message });
            eprintln!("{line}");
            if f.kind == "usage" {
                2
            } else {
                1
            }
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))
}

fn read_graph(path: &Path) -> Result<NetworkGraph, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new("io", format!("{}: {e}", path.display())))?;
    NetworkGraph::from_json(&text).map_err(|e| Failure::new("graph", e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.jobs == 0 {
        return Err(Failure::new("usage", "--jobs must be at least 1"));
    }
    let mut config = match &cli.config {
        Some(p) => load_config(p).map_err(|e| Failure::new("config", e))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.experiment.base_seed = seed;
    }
    let warm = config.link_params(Regime::Warm);
    let cold = config.link_params(Regime::Cold);
    match cli.command {
        Command::KeyrateCurve {
            regime,
            max_km,
            step_km,
            out,
        } => {
            if !(max_km >= 0.0 && max_km.is_finite()) || !(step_km > 0.0 && step_km.is_finite()) {
                return Err(Failure::new("usage", "--max-km must be >= 0 and --step-km > 0"));
            }
            let steps = (max_km / step_km + 1e-9).floor() as usize;
            let mut csv = String::from("length_km,rate_warm_bps,rate_cold_bps\n");
            for i in 0..=steps {
                let l = i as f64 * step_km;
                let cell = |include: bool, p| -> Result<String, Failure> {
                    if !include {
                        return Ok(String::new());
                    }
                    let r = secure_key_rate(l, p).map_err(|e| Failure::new("keyrate", e))?;
                    Ok(fmt_float(r.rate_per_second))
                };
                let w = cell(regime != RegimeChoice::Cold, &warm)?;
                let c = cell(regime != RegimeChoice::Warm, &cold)?;
                let _ = writeln!(csv, "{},{w},{c}", fmt_float(l));
            }
            write_file(&out, &csv)
        }
        Command::Generate { nodes, out } => {
            let seed = cli.seed.unwrap_or(0);
            let g = generate(nodes, seed, &config.topology, &warm, &cold).map_err(|e| Failure::new("topology", e))?;
            write_file(&out, &format!("{}\n", g.to_json()))
        }
        Command::Optimize {
            graph,
            cooling_cost,
            fixed_cooling,
            out,
        } => {
            if !(cooling_cost >= 0.0 && cooling_cost.is_finite()) {
                return Err(Failure::new("usage", "--cooling-cost must be finite and >= 0"));
            }
            let g = read_graph(&graph)?;
            let k = build_demands(&g, config.demand.per_node_traffic_bps).map_err(|e| Failure::new("milp", e))?;
            let model =
                build_model(&g, &k, cooling_cost, ModelOptions::default()).map_err(|e| Failure::new("milp", e))?;
            let s = match fixed_cooling {
                Some(cooled) => solve_with_fixed_cooling(&model, &cooled, &config.solver),
                None => solve(&model, &config.solver),
            }
            .map_err(|e| Failure::new("milp", e))?;
            write_file(&out, &format!("{}\n", s.to_json()))
        }
        Command::Heuristic { graph, k_max, out } => {
            let g = read_graph(&graph)?;
            let k = build_demands(&g, config.demand.per_node_traffic_bps).map_err(|e| Failure::new("milp", e))?;
            let options = SweepOptions {
                solver: config.solver,
                jobs: cli.jobs,
            };
            let swept =
                sweep(&g, &k, k_max.unwrap_or(g.node_count()), &options).map_err(|e| Failure::new("milp", e))?;
            write_file(&out, &format!("{}\n{}", swept.links_csv(), swept.envelope().to_csv()))
        }
        Command::CriticalCost { out } => {
            require_config(&cli.config)?;
            let out = out_dir(out, &config)?;
            let batch = run_batch(&config.experiment_config(), cli.jobs).map_err(|e| Failure::new("experiment", e))?;
            prepare_dir(&out)?;
            write_file(&out.join("critical_samples.csv"), &batch.samples_csv())?;
            write_file(&out.join("critical_stats.csv"), &batch.stats_csv())?;
            write_failures(&out, &batch.failures)
        }
        Command::Compare { out } => {
            require_config(&cli.config)?;
            let out = out_dir(out, &config)?;
            let batch =
                run_compare(&config.experiment_config(), cli.jobs).map_err(|e| Failure::new("experiment", e))?;
            prepare_dir(&out)?;
            write_file(&out.join("compare.csv"), &batch.to_csv())?;
            write_failures(&out, &batch.failures)
        }
    }
}

fn require_config(config: &Option<PathBuf>) -> Result<(), Failure> {
    match config {
        Some(_) => Ok(()),
        None => Err(Failure::new("usage", "this command requires --config")),
    }
}

fn out_dir(flag: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| Failure::new("usage", "give --out or set output_dir in the config"))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::new("io", format!("{}: {e}", dir.display())))
}

fn write_failures(dir: &Path, failures: &[crate::experiments::InstanceFailure]) -> Result<(), Failure> {
    let mut csv = String::from("graph_id,message\n");
    for f in failures {
        let _ = writeln!(csv, "{},\"{}\"", f.graph_id, f.message.replace('"', "\"\""));
    }
    write_file(&dir.join("failures.csv"), &csv)
}
