//! Batch studies over random feasible instances: critical cooling cost
//! statistics and the optimal-versus-heuristic cost comparison.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heuristic::{heuristic_cost, rank_nodes_by_degree, sweep, SweepOptions};
use crate::keyrate::Regime;
use crate::milp::{
    build_demands, build_model, carries_demand, optimal_over_costs, solve_with_fixed_cooling,
    solve_with_fixed_cooling_within, CoolingLine, DemandMatrix, MilpError, ModelOptions, PlacementModel, SolverOptions,
};
use crate::topology::{generate, NetworkGraph, TopologyError, TopologyParams};
use crate::{fmt_float, LinkModelParams};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no feasible graph with {n} nodes for instance {instance} after {attempts} attempts")]
    GenerationFailed { n: usize, instance: usize, attempts: u32 },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

/// How `L_1` is chosen for the critical cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalMode {
    /// Cool the highest-degree node.
    Heuristic,
    /// Try every single node and keep the best.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Node counts of the critical cost study.
    pub node_counts: Vec<usize>,
    pub instances: usize,
    /// Node counts of the optimal-versus-heuristic comparison.
    pub compare_node_counts: Vec<usize>,
    pub compare_instances: usize,
    pub base_seed: u64,
    pub per_node_traffic_bps: f64,
    /// Layout box, mean degree target and relay threshold.
    pub topology: TopologyParams,
    pub cooling_costs: Vec<f64>,
    pub attempt_budget: u32,
    pub critical_mode: CriticalMode,
    pub warm: LinkModelParams,
    pub cold: LinkModelParams,
    pub solver: SolverOptions,
}

/// `0, 0.5, ..., 10`
pub fn default_cooling_costs() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.5).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            node_counts: (5..=10).collect(),
            instances: 100,
            compare_node_counts: (5..=9).collect(),
            compare_instances: 20,
            base_seed: 1,
            per_node_traffic_bps: 8000.0,
            topology: TopologyParams::default(),
            cooling_costs: default_cooling_costs(),
            attempt_budget: 1000,
            critical_mode: CriticalMode::Heuristic,
            warm: LinkModelParams::table_defaults(Regime::Warm),
            cold: LinkModelParams::table_defaults(Regime::Cold),
            solver: SolverOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Parameter(m));
        if self.instances == 0 || self.compare_instances == 0 {
            return bad("instance counts must be at least 1".into());
        }
        if let Some(n) = self
            .node_counts
            .iter()
            .chain(&self.compare_node_counts)
            .find(|&&n| n < 2)
        {
            return bad(format!("node count {n} is below 2"));
        }
        if self.attempt_budget == 0 {
            return bad("attempt budget must be at least 1".into());
        }
        if let Some(c) = self.cooling_costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return bad(format!("cooling cost {c} must be finite and non-negative"));
        }
        if !(self.per_node_traffic_bps > 0.0) {
            return bad(format!(
                "per-node traffic {} must be positive",
                self.per_node_traffic_bps
            ));
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Layout seed of one generation attempt. Stable across platforms and
/// releases.
pub fn derive_seed(base: u64, n: usize, instance: usize, attempt: u32) -> u64 {
    [n as u64, instance as u64, attempt as u64]
        .into_iter()
        .fold(splitmix(base), |h, x| splitmix(h ^ x))
}

pub fn graph_id(n: usize, instance: usize) -> String {
    format!("n{n:02}-i{instance:03}")
}

/// A generated graph that can carry its demand without cooling.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph_id: String,
    pub n: usize,
    pub graph: NetworkGraph,
    pub demands: DemandMatrix,
}

/// Generates layouts from successive attempt seeds until one carries the
/// demand with every link equipped and no node cooled. Since equip is
/// binary this is exactly feasibility of the uncooled program.
pub fn feasible_instance(config: &ExperimentConfig, n: usize, instance: usize) -> Result<Instance, ExperimentError> {
    for attempt in 0..config.attempt_budget {
        let seed = derive_seed(config.base_seed, n, instance, attempt);
        let mut graph = generate(n, seed, &config.topology, &config.warm, &config.cold)?;
        let demands = build_demands(&graph, config.per_node_traffic_bps)?;
        let model = build_model(&graph, &demands, 0.0, ModelOptions::default())?;
        let all = vec![1; model.edge_count()];
        if carries_demand(&model, &all, &[])? {
            graph.meta.attempts = Some(attempt + 1);
            return Ok(Instance {
                graph_id: graph_id(n, instance),
                n,
                graph,
                demands,
            });
        }
    }
    Err(ExperimentError::GenerationFailed {
        n,
        instance,
        attempts: config.attempt_budget,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CriticalCostSample {
    pub graph_id: String,
    /// Trusted node count.
    pub n: usize,
    pub l0: u32,
    pub l1: u32,
    /// `l0 - l1`: cooling one node pays off exactly when `C_C` is below it.
    pub critical: u32,
}

fn uncooled_links(model: &PlacementModel, solver: &SolverOptions) -> Result<u32, MilpError> {
    let s = solve_with_fixed_cooling(model, &[], solver)?;
    if !s.is_optimal() {
        return Err(MilpError::Parameter("graph cannot carry its demand uncooled".into()));
    }
    Ok(s.link_count())
}

pub fn critical_cooling_cost(
    graph_id: &str,
    graph: &NetworkGraph,
    demands: &DemandMatrix,
    mode: CriticalMode,
    solver: &SolverOptions,
) -> Result<CriticalCostSample, MilpError> {
    let model = build_model(graph, demands, 0.0, ModelOptions::default())?;
    let l0 = uncooled_links(&model, solver)?;
    let candidates = match mode {
        CriticalMode::Heuristic => rank_nodes_by_degree(graph)[..1].to_vec(),
        CriticalMode::Exact => (0..graph.node_count()).collect(),
    };
    // cooling only relaxes the program, so each candidate just has to beat the best so far
    let mut l1 = l0;
    for node in candidates {
        let Some(limit) = l1.checked_sub(1) else { break };
        if let Some(s) = solve_with_fixed_cooling_within(&model, &[node], limit, solver)? {
            l1 = s.link_count();
        }
    }
    Ok(CriticalCostSample {
        graph_id: graph_id.to_string(),
        n: graph.trusted_ids().len(),
        l0,
        l1,
        critical: l0 - l1,
    })
}

/// Five-number summary with median-exclusive quartiles: `q1` and `q3` are
/// the medians of the values strictly below and above the middle position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        (v[m / 2 - 1] + v[m / 2]) / 2.0
    }
}

impl BoxStats {
    pub fn from_values(n: usize, values: &[f64]) -> Option<BoxStats> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let half = v.len() / 2;
        let (lower, upper) = if half == 0 {
            (&v[..], &v[..])
        } else {
            (&v[..half], &v[v.len() - half..])
        };
        Some(BoxStats {
            n,
            min: v[0],
            q1: median_sorted(lower),
            median: median_sorted(&v),
            q3: median_sorted(upper),
            max: v[v.len() - 1],
        })
    }
}

/// An instance that could not be processed; the batch continues without it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstanceFailure {
    pub graph_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalBatch {
    pub samples: Vec<CriticalCostSample>,
    pub stats: Vec<BoxStats>,
    pub failures: Vec<InstanceFailure>,
}

impl CriticalBatch {
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("graph_id,n,l0,l1,critical\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{},{},{}", s.graph_id, s.n, s.l0, s.l1, s.critical);
        }
        out
    }

    pub fn stats_csv(&self) -> String {
        let mut out = String::from("n,min,q1,median,q3,max\n");
        for s in &self.stats {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.n,
                fmt_float(s.min),
                fmt_float(s.q1),
                fmt_float(s.median),
                fmt_float(s.q3),
                fmt_float(s.max)
            );
        }
        out
    }
}

/// Runs `work` over every `(n, instance)` pair, on `jobs` threads when more
/// than one. Results come back in pair order either way.
fn over_instances<R: Send>(
    counts: &[usize],
    instances: usize,
    jobs: usize,
    work: impl Fn(usize, usize) -> R + Sync + Send,
) -> Result<Vec<R>, ExperimentError> {
    let pairs: Vec<(usize, usize)> = counts
        .iter()
        .flat_map(|&n| (0..instances).map(move |i| (n, i)))
        .collect();
    if jobs <= 1 {
        return Ok(pairs.iter().map(|&(n, i)| work(n, i)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Parameter(e.to_string()))?;
    Ok(pool.install(|| pairs.par_iter().map(|&(n, i)| work(n, i)).collect()))
}

/// Critical cooling cost of every configured instance with per-count
/// statistics. Output depends only on the configuration, not on `jobs`.
pub fn run_batch(config: &ExperimentConfig, jobs: usize) -> Result<CriticalBatch, ExperimentError> {
    config.validate()?;
    let results = over_instances(&config.node_counts, config.instances, jobs, |n, i| {
        let inst = feasible_instance(config, n, i)?;
        Ok::<_, ExperimentError>(critical_cooling_cost(
            &inst.graph_id,
            &inst.graph,
            &inst.demands,
            config.critical_mode,
            &config.solver,
        )?)
    })?;
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let pairs = config
        .node_counts
        .iter()
        .flat_map(|&n| (0..config.instances).map(move |i| (n, i)));
    for ((n, i), r) in pairs.zip(results) {
        match r {
            Ok(s) => samples.push(s),
            Err(e) => failures.push(InstanceFailure {
                graph_id: graph_id(n, i),
                message: e.to_string(),
            }),
        }
    }
    let stats = config
        .node_counts
        .iter()
        .filter_map(|&n| {
            let values: Vec<f64> = samples.iter().filter(|s| s.n == n).map(|s| s.critical as f64).collect();
            BoxStats::from_values(n, &values)
        })
        .collect();
    Ok(CriticalBatch {
        samples,
        stats,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparePoint {
    pub cc: f64,
    pub optimal_cost: f64,
    pub optimal_cooled: Vec<usize>,
    pub heuristic_cost: f64,
    pub heuristic_k: usize,
    /// `heuristic_cost / optimal_cost`
    pub ratio: f64,
}

/// Optimal and heuristic total cost at each cooling cost. The optimum is
/// exact over every cooled set; the heuristic's own sweep seeds the search.
pub fn compare_optimal_heuristic(
    graph: &NetworkGraph,
    demands: &DemandMatrix,
    costs: &[f64],
    solver: &SolverOptions,
) -> Result<Vec<ComparePoint>, MilpError> {
    let options = SweepOptions {
        solver: *solver,
        jobs: 1,
    };
    let swept = sweep(graph, demands, graph.node_count(), &options)?;
    let links = swept.link_counts::<f64>();
    let known: Vec<CoolingLine> = swept
        .entries
        .iter()
        .filter_map(|e| {
            e.links.map(|links| CoolingLine {
                cooled: e.cooled.clone(),
                links,
            })
        })
        .collect();
    let model = build_model(graph, demands, 0.0, ModelOptions::default())?;
    let exact = optimal_over_costs(&model, costs, &known, solver)?;
    if exact.points.len() != costs.len() {
        return Err(MilpError::Parameter(
            "graph cannot carry its demand even fully cooled".into(),
        ));
    }
    exact
        .points
        .into_iter()
        .map(|p| {
            let (heuristic, k) = heuristic_cost(&links, &p.cc)
                .ok_or_else(|| MilpError::Parameter("heuristic sweep has no feasible entry".into()))?;
            Ok(ComparePoint {
                cc: p.cc,
                optimal_cost: p.cost,
                optimal_cooled: p.cooled,
                heuristic_cost: heuristic,
                heuristic_k: k,
                ratio: heuristic / p.cost,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareCurve {
    pub graph_id: String,
    pub points: Vec<ComparePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareBatch {
    pub curves: Vec<CompareCurve>,
    pub failures: Vec<InstanceFailure>,
}

impl CompareBatch {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("graph_id,cc,optimal_cost,heuristic_cost,ratio\n");
        for c in &self.curves {
            for p in &c.points {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    c.graph_id,
                    fmt_float(p.cc),
                    fmt_float(p.optimal_cost),
                    fmt_float(p.heuristic_cost),
                    fmt_float(p.ratio)
                );
            }
        }
        out
    }
}

pub fn run_compare(config: &ExperimentConfig, jobs: usize) -> Result<CompareBatch, ExperimentError> {
    config.validate()?;
    let results = over_instances(&config.compare_node_counts, config.compare_instances, jobs, |n, i| {
        let inst = feasible_instance(config, n, i)?;
        let points = compare_optimal_heuristic(&inst.graph, &inst.demands, &config.cooling_costs, &config.solver)?;
        Ok::<_, ExperimentError>(CompareCurve {
            graph_id: inst.graph_id,
            points,
        })
    })?;
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    let pairs = config
        .compare_node_counts
        .iter()
        .flat_map(|&n| (0..config.compare_instances).map(move |i| (n, i)));
    for ((n, i), r) in pairs.zip(results) {
        match r {
            Ok(c) => curves.push(c),
            Err(e) => failures.push(InstanceFailure {
                graph_id: graph_id(n, i),
                message: e.to_string(),
            }),
        }
    }
    Ok(CompareBatch { curves, failures })
}
