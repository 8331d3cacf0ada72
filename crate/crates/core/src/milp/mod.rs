//! Cost-minimal link equipping and cooling placement as a mixed-integer
//! multi-commodity flow program.
//!
//! Variables are the per-commodity key flows `x[(i,j)][e]`, the link equip
//! counts `delta[e]` and the cooling indicators `xi[n]`. The objective is
//! `sum(delta) + C_C * sum(xi)`. A pair `{i, j}` is served jointly by the
//! ordered commodities `(i, j)` and `(j, i)`, whose combined delivery must
//! equal `K_ij + K_ji`; cooling node `m` lifts the warm capacity limit on
//! every edge entering `m`.

mod bnb;
mod lp_format;
mod model;
mod parametric;
mod solve;
mod verify;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{DirectedEdge, NetworkGraph, NodeKind};

pub use bnb::{BnbOutcome, BranchAndBound, Cut, IntegerVar, Separation};
pub use lp_format::write_lp;
pub use model::{ConstraintFamily, LinearRow, RowSense, VarRef};
pub use parametric::{optimal_over_costs, CoolingLine, CostPoint, ParametricOptimum};
pub use solve::{
    carries_demand, solve, solve_with_fixed_cooling, solve_with_fixed_cooling_within, FlowFormulation, SolverOptions,
};
pub use verify::{verify_solution, VerificationReport, Violation, VERIFY_TOLERANCE};

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("branch-and-bound node budget of {limit} exhausted")]
    BudgetExceeded { limit: usize },
    #[error("LP engine failure: {0}")]
    Lp(String),
}

/// Required key rate per ordered pair of nodes, in bit/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    node_count: usize,
    entries: Vec<f64>,
}

impl DemandMatrix {
    pub fn zeros(node_count: usize) -> Self {
        Self {
            node_count,
            entries: vec![0.0; node_count * node_count],
        }
    }

    /// Sets `K_ij`; negative or non-finite values and diagonal entries are
    /// rejected.
    pub fn set(&mut self, i: usize, j: usize, bps: f64) -> Result<(), MilpError> {
        if i >= self.node_count || j >= self.node_count || i == j {
            return Err(MilpError::Parameter(format!("invalid demand index ({i}, {j})")));
        }
        if !(bps >= 0.0 && bps.is_finite()) {
            return Err(MilpError::Parameter(format!("demand K_{i}{j} must be >= 0, got {bps}")));
        }
        self.entries[i * self.node_count + j] = bps;
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.node_count + j]
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        (0..self.node_count).map(|j| self.get(i, j)).sum()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// Unordered pairs `{i < j}` with positive combined demand.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.node_count;
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j) + self.get(j, i) > 0.0)
            .collect()
    }
}

/// Full demand matrix: every trusted node spreads `per_node_traffic` bit/s
/// evenly over the other trusted nodes. Relays carry no demand.
pub fn build_demands(graph: &NetworkGraph, per_node_traffic: f64) -> Result<DemandMatrix, MilpError> {
    let trusted = graph.trusted_ids();
    if trusted.len() < 2 {
        return Err(MilpError::Parameter(format!(
            "need at least 2 trusted nodes, got {}",
            trusted.len()
        )));
    }
    if !(per_node_traffic >= 0.0 && per_node_traffic.is_finite()) {
        return Err(MilpError::Parameter(format!(
            "per-node traffic must be >= 0, got {per_node_traffic}"
        )));
    }
    let share = per_node_traffic / (trusted.len() - 1) as f64;
    let mut k = DemandMatrix::zeros(graph.node_count());
    for &i in &trusted {
        for &j in &trusted {
            if i != j {
                k.set(i, j, share)?;
            }
        }
    }
    Ok(k)
}

/// Domain of the equip variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EquipMode {
    /// At most one QKD system per directed edge.
    Binary,
    /// Up to `max_links` parallel systems per directed edge.
    Integer { max_links: u32 },
}

impl EquipMode {
    pub fn max_links(self) -> u32 {
        match self {
            EquipMode::Binary => 1,
            EquipMode::Integer { max_links } => max_links,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOptions {
    pub equip_mode: EquipMode,
    /// Require integral flows in bit/s; flows are continuous otherwise.
    pub integral_flows: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            equip_mode: EquipMode::Binary,
            integral_flows: false,
        }
    }
}

/// One unordered trusted pair `{a, b}` with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commodity {
    pub a: usize,
    pub b: usize,
    /// `K_ab`
    pub demand_ab: f64,
    /// `K_ba`
    pub demand_ba: f64,
}

impl Commodity {
    pub fn total(&self) -> f64 {
        self.demand_ab + self.demand_ba
    }

    /// Source and destination of the ordered commodity `dir` (0: a to b, 1: b to a).
    pub fn endpoints(&self, dir: usize) -> (usize, usize) {
        if dir == 0 {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

/// The placement program for one graph, demand matrix and cooling cost.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementModel {
    pub node_kinds: Vec<NodeKind>,
    pub edges: Vec<DirectedEdge>,
    pub commodities: Vec<Commodity>,
    /// Cooling cost `C_C` in units of one equipped link.
    pub cooling_cost: f64,
    /// `sum over ordered pairs of K_ij`, the cooling relaxation weight.
    pub total_demand: f64,
    pub options: ModelOptions,
}

impl PlacementModel {
    pub fn node_count(&self) -> usize {
        self.node_kinds.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn flow_var_count(&self) -> usize {
        2 * self.commodities.len() * self.edges.len()
    }

    /// Index of `x[(i,j)][e]` in the flat flow vector, where `(i, j)` is the
    /// ordered commodity `dir` of `commodity`.
    pub fn flow_index(&self, commodity: usize, dir: usize, edge: usize) -> usize {
        (2 * commodity + dir) * self.edges.len() + edge
    }

    pub fn edges_into(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.to == node)
            .map(|(i, _)| i)
    }

    pub fn edges_out_of(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.from == node)
            .map(|(i, _)| i)
    }

    pub fn is_relay(&self, node: usize) -> bool {
        self.node_kinds[node] == NodeKind::Relay
    }
}

/// Builds the placement program for `graph` (capacities must be annotated).
pub fn build_model(
    graph: &NetworkGraph,
    demands: &DemandMatrix,
    cooling_cost: f64,
    options: ModelOptions,
) -> Result<PlacementModel, MilpError> {
    if demands.node_count() != graph.node_count() {
        return Err(MilpError::Parameter(format!(
            "demand matrix covers {} nodes, graph has {}",
            demands.node_count(),
            graph.node_count()
        )));
    }
    if !(cooling_cost >= 0.0 && cooling_cost.is_finite()) {
        return Err(MilpError::Parameter(format!(
            "cooling cost must be >= 0, got {cooling_cost}"
        )));
    }
    if let EquipMode::Integer { max_links: 0 } = options.equip_mode {
        return Err(MilpError::Parameter("max_links must be >= 1".into()));
    }
    let node_kinds: Vec<NodeKind> = graph.nodes.iter().map(|n| n.kind).collect();
    let commodities: Vec<Commodity> = demands
        .pairs()
        .into_iter()
        .map(|(a, b)| Commodity {
            a,
            b,
            demand_ab: demands.get(a, b),
            demand_ba: demands.get(b, a),
        })
        .collect();
    for c in &commodities {
        if node_kinds[c.a] == NodeKind::Relay || node_kinds[c.b] == NodeKind::Relay {
            return Err(MilpError::Parameter(format!(
                "relay node appears in demand pair ({}, {})",
                c.a, c.b
            )));
        }
    }
    Ok(PlacementModel {
        node_kinds,
        edges: graph.edges(),
        total_demand: demands.total(),
        commodities,
        cooling_cost,
        options,
    })
}

/// Outcome status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

/// Flow of one ordered commodity on one directed edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommodityFlow {
    /// `(source, destination)` of the ordered commodity.
    pub commodity: (usize, usize),
    /// Directed edge `(from, to)`.
    pub edge: (usize, usize),
    pub bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquippedLink {
    pub from: usize,
    pub to: usize,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes_explored: usize,
    pub lp_cuts: usize,
    #[serde(skip)]
    pub wall_time: std::time::Duration,
}

/// A solved placement. `objective` counts cooling only when cooling was a
/// decision (`cooling_fixed == false`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSolution {
    pub objective: f64,
    pub equipped_links: Vec<EquippedLink>,
    pub cooled_nodes: Vec<usize>,
    pub flows: Vec<CommodityFlow>,
    pub status: SolveStatus,
    pub cooling_fixed: bool,
    pub stats: SolveStats,
}

impl PlacementSolution {
    pub fn infeasible(cooling_fixed: bool, stats: SolveStats) -> Self {
        Self {
            objective: f64::INFINITY,
            equipped_links: Vec::new(),
            cooled_nodes: Vec::new(),
            flows: Vec::new(),
            status: SolveStatus::Infeasible,
            cooling_fixed,
            stats,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Number of QKD systems installed, `sum(delta)`.
    pub fn link_count(&self) -> u32 {
        self.equipped_links.iter().map(|l| l.count).sum()
    }

    /// `delta` per directed edge of `model`.
    pub fn equip_vector(&self, model: &PlacementModel) -> Vec<u32> {
        model
            .edges
            .iter()
            .map(|e| {
                self.equipped_links
                    .iter()
                    .find(|l| l.from == e.from && l.to == e.to)
                    .map_or(0, |l| l.count)
            })
            .collect()
    }

    /// `xi` per node of `model`.
    pub fn cooling_vector(&self, model: &PlacementModel) -> Vec<bool> {
        (0..model.node_count())
            .map(|n| self.cooled_nodes.contains(&n))
            .collect()
    }

    /// Dense flow vector indexed like [`PlacementModel::flow_index`].
    pub fn flow_vector(&self, model: &PlacementModel) -> Result<Vec<f64>, MilpError> {
        let mut x = vec![0.0; model.flow_var_count()];
        for f in &self.flows {
            let (c, dir) = model
                .commodities
                .iter()
                .enumerate()
                .find_map(|(ci, c)| (0..2).find(|&d| c.endpoints(d) == f.commodity).map(|d| (ci, d)))
                .ok_or_else(|| MilpError::Parameter(format!("unknown commodity {:?}", f.commodity)))?;
            let e = model
                .edges
                .iter()
                .position(|e| (e.from, e.to) == f.edge)
                .ok_or_else(|| MilpError::Parameter(format!("unknown edge {:?}", f.edge)))?;
            x[model.flow_index(c, dir, e)] += f.bps;
        }
        Ok(x)
    }

    /// Solution document: `{objective, equipped_links, cooled_nodes, flows, status}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            objective: Option<f64>,
            equipped_links: &'a [EquippedLink],
            cooled_nodes: &'a [usize],
            flows: &'a [CommodityFlow],
            status: SolveStatus,
            nodes_explored: usize,
        }
        serde_json::to_string_pretty(&Doc {
            objective: self.objective.is_finite().then_some(self.objective),
            equipped_links: &self.equipped_links,
            cooled_nodes: &self.cooled_nodes,
            flows: &self.flows,
            status: self.status,
            nodes_explored: self.stats.nodes_explored,
        })
        .expect("solution serializes")
    }
}
