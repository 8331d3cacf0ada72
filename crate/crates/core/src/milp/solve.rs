//! Exact solution of the placement program.
//!
//! The search runs on a source-aggregated copy of the program: the flows of
//! all commodities leaving the same trusted node share one flow vector, with
//! split variables `s_ij + s_ji = K_ij + K_ji` choosing how much of a pair
//! is delivered in each direction. Any aggregated flow decomposes into
//! simple source-to-destination paths, which satisfy every per-commodity row
//! of the full program, and the per-commodity flows reported in the solution
//! are produced by exactly that decomposition. The equip and cooling
//! variables, their capacity rows and the objective are unchanged.
//!
//! On top of the model rows the relaxation carries valid inequalities that do
//! not cut off any integer solution: per-source linking rows
//! `y_s[e] <= D_s delta[e]` and cut-set cardinality cuts separated at the
//! root.

use std::time::Instant;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use super::bnb::{BnbOutcome, BranchAndBound, Cut, IntegerVar, Separation};
use super::{CommodityFlow, EquippedLink, MilpError, PlacementModel, PlacementSolution, SolveStats, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Maximum number of branch-and-bound LP solves.
    pub node_limit: usize,
    pub integrality_tolerance: f64,
    /// Absolute objective tolerance used for pruning.
    pub objective_tolerance: f64,
    /// Rounds of cut separation at the root.
    pub root_cut_rounds: usize,
    /// Rounds of cut separation at every other node.
    pub node_cut_rounds: usize,
    /// Add the flow-to-equip linking rows to the compact relaxation.
    pub linking_rows: bool,
    /// Flow representation of the compact relaxation.
    pub formulation: FlowFormulation,
    /// Branch on fractional cooling variables before equip variables.
    pub branch_cooling_first: bool,
}

/// How commodity flows are represented inside the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowFormulation {
    /// One flow vector per source node.
    Aggregated,
    /// One flow vector per ordered commodity, with pair-level linking rows.
    PerCommodity,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            node_limit: 1_000_000,
            integrality_tolerance: 1e-6,
            objective_tolerance: 1e-6,
            root_cut_rounds: 50,
            node_cut_rounds: 5,
            linking_rows: true,
            formulation: FlowFormulation::Aggregated,
            branch_cooling_first: true,
        }
    }
}

/// Exhaustive cut-set enumeration up to this many nodes.
const FULL_CUT_ENUMERATION_NODES: usize = 18;
const CUTS_PER_ROUND: usize = 60;
const FLOW_EPS: f64 = 1e-9;

/// A flow vector shared by the ordered commodities it delivers.
struct Block {
    source: usize,
    /// `(commodity, dir)` pairs delivered by this block.
    deliveries: Vec<(usize, usize)>,
}

enum Capacity {
    /// Cooling is a decision.
    Free,
    /// Cooling pinned per node.
    Pinned(Vec<bool>),
    /// Equipping and cooling fixed; installed capacity per edge in bit/s.
    Fixed(Vec<f64>),
}

struct Formulation<'m> {
    model: &'m PlacementModel,
    problem: Problem,
    /// Scale from bit/s to LP units.
    scale: f64,
    blocks: Vec<Block>,
    /// `flows[b][e]`; `None` for edges the block can never use.
    flows: Vec<Vec<Option<Variable>>>,
    /// Per commodity: amount sent a->b and b->a.
    splits: Vec<[Variable; 2]>,
    delta: Vec<Variable>,
    xi: Option<Vec<Variable>>,
    fixed_cooling: Option<Vec<bool>>,
    integers: Vec<IntegerVar>,
}

impl<'m> Formulation<'m> {
    fn build(model: &'m PlacementModel, capacity: Capacity, options: &SolverOptions) -> Self {
        let fixed_cooling = match &capacity {
            Capacity::Pinned(c) => Some(c.clone()),
            _ => None,
        };
        let fixed_caps = match &capacity {
            Capacity::Fixed(c) => Some(c.clone()),
            _ => None,
        };
        let integral = model.options.integral_flows;
        let scale = if integral { 1.0 } else { 1e-3 };
        let max_links = model.options.equip_mode.max_links() as f64;
        let binary_equip = model.options.equip_mode.max_links() == 1;
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        let mut integers = Vec::new();

        let blocks: Vec<Block> = match options.formulation {
            FlowFormulation::Aggregated => {
                let mut sources: Vec<usize> = model.commodities.iter().flat_map(|c| [c.a, c.b]).collect();
                sources.sort_unstable();
                sources.dedup();
                sources
                    .into_iter()
                    .map(|s| Block {
                        source: s,
                        deliveries: model
                            .commodities
                            .iter()
                            .enumerate()
                            .filter_map(|(ci, c)| (0..2).find(|&d| c.endpoints(d).0 == s).map(|d| (ci, d)))
                            .collect(),
                    })
                    .collect()
            }
            FlowFormulation::PerCommodity => (0..model.commodities.len())
                .flat_map(|ci| {
                    (0..2).map(move |dir| Block {
                        source: model.commodities[ci].endpoints(dir).0,
                        deliveries: vec![(ci, dir)],
                    })
                })
                .collect(),
        };

        let flows: Vec<Vec<Option<Variable>>> = blocks
            .iter()
            .map(|b| {
                let sink = match b.deliveries.as_slice() {
                    [(ci, dir)] => Some(model.commodities[*ci].endpoints(*dir).1),
                    _ => None,
                };
                model
                    .edges
                    .iter()
                    .map(|e| {
                        (e.to != b.source && Some(e.from) != sink).then(|| {
                            let v = problem.add_var(0.0, (0.0, f64::INFINITY));
                            if integral {
                                integers.push(IntegerVar {
                                    var: v,
                                    binary: false,
                                    priority: 0,
                                });
                            }
                            v
                        })
                    })
                    .collect()
            })
            .collect();
        let splits: Vec<[Variable; 2]> = model
            .commodities
            .iter()
            .map(|c| {
                let total = c.total() * scale;
                let pair = [problem.add_var(0.0, (0.0, total)), problem.add_var(0.0, (0.0, total))];
                if integral {
                    integers.extend(pair.iter().map(|&var| IntegerVar {
                        var,
                        binary: false,
                        priority: 0,
                    }));
                }
                pair
            })
            .collect();
        let delta: Vec<Variable> = match fixed_caps {
            Some(_) => Vec::new(),
            None => model
                .edges
                .iter()
                .map(|_| problem.add_var(1.0, (0.0, max_links)))
                .collect(),
        };
        let xi: Option<Vec<Variable>> = matches!(capacity, Capacity::Free).then(|| {
            (0..model.node_count())
                .map(|_| problem.add_var(model.cooling_cost, (0.0, 1.0)))
                .collect()
        });
        // equip variables come first so the branching order is edge order then nodes
        let flow_ints = std::mem::take(&mut integers);
        integers.extend(delta.iter().map(|&var| IntegerVar {
            var,
            binary: binary_equip,
            priority: 0,
        }));
        if let Some(xi) = &xi {
            integers.extend(xi.iter().map(|&var| IntegerVar {
                var,
                binary: true,
                priority: options.branch_cooling_first as u8,
            }));
        }
        integers.extend(flow_ints);

        for (ci, c) in model.commodities.iter().enumerate() {
            problem.add_constraint(
                [(splits[ci][0], 1.0), (splits[ci][1], 1.0)],
                ComparisonOp::Eq,
                c.total() * scale,
            );
        }

        for (bi, b) in blocks.iter().enumerate() {
            for v in (0..model.node_count()).filter(|&v| v != b.source) {
                let mut terms: Vec<(Variable, f64)> = Vec::new();
                for (ei, e) in model.edges.iter().enumerate() {
                    if let Some(var) = flows[bi][ei] {
                        if e.to == v {
                            terms.push((var, 1.0));
                        } else if e.from == v {
                            terms.push((var, -1.0));
                        }
                    }
                }
                for &(ci, dir) in &b.deliveries {
                    if model.commodities[ci].endpoints(dir).1 == v {
                        terms.push((splits[ci][dir], -1.0));
                    }
                }
                if !terms.is_empty() {
                    problem.add_constraint(terms, ComparisonOp::Eq, 0.0);
                }
            }
        }

        let total_demand = model.total_demand * scale;
        let block_reach: Vec<f64> = blocks
            .iter()
            .map(|b| {
                b.deliveries
                    .iter()
                    .map(|&(ci, _)| model.commodities[ci].total() * scale)
                    .sum()
            })
            .collect();
        for (ei, e) in model.edges.iter().enumerate() {
            let load: Vec<(Variable, f64)> = flows.iter().filter_map(|f| f[ei]).map(|v| (v, 1.0)).collect();
            if load.is_empty() {
                continue;
            }
            let c_cold = e.capacity_cold * scale;
            let c_warm = e.capacity_warm * scale;
            if let Some(caps) = &fixed_caps {
                problem.add_constraint(load, ComparisonOp::Le, caps[ei] * scale);
                continue;
            }
            let effective = match &fixed_cooling {
                Some(cooled) if cooled[e.to] => {
                    let mut cold = load.clone();
                    cold.push((delta[ei], -c_cold));
                    problem.add_constraint(cold, ComparisonOp::Le, 0.0);
                    let mut warm = load.clone();
                    warm.push((delta[ei], -c_warm));
                    problem.add_constraint(warm, ComparisonOp::Le, total_demand);
                    c_cold.min(c_warm + total_demand)
                }
                Some(_) => {
                    let mut terms = load.clone();
                    terms.push((delta[ei], -c_warm));
                    problem.add_constraint(terms, ComparisonOp::Le, 0.0);
                    c_warm
                }
                None => {
                    let mut cold = load.clone();
                    cold.push((delta[ei], -c_cold));
                    problem.add_constraint(cold, ComparisonOp::Le, 0.0);
                    let big_m = total_demand.min(max_links * (c_cold - c_warm)).max(0.0);
                    let mut warm = load.clone();
                    warm.push((delta[ei], -c_warm));
                    warm.push((xi.as_ref().expect("free cooling")[e.to], -big_m));
                    problem.add_constraint(warm, ComparisonOp::Le, 0.0);
                    c_cold.min(c_warm + total_demand)
                }
            };
            if !options.linking_rows {
                continue;
            }
            match options.formulation {
                FlowFormulation::Aggregated => {
                    for (bi, f) in flows.iter().enumerate() {
                        if let Some(var) = f[ei] {
                            if block_reach[bi] < effective {
                                problem.add_constraint(
                                    [(var, 1.0), (delta[ei], -block_reach[bi])],
                                    ComparisonOp::Le,
                                    0.0,
                                );
                            }
                        }
                    }
                }
                FlowFormulation::PerCommodity => {
                    // blocks come in (dir 0, dir 1) pairs per commodity
                    for (ci, c) in model.commodities.iter().enumerate() {
                        let reach = c.total() * scale;
                        if reach >= effective {
                            continue;
                        }
                        let mut terms: Vec<(Variable, f64)> = [&flows[2 * ci], &flows[2 * ci + 1]]
                            .iter()
                            .filter_map(|f| f[ei])
                            .map(|v| (v, 1.0))
                            .collect();
                        if terms.is_empty() {
                            continue;
                        }
                        terms.push((delta[ei], -reach));
                        problem.add_constraint(terms, ComparisonOp::Le, 0.0);
                    }
                }
            }
        }

        Self {
            model,
            problem,
            scale,
            blocks,
            flows,
            splits,
            delta,
            xi,
            fixed_cooling,
            integers,
        }
    }

    fn objective_lattice(&self) -> impl Fn(f64) -> f64 + 'static {
        let cc = self.model.cooling_cost;
        let free = self.xi.is_some();
        let n = self.model.node_count();
        move |bound: f64| {
            if !free || cc == 0.0 {
                return bound.ceil().max(0.0);
            }
            (0..=n)
                .map(|k| (bound - k as f64 * cc).ceil().max(0.0) + k as f64 * cc)
                .fold(f64::INFINITY, f64::min)
        }
    }

    fn rounder(&self) -> impl FnMut(&[f64], Option<f64>) -> Result<Option<(f64, Vec<f64>)>, MilpError> + '_ {
        move |values: &[f64], _| {
            if self.model.options.integral_flows {
                return Ok(None);
            }
            let mut out = values.to_vec();
            let mut obj = 0.0;
            for &d in &self.delta {
                let v = (values[d.idx()] - 1e-9).ceil().max(0.0);
                out[d.idx()] = v;
                obj += v;
            }
            if let Some(xi) = &self.xi {
                for &x in xi {
                    let v = (values[x.idx()] - 1e-9).ceil().clamp(0.0, 1.0);
                    out[x.idx()] = v;
                    obj += v * self.model.cooling_cost;
                }
            }
            Ok(Some((obj, out)))
        }
    }

    /// Cut-set cardinality cuts for every node set `S` (or singletons and
    /// linked pairs on large graphs). Below the root, sets whose boundary
    /// holds fixed equip variables also get local cuts over the free ones.
    fn separator(&self) -> impl FnMut(&[f64], bool, &[Option<bool>]) -> Result<Separation, MilpError> + '_ {
        let model = self.model;
        let n = model.node_count();
        let masks: Vec<u64> = if n <= FULL_CUT_ENUMERATION_NODES {
            (1..(1u64 << (n - 1))).collect()
        } else {
            let mut s: Vec<u64> = (0..n.min(63)).map(|v| 1u64 << v).collect();
            for e in &model.edges {
                if e.from < e.to && e.to < 63 {
                    s.push((1u64 << e.from) | (1u64 << e.to));
                }
            }
            s
        };
        let sets: Vec<(Vec<usize>, f64, usize, usize)> = masks
            .into_iter()
            .filter_map(|mask| {
                let (crossing, k_warm, k_cold) = self.set_cover(mask)?;
                Some((crossing, self.crossing_demand(mask), k_warm, k_cold))
            })
            .collect();
        let m = model.edges.len();
        let max_links = model.options.equip_mode.max_links() as usize;
        move |values: &[f64], integral: bool, fixed: &[Option<bool>]| {
            let mut found: Vec<(f64, Cut)> = Vec::new();
            let mut local: Vec<(f64, Cut)> = Vec::new();
            if integral {
                return Ok(Separation::default());
            }
            let any_fixed = fixed[..m].iter().any(Option::is_some)
                || (self.xi.is_some() && fixed[m..m + n].iter().any(Option::is_some));
            for (crossing, demand, k_warm, k_cold) in &sets {
                let (k_warm, k_cold) = (*k_warm, *k_cold);
                let lhs: f64 = crossing.iter().map(|&ei| values[self.delta[ei].idx()]).sum();
                match &self.xi {
                    None => {
                        if lhs < k_warm as f64 - 1e-6 {
                            let terms = crossing.iter().map(|&ei| (self.delta[ei], 1.0)).collect();
                            found.push((k_warm as f64 - lhs, (terms, ComparisonOp::Ge, k_warm as f64)));
                        }
                    }
                    Some(xi) => {
                        if lhs < k_cold as f64 - 1e-6 {
                            let terms = crossing.iter().map(|&ei| (self.delta[ei], 1.0)).collect();
                            found.push((k_cold as f64 - lhs, (terms, ComparisonOp::Ge, k_cold as f64)));
                        }
                        if k_warm > k_cold {
                            let gap = (k_warm - k_cold) as f64;
                            let mut heads: Vec<usize> = crossing.iter().map(|&ei| model.edges[ei].to).collect();
                            heads.sort_unstable();
                            heads.dedup();
                            let with_xi = lhs + gap * heads.iter().map(|&h| values[xi[h].idx()]).sum::<f64>();
                            if with_xi < k_warm as f64 - 1e-6 {
                                let mut terms: Vec<(Variable, f64)> =
                                    crossing.iter().map(|&ei| (self.delta[ei], 1.0)).collect();
                                terms.extend(heads.iter().map(|&h| (xi[h], gap)));
                                found.push((k_warm as f64 - with_xi, (terms, ComparisonOp::Ge, k_warm as f64)));
                            }
                        }
                    }
                }
                if !any_fixed {
                    continue;
                }
                // capacity still missing once fixed links are accounted for
                let mut missing = *demand;
                let mut fixed_on = 0usize;
                let mut free: Vec<usize> = Vec::new();
                let mut touched = false;
                for &ei in crossing {
                    let head = model.edges[ei].to;
                    let head_cool = match (&self.fixed_cooling, &self.xi) {
                        (Some(c), _) => Some(c[head]),
                        (None, Some(_)) => fixed[m + head],
                        _ => Some(false),
                    };
                    if self.xi.is_some() && fixed[m + head].is_some() {
                        touched = true;
                    }
                    let cap = match head_cool {
                        Some(false) => model.edges[ei].capacity_warm * self.scale,
                        _ => self.cooled_capacity(ei),
                    };
                    match fixed[ei] {
                        Some(false) => touched = true,
                        Some(true) => {
                            touched = true;
                            fixed_on += 1;
                            missing -= cap;
                        }
                        None => free.push(ei),
                    }
                }
                if !touched {
                    continue;
                }
                let caps: Vec<f64> = free
                    .iter()
                    .map(|&ei| {
                        let head = model.edges[ei].to;
                        let warm = match (&self.fixed_cooling, &self.xi) {
                            (Some(c), _) => !c[head],
                            (None, Some(_)) => fixed[m + head] == Some(false),
                            _ => true,
                        };
                        if warm {
                            model.edges[ei].capacity_warm * self.scale
                        } else {
                            self.cooled_capacity(ei)
                        }
                    })
                    .collect();
                let need = if missing <= 0.0 {
                    0
                } else {
                    min_cover(&caps, max_links, missing)
                };
                let rhs = (fixed_on + need) as f64;
                let lhs: f64 = fixed_on as f64 + free.iter().map(|&ei| values[self.delta[ei].idx()]).sum::<f64>();
                if lhs < rhs - 1e-6 {
                    let terms = free.iter().map(|&ei| (self.delta[ei], 1.0)).collect();
                    local.push((rhs - lhs, (terms, ComparisonOp::Ge, need as f64)));
                }
            }
            if n < 64 {
                found.extend(self.partition_cuts(values));
            }
            let best = |mut v: Vec<(f64, Cut)>| {
                v.sort_by(|a, b| b.0.total_cmp(&a.0));
                v.truncate(CUTS_PER_ROUND);
                v.into_iter().map(|(_, c)| c).collect::<Vec<Cut>>()
            };
            Ok(Separation {
                global: best(found),
                local: best(local),
            })
        }
    }

    fn cooled_capacity(&self, ei: usize) -> f64 {
        let e = &self.model.edges[ei];
        e.capacity_cold.min(e.capacity_warm + self.model.total_demand) * self.scale
    }

    fn crossing_demand(&self, mask: u64) -> f64 {
        let inside = |v: usize| v < 64 && mask & (1u64 << v) != 0;
        self.model
            .commodities
            .iter()
            .filter(|c| inside(c.a) != inside(c.b))
            .map(|c| c.total() * self.scale)
            .sum()
    }

    /// Edges crossing the boundary of `mask` and the fewest warm and cooled
    /// links that can carry the demand across it; `None` without demand.
    fn set_cover(&self, mask: u64) -> Option<(Vec<usize>, usize, usize)> {
        let model = self.model;
        let max_links = model.options.equip_mode.max_links() as usize;
        let inside = |v: usize| v < 64 && mask & (1u64 << v) != 0;
        let demand: f64 = model
            .commodities
            .iter()
            .filter(|c| inside(c.a) != inside(c.b))
            .map(|c| c.total() * self.scale)
            .sum();
        if demand <= 0.0 {
            return None;
        }
        let crossing: Vec<usize> = (0..model.edges.len())
            .filter(|&ei| inside(model.edges[ei].from) != inside(model.edges[ei].to))
            .collect();
        let cooled_cap = |ei: usize| {
            let e = &model.edges[ei];
            e.capacity_cold.min(e.capacity_warm + model.total_demand) * self.scale
        };
        let warm_caps: Vec<f64> = crossing
            .iter()
            .map(|&ei| {
                if self.fixed_cooling.as_ref().is_some_and(|c| c[model.edges[ei].to]) {
                    cooled_cap(ei)
                } else {
                    model.edges[ei].capacity_warm * self.scale
                }
            })
            .collect();
        let cold_caps: Vec<f64> = crossing.iter().map(|&ei| cooled_cap(ei)).collect();
        let k_warm = min_cover(&warm_caps, max_links, demand);
        let k_cold = min_cover(&cold_caps, max_links, demand);
        Some((crossing, k_warm, k_cold))
    }

    /// Partition cuts: for a partition of the nodes into parts that each hold
    /// a trusted node, the links between parts must connect them
    /// (`p - 1`) and cover every part's boundary, each link touching two
    /// boundaries. Candidate partitions come from merging nodes along links
    /// in decreasing order of their LP weight.
    fn partition_cuts(&self, values: &[f64]) -> Vec<(f64, Cut)> {
        let model = self.model;
        let n = model.node_count();
        let mut trusted = vec![false; n];
        for c in model.commodities.iter().filter(|c| c.total() > 0.0) {
            trusted[c.a] = true;
            trusted[c.b] = true;
        }
        let mut weight: Vec<((usize, usize), f64)> = Vec::new();
        for (ei, e) in model.edges.iter().enumerate() {
            let key = (e.from.min(e.to), e.from.max(e.to));
            let w = values[self.delta[ei].idx()];
            match weight.iter_mut().find(|(k, _)| *k == key) {
                Some((_, acc)) => *acc += w,
                None => weight.push((key, w)),
            }
        }
        weight.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut comp: Vec<usize> = (0..n).collect();
        let mut out: Vec<(f64, Cut)> = Vec::new();
        let mut seen: Vec<Vec<u64>> = Vec::new();
        for step in 0..=weight.len() {
            if step > 0 {
                let ((a, b), _) = weight[step - 1];
                let (ca, cb) = (comp[a], comp[b]);
                if ca == cb {
                    continue;
                }
                for c in comp.iter_mut() {
                    if *c == cb {
                        *c = ca;
                    }
                }
            }
            // parts without a trusted node join the neighbour they are most
            // strongly linked to
            let mut part = comp.clone();
            loop {
                let mut has_trusted = vec![false; n];
                for v in 0..n {
                    if trusted[v] {
                        has_trusted[part[v]] = true;
                    }
                }
                let orphan = (0..n).find(|&v| !has_trusted[part[v]]);
                let Some(v) = orphan else { break };
                let from = part[v];
                let target = weight
                    .iter()
                    .filter(|((a, b), _)| (part[*a] == from) != (part[*b] == from))
                    .map(|((a, b), _)| if part[*a] == from { part[*b] } else { part[*a] })
                    .next();
                let Some(to) = target else { return out };
                for p in part.iter_mut() {
                    if *p == from {
                        *p = to;
                    }
                }
            }
            let mut masks: Vec<u64> = Vec::new();
            for v in 0..n {
                let m = (0..n)
                    .filter(|&u| part[u] == part[v])
                    .fold(0u64, |m, u| m | (1u64 << u));
                if !masks.contains(&m) {
                    masks.push(m);
                }
            }
            masks.sort_unstable();
            if masks.len() < 2 || seen.contains(&masks) {
                continue;
            }
            let mut boundary = 0usize;
            for &m in &masks {
                if let Some((_, k_warm, k_cold)) = self.set_cover(m) {
                    boundary += if self.xi.is_some() { k_cold } else { k_warm };
                }
            }
            seen.push(masks.clone());
            let rhs = ((masks.len() - 1) as f64).max(boundary.div_ceil(2) as f64);
            let crossing: Vec<usize> = (0..model.edges.len())
                .filter(|&ei| part[model.edges[ei].from] != part[model.edges[ei].to])
                .collect();
            let lhs: f64 = crossing.iter().map(|&ei| values[self.delta[ei].idx()]).sum();
            if lhs < rhs - 1e-6 {
                let terms = crossing.iter().map(|&ei| (self.delta[ei], 1.0)).collect();
                out.push((rhs - lhs, (terms, ComparisonOp::Ge, rhs)));
            }
        }
        out
    }

    fn extract(&self, values: &[f64], stats: SolveStats) -> PlacementSolution {
        let model = self.model;
        let equipped_links: Vec<EquippedLink> = model
            .edges
            .iter()
            .zip(&self.delta)
            .filter_map(|(e, d)| {
                let count = values[d.idx()].round() as u32;
                (count > 0).then_some(EquippedLink {
                    from: e.from,
                    to: e.to,
                    count,
                })
            })
            .collect();
        let cooled_nodes: Vec<usize> = match (&self.xi, &self.fixed_cooling) {
            (Some(xi), _) => (0..model.node_count()).filter(|&n| values[xi[n].idx()] > 0.5).collect(),
            (None, Some(fixed)) => (0..model.node_count()).filter(|&n| fixed[n]).collect(),
            (None, None) => Vec::new(),
        };
        let links: u32 = equipped_links.iter().map(|l| l.count).sum();
        let objective = if self.xi.is_some() {
            links as f64 + model.cooling_cost * cooled_nodes.len() as f64
        } else {
            links as f64
        };
        let flows = if model.options.integral_flows {
            self.decompose(values)
        } else {
            let equip: Vec<f64> = self.delta.iter().map(|d| values[d.idx()].round()).collect();
            let cooled: Vec<bool> = (0..model.node_count()).map(|n| cooled_nodes.contains(&n)).collect();
            polished_flows(model, &equip, &cooled).unwrap_or_else(|| self.decompose(values))
        };
        PlacementSolution {
            objective,
            equipped_links,
            cooled_nodes,
            flows,
            status: SolveStatus::Optimal,
            cooling_fixed: self.xi.is_none(),
            stats,
        }
    }

    /// Splits each block's flow into per-commodity path flows.
    fn decompose(&self, values: &[f64]) -> Vec<CommodityFlow> {
        let model = self.model;
        let m = model.edges.len();
        let mut per_commodity: Vec<[Vec<f64>; 2]> =
            model.commodities.iter().map(|_| [vec![0.0; m], vec![0.0; m]]).collect();
        let snap = |v: f64| {
            if self.model.options.integral_flows {
                v.round()
            } else {
                v
            }
        };
        for (bi, b) in self.blocks.iter().enumerate() {
            let s = b.source;
            let mut flow: Vec<f64> = self.flows[bi]
                .iter()
                .map(|v| v.map_or(0.0, |v| snap(values[v.idx()]).max(0.0)))
                .collect();
            cancel_cycles(model, &mut flow);
            let mut remaining = vec![0.0; model.node_count()];
            let mut target_of = vec![None; model.node_count()];
            for &(ci, dir) in &b.deliveries {
                let t = model.commodities[ci].endpoints(dir).1;
                remaining[t] = snap(values[self.splits[ci][dir].idx()]).max(0.0);
                target_of[t] = Some((ci, dir));
            }
            loop {
                if !remaining.iter().any(|&r| r > FLOW_EPS) {
                    break;
                }
                let mut path = Vec::new();
                let mut at = s;
                let mut seen = vec![false; model.node_count()];
                seen[s] = true;
                let delivered_to = loop {
                    if at != s && remaining[at] > FLOW_EPS {
                        break Some(at);
                    }
                    let next = model
                        .edges
                        .iter()
                        .enumerate()
                        .find(|(ei, e)| e.from == at && flow[*ei] > FLOW_EPS && !seen[e.to]);
                    match next {
                        Some((ei, e)) => {
                            path.push(ei);
                            at = e.to;
                            seen[at] = true;
                        }
                        None => break None,
                    }
                };
                let Some(t) = delivered_to else { break };
                let amount = path.iter().map(|&ei| flow[ei]).fold(remaining[t], f64::min);
                remaining[t] -= amount;
                let (ci, dir) = target_of[t].expect("positive remainder implies a commodity");
                for &ei in &path {
                    flow[ei] -= amount;
                    per_commodity[ci][dir][ei] += amount;
                }
            }
        }
        let mut out = Vec::new();
        for (ci, c) in model.commodities.iter().enumerate() {
            for dir in 0..2 {
                for (ei, e) in model.edges.iter().enumerate() {
                    let v = per_commodity[ci][dir][ei];
                    if v > FLOW_EPS {
                        let bps = v / self.scale;
                        out.push(CommodityFlow {
                            commodity: c.endpoints(dir),
                            edge: (e.from, e.to),
                            bps: if self.model.options.integral_flows {
                                bps.round()
                            } else {
                                bps
                            },
                        });
                    }
                }
            }
        }
        out
    }
}

/// Removes directed cycles of positive flow.
fn cancel_cycles(model: &PlacementModel, flow: &mut [f64]) {
    let n = model.node_count();
    loop {
        // iterative DFS looking for a back edge
        let mut state = vec![0u8; n];
        let mut parent_edge = vec![usize::MAX; n];
        let mut cycle: Option<Vec<usize>> = None;
        'outer: for root in 0..n {
            if state[root] != 0 {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            state[root] = 1;
            while let Some(&mut (u, ref mut next)) = stack.last_mut() {
                let mut advanced = false;
                while *next < model.edges.len() {
                    let ei = *next;
                    *next += 1;
                    let e = &model.edges[ei];
                    if e.from != u || flow[ei] <= FLOW_EPS {
                        continue;
                    }
                    match state[e.to] {
                        0 => {
                            state[e.to] = 1;
                            parent_edge[e.to] = ei;
                            stack.push((e.to, 0));
                            advanced = true;
                            break;
                        }
                        1 => {
                            let mut edges = vec![ei];
                            let mut v = u;
                            while v != e.to {
                                let pe = parent_edge[v];
                                edges.push(pe);
                                v = model.edges[pe].from;
                            }
                            cycle = Some(edges);
                            break 'outer;
                        }
                        _ => {}
                    }
                }
                if !advanced {
                    state[u] = 2;
                    stack.pop();
                }
            }
        }
        match cycle {
            Some(edges) => {
                let amount = edges.iter().map(|&ei| flow[ei]).fold(f64::INFINITY, f64::min);
                for ei in edges {
                    flow[ei] -= amount;
                }
            }
            None => return,
        }
    }
}

/// Fewest capacities (each usable `multiplicity` times) summing to `demand`;
/// one more than available when even all of them fall short.
pub(crate) fn min_cover(caps: &[f64], multiplicity: usize, demand: f64) -> usize {
    let mut sorted = caps.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut count = 0;
    for c in sorted {
        for _ in 0..multiplicity {
            if acc >= demand * (1.0 - 1e-12) {
                return count;
            }
            acc += c;
            count += 1;
        }
    }
    if acc >= demand * (1.0 - 1e-12) {
        count
    } else {
        count + 1
    }
}

/// Capacity held back from every edge when routing the final flows, so that
/// rescaling each commodity to its exact demand stays within the rows.
const CAPACITY_MARGIN_BPS: f64 = 1e-3;

/// Usable capacity of every edge (bit/s) under a fixed equip and cooling
/// assignment.
pub(crate) fn installed_capacities(model: &PlacementModel, equip: &[f64], cooled: &[bool]) -> Vec<f64> {
    model
        .edges
        .iter()
        .zip(equip)
        .map(|(e, &d)| {
            let relief = if cooled[e.to] { model.total_demand } else { 0.0 };
            (e.capacity_cold * d).min(e.capacity_warm * d + relief)
        })
        .collect()
}

/// Routes the demand over fixed edge capacities (bit/s). Returns the
/// per-commodity flows, or `None` when the capacities cannot carry it.
pub(crate) fn flow_lp(model: &PlacementModel, capacities: &[f64]) -> Result<Option<Vec<CommodityFlow>>, MilpError> {
    let options = SolverOptions {
        linking_rows: false,
        formulation: FlowFormulation::Aggregated,
        ..SolverOptions::default()
    };
    let form = Formulation::build(model, Capacity::Fixed(capacities.to_vec()), &options);
    match form.problem.solve() {
        Ok(o) => {
            let sol = o
                .into_solution()
                .map_err(|_| MilpError::Lp("LP solve interrupted".into()))?;
            let values: Vec<f64> = sol.iter().map(|(_, v)| v).collect();
            Ok(Some(form.decompose(&values)))
        }
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(MilpError::Lp(e.to_string())),
    }
}

/// Whether the demand can be routed with `equip[e]` links on each directed
/// edge and the given nodes cooled.
pub fn carries_demand(model: &PlacementModel, equip: &[u32], cooled: &[usize]) -> Result<bool, MilpError> {
    if equip.len() != model.edge_count() {
        return Err(MilpError::Parameter(format!(
            "{} equip counts for {} edges",
            equip.len(),
            model.edge_count()
        )));
    }
    let mask = cooling_mask(model, cooled)?;
    let equip: Vec<f64> = equip.iter().map(|&d| d as f64).collect();
    Ok(flow_lp(model, &installed_capacities(model, &equip, &mask))?.is_some())
}

/// Path flows for a solved assignment, routed with a small capacity margin
/// and rescaled so every commodity delivers exactly its demand.
fn polished_flows(model: &PlacementModel, equip: &[f64], cooled: &[bool]) -> Option<Vec<CommodityFlow>> {
    let caps = installed_capacities(model, equip, cooled);
    let shrunk: Vec<f64> = caps.iter().map(|c| (c - CAPACITY_MARGIN_BPS).max(0.0)).collect();
    let mut flows = flow_lp(model, &shrunk).ok().flatten()?;
    let mut delivered = vec![0.0; model.commodities.len()];
    let index = |pair: (usize, usize)| {
        model
            .commodities
            .iter()
            .position(|c| (c.a, c.b) == pair || (c.b, c.a) == pair)
            .expect("flow of a known commodity")
    };
    for f in &flows {
        let (src, _) = f.commodity;
        if f.edge.0 == src {
            delivered[index(f.commodity)] += f.bps;
        }
    }
    for f in &mut flows {
        let ci = index(f.commodity);
        f.bps *= model.commodities[ci].total() / delivered[ci];
    }
    Some(flows)
}

fn run(
    model: &PlacementModel,
    fixed_cooling: Option<Vec<bool>>,
    cutoff: Option<f64>,
    options: &SolverOptions,
) -> Result<PlacementSolution, MilpError> {
    let started = Instant::now();
    let cooling_fixed = fixed_cooling.is_some();
    let capacity = match fixed_cooling {
        Some(c) => Capacity::Pinned(c),
        None => Capacity::Free,
    };
    let form = Formulation::build(model, capacity, options);
    let mut search = BranchAndBound::new(&form.problem, form.integers.clone());
    if let Some(c) = cutoff {
        search = search.cutoff(c);
    }
    let outcome = search
        .node_limit(options.node_limit)
        .tolerances(options.integrality_tolerance, options.objective_tolerance)
        .objective_lattice(form.objective_lattice())
        .rounding(form.rounder())
        .separator(options.root_cut_rounds, options.node_cut_rounds, form.separator())
        .run()?;
    Ok(match outcome {
        BnbOutcome::Optimal {
            values, nodes, cuts, ..
        } => form.extract(
            &values,
            SolveStats {
                nodes_explored: nodes,
                lp_cuts: cuts,
                wall_time: started.elapsed(),
            },
        ),
        BnbOutcome::Infeasible { nodes } => PlacementSolution::infeasible(
            cooling_fixed,
            SolveStats {
                nodes_explored: nodes,
                lp_cuts: 0,
                wall_time: started.elapsed(),
            },
        ),
    })
}

/// Provably optimal equipping and cooling placement.
pub fn solve(model: &PlacementModel, options: &SolverOptions) -> Result<PlacementSolution, MilpError> {
    run(model, None, None, options)
}

/// Optimal equipping with the cooled node set pinned. The objective counts
/// equipped links only.
pub fn solve_with_fixed_cooling(
    model: &PlacementModel,
    cooled: &[usize],
    options: &SolverOptions,
) -> Result<PlacementSolution, MilpError> {
    run(model, Some(cooling_mask(model, cooled)?), None, options)
}

/// Like [`solve_with_fixed_cooling`] but only searches for placements with at
/// most `max_links` equipped links. Returns `None` when there is none.
pub fn solve_with_fixed_cooling_within(
    model: &PlacementModel,
    cooled: &[usize],
    max_links: u32,
    options: &SolverOptions,
) -> Result<Option<PlacementSolution>, MilpError> {
    let s = run(
        model,
        Some(cooling_mask(model, cooled)?),
        Some(max_links as f64),
        options,
    )?;
    Ok(s.is_optimal().then_some(s))
}

fn cooling_mask(model: &PlacementModel, cooled: &[usize]) -> Result<Vec<bool>, MilpError> {
    let mut fixed = vec![false; model.node_count()];
    for &n in cooled {
        if n >= model.node_count() {
            return Err(MilpError::Parameter(format!("cooled node {n} not in the graph")));
        }
        fixed[n] = true;
    }
    Ok(fixed)
}
